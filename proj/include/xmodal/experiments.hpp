#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xmodal/common.hpp"
#include "xmodal/forest.hpp"
#include "xmodal/ontology.hpp"
#include "xmodal/pca.hpp"
#include "xmodal/retrieval.hpp"
#include "xmodal/store.hpp"
#include "xmodal/translation.hpp"

namespace xmodal {

/// Feature rows with canonical class indices.
struct LabeledSet {
  Matrix x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
};

/// Canonical class index of every row; each sample must carry exactly one class label.
std::vector<int> class_labels(const StoreView& view, const Ontology& ontology);
LabeledSet labeled(const StoreView& view, const Ontology& ontology);
LabeledSet concat(const LabeledSet& a, const LabeledSet& b);

/// Store rows pushed through a projector; metas are kept, embedding_model becomes `tag`.
EmbeddingStore translate_store(const TranslationModel& model, const EmbeddingStore& store);
EmbeddingStore pca_store(const PcaModel& model, const EmbeddingStore& store);

// ---------------------------------------------------------------------------------------
// Embedding-combination study

struct ModelStores {
  std::string name;
  EmbeddingStore translation;  // pairs for training the translation model
  EmbeddingStore crossmodal;   // retrieval evaluation pool
};

struct ComboRow {
  std::string kind;  // "translated", "no_translation", "random"
  std::string audio_model;
  std::string image_model;
  double ndcg_audio_to_image = 0.0;
  double ndcg_image_to_audio = 0.0;

  double mean() const { return 0.5 * (ndcg_audio_to_image + ndcg_image_to_audio); }
};

struct ComboStudyConfig {
  TrainConfig train;
  RelevanceConfig relevance;
  int k = 30;
  std::uint64_t seed = 0;
};

/// Trains one translation model per (audio, image) model pair and scores it with cross-modal
/// retrieval. Adds a random-permutation row and, if a same-dim baseline pair is supplied, a
/// no-translation row. Rows are sorted by mean NDCG, descending.
std::vector<ComboRow> run_combination_study(const std::vector<ModelStores>& audio_models,
                                            const std::vector<ModelStores>& image_models,
                                            const std::optional<std::pair<ModelStores, ModelStores>>& baseline,
                                            const Ontology& ontology, const ComboStudyConfig& cfg);
void write_combo_csv(const std::vector<ComboRow>& rows, const std::filesystem::path& path);

// ---------------------------------------------------------------------------------------
// Target-modality mix-in curves

/// One projector's view of the classification subset.
struct ProjectedSplits {
  LabeledSet source_train, source_test;
  LabeledSet target_train, target_test;
};

struct MixCurveConfig {
  Modality source = Modality::kAudio;
  /// Target samples mixed in at each point; empty = 8 evenly spaced steps from 0 to the full
  /// target training set.
  std::vector<int> grid;
  int n_seeds = 5;
  ForestConfig forest;
  std::uint64_t seed = 0;

  Modality target() const { return other(source); }
};

struct MixCurvePoint {
  int n_mixed = 0;
  double mmt_f1 = 0.0;
  double mmp_f1 = 0.0;
  double sm_source_f1 = 0.0;
  double sm_target_f1 = 0.0;

  bool operator==(const MixCurvePoint&) const = default;
};

std::vector<int> default_mix_grid(std::size_t n_target_train, int n_classes, int steps = 8);
/// Class-balanced, seeded sample of `n` row indices from `labels` without replacement.
std::vector<std::size_t> balanced_sample(std::span<const int> labels, int n, int n_classes, std::uint64_t seed);

/// For every grid point n and seed: fit MMT (translated) and MMP (PCA) forests on all source
/// training rows plus n balanced target training rows, evaluate on the target test split,
/// and average over seeds. SM baselines are single-modality PCA classifiers.
std::vector<MixCurvePoint> run_mix_curve(const MixCurveConfig& cfg, const ProjectedSplits& translated,
                                         const ProjectedSplits& pca);
/// Forest trained on source rows only and scored on the target test split; the n = 0 point.
double zero_shot_f1(const ProjectedSplits& splits, const ForestConfig& forest);
void write_mix_curve_csv(const std::vector<MixCurvePoint>& curve, const std::filesystem::path& path);

// ---------------------------------------------------------------------------------------
// Inter-cluster distances

enum class ClusterSort { kByModality, kByClass };

struct ClusterKey {
  Modality modality;
  int class_index;
  bool operator==(const ClusterKey&) const = default;
};

struct ClusterDistanceMatrix {
  std::vector<ClusterKey> keys;     // row / column order
  Matrix distances;                 // cosine distance between centroids
  std::vector<ClusterKey> missing;  // (modality, class) cells without samples
};

ClusterDistanceMatrix run_cluster_distances(const LabeledSet& audio, const LabeledSet& image, int n_classes,
                                            ClusterSort sort);

struct ClusterSummary {
  double within_class_cross_modal = 0.0;  // mean over classes of d(audio_c, image_c)
  double cross_class = 0.0;               // mean over all pairs with different classes
};
ClusterSummary summarize_clusters(const ClusterDistanceMatrix& m);
void write_cluster_csv(const ClusterDistanceMatrix& m, const std::filesystem::path& path);

// ---------------------------------------------------------------------------------------
// Per-class report

ClassificationReport run_classification_report(const LabeledSet& train, const LabeledSet& test,
                                                const ForestConfig& forest, const std::filesystem::path& out_dir);

}  // namespace xmodal
