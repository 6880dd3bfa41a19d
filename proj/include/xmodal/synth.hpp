#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xmodal/common.hpp"
#include "xmodal/ontology.hpp"
#include "xmodal/store.hpp"

namespace xmodal {

struct SynthConfig {
  int n_classes = 18;
  int latent_dim = 32;
  int audio_dim = 1024;  // YamNet-sized
  int image_dim = 2048;  // ResNet50-sized
  int translation_per_class = 111;
  int crossmodal_per_class = 28;
  int train_per_class = 100;
  int test_per_class = 20;
  double latent_noise = 0.1;
  double audio_noise = 0.05;
  double image_noise = 0.05;
  /// Per-class count multipliers (empty = balanced); index = class index.
  std::vector<double> class_imbalance;
  /// (a, b): class b reuses class a's latent centre, so the two are inseparable.
  std::vector<std::pair<int, int>> merged_classes;
  /// Shared-space pair used as the no-translation retrieval baseline: both modalities are
  /// rendered through maps that are only partly common (weight = shared_alignment).
  int shared_dim = 512;
  double shared_alignment = 0.35;
  double shared_noise = 0.05;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

enum class Subset { kTranslation, kCrossModal, kClassification };
std::string_view to_string(Subset s);

struct SynthClip {
  std::string clip_id;
  int class_index;
  Split split;
  Vector latent;
};

/// How one synthetic "pre-trained embedding model" renders clip latents into rows.
struct EmbeddingModelSpec {
  std::string name;
  Modality modality = Modality::kAudio;
  int dim = 0;
  double noise = 0.0;
  std::uint64_t map_seed = 0;
  double shared_weight = 0.0;  // 0 = own map only
  std::uint64_t shared_seed = 0;
};

/// Class centres, clip latents and the toy ontology; stores are rendered from it on demand.
struct SynthWorld {
  SynthConfig config;
  std::vector<Vector> centres;
  std::vector<SynthClip> translation, crossmodal, classification;
  Ontology ontology{std::vector<OntologyNode>{}};

  const std::vector<SynthClip>& clips(Subset s) const;
  EmbeddingModelSpec audio_model() const;
  EmbeddingModelSpec image_model() const;
  /// Shared-space baseline pair, like an audio-visual-correspondence model used untranslated.
  EmbeddingModelSpec shared_model(Modality m) const;
  /// Same as audio_model()/image_model() with the modality noise scaled by `factor`.
  EmbeddingModelSpec noisy_model(Modality m, double factor) const;
};

SynthWorld make_world(const SynthConfig& cfg);
EmbeddingStore render(const SynthWorld& world, Subset subset, const EmbeddingModelSpec& model);

struct SynthDataset {
  PairedDataset translation;
  PairedDataset crossmodal;
  EmbeddingStore classification_audio;  // train + test rows
  EmbeddingStore classification_image;
  Ontology ontology{std::vector<OntologyNode>{}};
};

SynthDataset generate(const SynthConfig& cfg);

/// root "Music" (excluded by default) -> 3 family nodes -> class leaves, with a
/// non-excluded hub linked to every family so families stay connected without the root.
Ontology toy_ontology(int n_classes);
std::string class_label_id(int class_index);

/// Samples per canonical class, counting every sample that carries the class label.
std::vector<std::size_t> class_histogram(const EmbeddingStore& store, const Ontology& ontology);
void write_histogram_csv(const std::vector<std::size_t>& counts, const std::filesystem::path& path);

}  // namespace xmodal
