#include "xmodal/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <random>
#include <set>

#include "xmodal/error.hpp"

namespace xmodal {
namespace {

// Seeds of different mix-curve repetitions are spaced far apart because tree t of a forest
// uses rng_seed + t.
constexpr std::uint64_t kSeedStride = 1'000'003;

ForestConfig forest_for_seed(const ForestConfig& base, int s) {
  ForestConfig cfg = base;
  cfg.rng_seed = base.rng_seed + static_cast<std::uint64_t>(s) * kSeedStride;
  return cfg;
}

LabeledSet subset(const LabeledSet& set, const std::vector<std::size_t>& rows) {
  LabeledSet out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), set.x.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = set.x.row(static_cast<Eigen::Index>(rows[i]));
    out.y.push_back(set.y[rows[i]]);
  }
  return out;
}

double fit_and_score(const LabeledSet& train, const LabeledSet& test, const ForestConfig& cfg) {
  const RandomForest forest = fit_forest(train.x, train.y, cfg);
  return evaluate(forest, test.x, test.y).macro_f1;
}

EmbeddingStore map_rows(const EmbeddingStore& store, const std::string& tag,
                        const std::function<Matrix(Modality, const Matrix&)>& fn) {
  EmbeddingStore out;
  out.metas = store.metas;
  for (auto& m : out.metas) m.embedding_model = tag;
  Matrix projected;
  for (Modality modality : {Modality::kAudio, Modality::kImage}) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < store.size(); ++i)
      if (store.metas[i].modality == modality) rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.empty()) continue;
    const Matrix input = store.matrix.to_matrix()(rows, Eigen::all);
    const Matrix result = fn(modality, input);
    if (projected.size() == 0) projected.resize(static_cast<Eigen::Index>(store.size()), result.cols());
    projected(rows, Eigen::all) = result;
  }
  out.matrix = store.size() == 0 ? EmbeddingMatrix() : EmbeddingMatrix::from_rows(projected);
  return out;
}

}  // namespace

std::vector<int> class_labels(const StoreView& view, const Ontology& ontology) {
  std::vector<int> out;
  out.reserve(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    std::set<int> classes;
    for (const auto& label : view.meta(i).labels) {
      const int c = class_index(ontology.node(label).name);
      if (c >= 0) classes.insert(c);
    }
    if (classes.size() != 1)
      throw Error(ErrorCode::kValidation, "sample '" + view.meta(i).sample_id + "' must carry exactly one class label");
    out.push_back(*classes.begin());
  }
  return out;
}

LabeledSet labeled(const StoreView& view, const Ontology& ontology) { return {view.to_matrix(), class_labels(view, ontology)}; }

LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.x.cols() != b.x.cols()) throw Error(ErrorCode::kDimMismatch, "cannot concatenate sets of different dims");
  LabeledSet out;
  out.x.resize(a.x.rows() + b.x.rows(), a.x.cols());
  out.x << a.x, b.x;
  out.y = a.y;
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  return out;
}

EmbeddingStore translate_store(const TranslationModel& model, const EmbeddingStore& store) {
  return map_rows(store, "joint", [&](Modality m, const Matrix& x) { return translate_batch(model, m, x); });
}

EmbeddingStore pca_store(const PcaModel& model, const EmbeddingStore& store) {
  return map_rows(store, "pca", [&](Modality, const Matrix& x) { return project_batch(model, x); });
}

std::vector<ComboRow> run_combination_study(const std::vector<ModelStores>& audio_models,
                                            const std::vector<ModelStores>& image_models,
                                            const std::optional<std::pair<ModelStores, ModelStores>>& baseline,
                                            const Ontology& ontology, const ComboStudyConfig& cfg) {
  if (audio_models.empty() || image_models.empty())
    throw Error(ErrorCode::kConfig, "combination study needs at least one model per modality");
  std::vector<ComboRow> rows;
  for (const auto& audio : audio_models) {
    for (const auto& image : image_models) {
      const PairedDataset pairs = pair_by_clip(audio.translation, image.translation);
      TrainConfig train = cfg.train;
      train.rng_seed = cfg.seed;
      const TrainResult trained = train_translation(pairs, train);
      const CrossModalReport report =
          cross_modal_eval(translate_store(trained.model, audio.crossmodal),
                           translate_store(trained.model, image.crossmodal), ontology, cfg.relevance, cfg.k);
      rows.push_back({"translated", audio.name, image.name, report.audio_to_image.mean_ndcg,
                      report.image_to_audio.mean_ndcg});
    }
  }
  const CrossModalReport random = random_baseline_eval(audio_models.front().crossmodal, image_models.front().crossmodal,
                                                       ontology, cfg.relevance, cfg.k, cfg.seed);
  rows.push_back({"random", "-", "-", random.audio_to_image.mean_ndcg, random.image_to_audio.mean_ndcg});
  if (baseline) {
    const CrossModalReport raw =
        cross_modal_eval(baseline->first.crossmodal, baseline->second.crossmodal, ontology, cfg.relevance, cfg.k);
    rows.push_back({"no_translation", baseline->first.name, baseline->second.name, raw.audio_to_image.mean_ndcg,
                    raw.image_to_audio.mean_ndcg});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ComboRow& a, const ComboRow& b) { return a.mean() > b.mean(); });
  return rows;
}

void write_combo_csv(const std::vector<ComboRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "rank,kind,audio_model,image_model,ndcg_audio_to_image,ndcg_image_to_audio\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out << i + 1 << ',' << rows[i].kind << ',' << rows[i].audio_model << ',' << rows[i].image_model << ','
        << rows[i].ndcg_audio_to_image << ',' << rows[i].ndcg_image_to_audio << '\n';
}

std::vector<int> default_mix_grid(std::size_t n_target_train, int n_classes, int steps) {
  const int per_class = static_cast<int>(n_target_train) / n_classes;
  std::vector<int> grid;
  for (int j = 0; j < steps; ++j) {
    const int n = n_classes * static_cast<int>(std::lround(static_cast<double>(j) * per_class / (steps - 1)));
    if (grid.empty() || n > grid.back()) grid.push_back(n);
  }
  return grid;
}

std::vector<std::size_t> balanced_sample(std::span<const int> labels, int n, int n_classes, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (int c = 0; c < n_classes; ++c) {
    const int quota = n / n_classes + (c < n % n_classes ? 1 : 0);
    auto& rows = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(rows.size()) < quota)
      throw Error(ErrorCode::kConfig, "class " + class_name(c) + " has only " + std::to_string(rows.size()) +
                                          " target rows, " + std::to_string(quota) + " requested");
    std::shuffle(rows.begin(), rows.end(), rng);
    out.insert(out.end(), rows.begin(), rows.begin() + quota);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double zero_shot_f1(const ProjectedSplits& splits, const ForestConfig& forest) {
  return fit_and_score(splits.source_train, splits.target_test, forest);
}

std::vector<MixCurvePoint> run_mix_curve(const MixCurveConfig& cfg, const ProjectedSplits& translated,
                                         const ProjectedSplits& pca) {
  if (cfg.n_seeds < 1) throw Error(ErrorCode::kConfig, "need at least one seed");
  if (translated.target_train.y != pca.target_train.y)
    throw Error(ErrorCode::kConfig, "translated and PCA target rows are not aligned");
  const int n_classes = cfg.forest.n_classes;
  const std::vector<int> grid =
      cfg.grid.empty() ? default_mix_grid(translated.target_train.size(), n_classes) : cfg.grid;
  if (grid.empty() || grid.front() != 0 || !std::is_sorted(grid.begin(), grid.end()))
    throw Error(ErrorCode::kConfig, "mix-in grid must start at 0 and ascend");
  if (grid.back() > static_cast<int>(translated.target_train.size()))
    throw Error(ErrorCode::kConfig, "mix-in grid exceeds the " + std::to_string(translated.target_train.size()) +
                                        " available target training rows");

  double sm_source = 0.0;
  double sm_target = 0.0;
  for (int s = 0; s < cfg.n_seeds; ++s) {
    const ForestConfig forest = forest_for_seed(cfg.forest, s);
    sm_source += fit_and_score(pca.source_train, pca.source_test, forest);
    sm_target += fit_and_score(pca.target_train, pca.target_test, forest);
  }
  sm_source /= cfg.n_seeds;
  sm_target /= cfg.n_seeds;

  std::vector<MixCurvePoint> curve;
  for (int n : grid) {
    MixCurvePoint point;
    point.n_mixed = n;
    point.sm_source_f1 = sm_source;
    point.sm_target_f1 = sm_target;
    for (int s = 0; s < cfg.n_seeds; ++s) {
      const ForestConfig forest = forest_for_seed(cfg.forest, s);
      const auto rows = balanced_sample(translated.target_train.y, n, n_classes,
                                        cfg.seed + static_cast<std::uint64_t>(s) * kSeedStride + static_cast<std::uint64_t>(n));
      point.mmt_f1 += fit_and_score(concat(translated.source_train, subset(translated.target_train, rows)),
                                    translated.target_test, forest);
      point.mmp_f1 += fit_and_score(concat(pca.source_train, subset(pca.target_train, rows)), pca.target_test, forest);
    }
    point.mmt_f1 /= cfg.n_seeds;
    point.mmp_f1 /= cfg.n_seeds;
    curve.push_back(point);
  }
  return curve;
}

void write_mix_curve_csv(const std::vector<MixCurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "n_mixed,mmt_f1,mmp_f1,sm_source_f1,sm_target_f1\n";
  for (const auto& p : curve)
    out << p.n_mixed << ',' << p.mmt_f1 << ',' << p.mmp_f1 << ',' << p.sm_source_f1 << ',' << p.sm_target_f1 << '\n';
}

ClusterDistanceMatrix run_cluster_distances(const LabeledSet& audio, const LabeledSet& image, int n_classes,
                                            ClusterSort sort) {
  if (audio.size() > 0 && image.size() > 0 && audio.x.cols() != image.x.cols())
    throw Error(ErrorCode::kDimMismatch, "audio and image projections differ in dim");
  auto centroid = [&](const LabeledSet& set, int c) -> std::optional<Vector> {
    Vector sum = Vector::Zero(set.x.cols());
    std::size_t count = 0;
    for (std::size_t i = 0; i < set.size(); ++i)
      if (set.y[i] == c) {
        sum += set.x.row(static_cast<Eigen::Index>(i)).transpose();
        ++count;
      }
    if (count == 0) return std::nullopt;
    return Vector(sum / static_cast<double>(count));
  };

  std::vector<ClusterKey> order;
  if (sort == ClusterSort::kByModality) {
    for (Modality m : {Modality::kAudio, Modality::kImage})
      for (int c = 0; c < n_classes; ++c) order.push_back({m, c});
  } else {
    for (int c = 0; c < n_classes; ++c)
      for (Modality m : {Modality::kAudio, Modality::kImage}) order.push_back({m, c});
  }

  ClusterDistanceMatrix out;
  std::vector<Vector> centres;
  for (const auto& key : order) {
    auto c = centroid(key.modality == Modality::kAudio ? audio : image, key.class_index);
    if (!c) {
      out.missing.push_back(key);
      continue;
    }
    out.keys.push_back(key);
    centres.push_back(std::move(*c));
  }
  const auto n = static_cast<Eigen::Index>(centres.size());
  out.distances = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = cosine_distance(centres[static_cast<std::size_t>(i)], centres[static_cast<std::size_t>(j)]);
      out.distances(i, j) = d;
      out.distances(j, i) = d;
    }
  return out;
}

ClusterSummary summarize_clusters(const ClusterDistanceMatrix& m) {
  ClusterSummary s;
  double within = 0.0, across = 0.0;
  std::size_t n_within = 0, n_across = 0;
  for (std::size_t i = 0; i < m.keys.size(); ++i)
    for (std::size_t j = i + 1; j < m.keys.size(); ++j) {
      const double d = m.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (m.keys[i].class_index == m.keys[j].class_index) {
        if (m.keys[i].modality != m.keys[j].modality) {
          within += d;
          ++n_within;
        }
      } else {
        across += d;
        ++n_across;
      }
    }
  s.within_class_cross_modal = n_within ? within / static_cast<double>(n_within) : 0.0;
  s.cross_class = n_across ? across / static_cast<double>(n_across) : 0.0;
  return s;
}

void write_cluster_csv(const ClusterDistanceMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.precision(17);
  auto name = [](const ClusterKey& k) { return std::string(to_string(k.modality)) + ":" + class_name(k.class_index); };
  out << "cluster";
  for (const auto& k : m.keys) out << ',' << name(k);
  out << '\n';
  for (std::size_t i = 0; i < m.keys.size(); ++i) {
    out << name(m.keys[i]);
    for (std::size_t j = 0; j < m.keys.size(); ++j)
      out << ',' << m.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    out << '\n';
  }
  for (const auto& k : m.missing) out << "# missing," << name(k) << '\n';
}

ClassificationReport run_classification_report(const LabeledSet& train, const LabeledSet& test,
                                                const ForestConfig& forest, const std::filesystem::path& out_dir) {
  if (test.size() == 0) throw Error(ErrorCode::kConfig, "empty test set");
  const RandomForest model = fit_forest(train.x, train.y, forest);
  ClassificationReport report = evaluate(model, test.x, test.y);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_report_csv(report, out_dir / "report.csv");
    write_confusion_csv(report, out_dir / "confusion.csv");
  }
  return report;
}

}  // namespace xmodal
