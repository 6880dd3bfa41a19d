#include "xmodal/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "xmodal/error.hpp"

namespace xmodal {
namespace {

constexpr const char* kRootId = "/m/04rlf";  // AudioSet id of "Music"
constexpr const char* kHubId = "toy:instrument-family";
constexpr const char* kFamilyIds[3] = {"toy:family:strings", "toy:family:winds", "toy:family:percussion-keys-voice"};
constexpr const char* kFamilyNames[3] = {"Strings", "Winds", "Percussion, keys and voice"};
// Family of each canonical class, alphabetical order.
constexpr int kFamilyOf[18] = {1, 0, 0, 1, 2, 2, 1, 0, 0, 2, 2, 1, 2, 1, 1, 0, 0, 2};

Vector gaussian_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

Matrix gaussian_map(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t name_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return h;
}

int scaled_count(const SynthConfig& cfg, int per_class, int c) {
  if (cfg.class_imbalance.empty()) return per_class;
  return std::max(1, static_cast<int>(std::lround(per_class * cfg.class_imbalance[static_cast<std::size_t>(c)])));
}

std::string clip_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%06zu", prefix, i);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_classes < 2 || n_classes > static_cast<int>(kInstrumentClasses.size()))
    throw Error(ErrorCode::kConfig, "n_classes must be in [2, 18]");
  if (latent_dim < 1) throw Error(ErrorCode::kConfig, "latent_dim must be positive");
  if (audio_dim < latent_dim || image_dim < latent_dim || shared_dim < latent_dim)
    throw Error(ErrorCode::kConfig, "embedding dims must be >= latent_dim");
  if (translation_per_class < 1 || crossmodal_per_class < 1 || train_per_class < 1 || test_per_class < 1)
    throw Error(ErrorCode::kConfig, "samples per class must be >= 1");
  if (latent_noise < 0 || audio_noise < 0 || image_noise < 0 || shared_noise < 0)
    throw Error(ErrorCode::kConfig, "noise levels must be >= 0");
  if (!class_imbalance.empty()) {
    if (static_cast<int>(class_imbalance.size()) != n_classes)
      throw Error(ErrorCode::kConfig, "class_imbalance needs one multiplier per class");
    for (double m : class_imbalance)
      if (!(m > 0)) throw Error(ErrorCode::kConfig, "imbalance multipliers must be positive");
  }
  for (auto [a, b] : merged_classes)
    if (a < 0 || b < 0 || a >= n_classes || b >= n_classes) throw Error(ErrorCode::kConfig, "merged class out of range");
  if (shared_alignment < 0 || shared_alignment > 1) throw Error(ErrorCode::kConfig, "shared_alignment must be in [0, 1]");
}

std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::kTranslation: return "translation";
    case Subset::kCrossModal: return "crossmodal";
    case Subset::kClassification: return "classification";
  }
  return "translation";
}

std::string class_label_id(int class_index) {
  return "toy:" + std::string(kInstrumentClasses.at(static_cast<std::size_t>(class_index)));
}

Ontology toy_ontology(int n_classes) {
  std::vector<OntologyNode> nodes;
  OntologyNode root{kRootId, "Music", {}};
  OntologyNode hub{kHubId, "Instrument family", {}};
  std::vector<OntologyNode> families;
  for (int f = 0; f < 3; ++f) {
    families.push_back({kFamilyIds[f], kFamilyNames[f], {}});
    root.child_ids.push_back(kFamilyIds[f]);
    hub.child_ids.push_back(kFamilyIds[f]);
  }
  root.child_ids.push_back(kHubId);
  std::vector<OntologyNode> leaves;
  for (int c = 0; c < n_classes; ++c) {
    leaves.push_back({class_label_id(c), std::string(kInstrumentClasses[static_cast<std::size_t>(c)]), {}});
    families[static_cast<std::size_t>(kFamilyOf[c])].child_ids.push_back(class_label_id(c));
  }
  nodes.push_back(std::move(root));
  nodes.push_back(std::move(hub));
  for (auto& f : families) nodes.push_back(std::move(f));
  for (auto& l : leaves) nodes.push_back(std::move(l));
  return Ontology(std::move(nodes));
}

const std::vector<SynthClip>& SynthWorld::clips(Subset s) const {
  switch (s) {
    case Subset::kTranslation: return translation;
    case Subset::kCrossModal: return crossmodal;
    case Subset::kClassification: return classification;
  }
  return translation;
}

EmbeddingModelSpec SynthWorld::audio_model() const {
  return {"synth-audio", Modality::kAudio, config.audio_dim, config.audio_noise, mix(config.rng_seed, 1), 0.0, 0};
}

EmbeddingModelSpec SynthWorld::image_model() const {
  return {"synth-image", Modality::kImage, config.image_dim, config.image_noise, mix(config.rng_seed, 2), 0.0, 0};
}

EmbeddingModelSpec SynthWorld::shared_model(Modality m) const {
  const bool audio = m == Modality::kAudio;
  return {audio ? "synth-shared-audio" : "synth-shared-image",
          m,
          config.shared_dim,
          config.shared_noise,
          mix(config.rng_seed, audio ? 3 : 4),
          config.shared_alignment,
          mix(config.rng_seed, 5)};
}

EmbeddingModelSpec SynthWorld::noisy_model(Modality m, double factor) const {
  EmbeddingModelSpec spec = m == Modality::kAudio ? audio_model() : image_model();
  spec.name += "-noisy";
  spec.noise *= factor;
  return spec;
}

SynthWorld make_world(const SynthConfig& cfg) {
  cfg.validate();
  SynthWorld world;
  world.config = cfg;
  world.ontology = toy_ontology(cfg.n_classes);

  std::mt19937_64 rng(cfg.rng_seed);
  for (int c = 0; c < cfg.n_classes; ++c) world.centres.push_back(gaussian_vector(cfg.latent_dim, rng).normalized());
  for (auto [a, b] : cfg.merged_classes) world.centres[static_cast<std::size_t>(b)] = world.centres[static_cast<std::size_t>(a)];

  auto draw = [&](std::vector<SynthClip>& out, const char* prefix, int per_class, int test_per_class, Split split) {
    for (int c = 0; c < cfg.n_classes; ++c) {
      const int n_main = scaled_count(cfg, per_class, c);
      const int n_test = test_per_class > 0 ? scaled_count(cfg, test_per_class, c) : 0;
      for (int i = 0; i < n_main + n_test; ++i) {
        SynthClip clip;
        clip.clip_id = clip_name(prefix, out.size());
        clip.class_index = c;
        clip.split = i < n_main ? split : Split::kTest;
        clip.latent = world.centres[static_cast<std::size_t>(c)] + cfg.latent_noise * gaussian_vector(cfg.latent_dim, rng);
        out.push_back(std::move(clip));
      }
    }
  };
  draw(world.translation, "tr", cfg.translation_per_class, 0, Split::kTrain);
  draw(world.crossmodal, "cm", cfg.crossmodal_per_class, 0, Split::kTest);
  draw(world.classification, "cl", cfg.train_per_class, cfg.test_per_class, Split::kTrain);
  return world;
}

EmbeddingStore render(const SynthWorld& world, Subset subset, const EmbeddingModelSpec& model) {
  const int latent_dim = world.config.latent_dim;
  Matrix map = gaussian_map(model.dim, latent_dim, model.map_seed);
  if (model.shared_weight > 0.0) {
    const double w = model.shared_weight;
    map = w * gaussian_map(model.dim, latent_dim, model.shared_seed) + std::sqrt(1.0 - w * w) * map;
  }
  std::mt19937_64 rng(mix(world.config.rng_seed, name_hash(model.name) ^ (static_cast<std::uint64_t>(subset) << 56)));
  const auto& clips = world.clips(subset);
  Matrix rows(static_cast<Eigen::Index>(clips.size()), model.dim);
  EmbeddingStore store;
  const char suffix = model.modality == Modality::kAudio ? 'a' : 'i';
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& clip = clips[i];
    rows.row(static_cast<Eigen::Index>(i)) = (map * clip.latent + model.noise * gaussian_vector(model.dim, rng)).transpose();
    store.metas.push_back({clip.clip_id + "-" + suffix, clip.clip_id, model.modality, {class_label_id(clip.class_index)},
                           clip.split, model.name});
  }
  store.matrix = EmbeddingMatrix::from_rows(rows);
  return store;
}

SynthDataset generate(const SynthConfig& cfg) {
  const SynthWorld world = make_world(cfg);
  SynthDataset out;
  const auto audio = world.audio_model();
  const auto image = world.image_model();
  out.translation = pair_by_clip(render(world, Subset::kTranslation, audio), render(world, Subset::kTranslation, image));
  out.crossmodal = pair_by_clip(render(world, Subset::kCrossModal, audio), render(world, Subset::kCrossModal, image));
  out.classification_audio = render(world, Subset::kClassification, audio);
  out.classification_image = render(world, Subset::kClassification, image);
  out.ontology = world.ontology;
  return out;
}

std::vector<std::size_t> class_histogram(const EmbeddingStore& store, const Ontology& ontology) {
  std::vector<std::size_t> counts(kInstrumentClasses.size(), 0);
  for (const auto& meta : store.metas) {
    std::vector<bool> seen(counts.size(), false);
    for (const auto& label : meta.labels) {
      const int c = class_index(ontology.node(label).name);
      if (c >= 0 && !seen[static_cast<std::size_t>(c)]) {
        seen[static_cast<std::size_t>(c)] = true;
        ++counts[static_cast<std::size_t>(c)];
      }
    }
  }
  return counts;
}

void write_histogram_csv(const std::vector<std::size_t>& counts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "class,count\n";
  for (std::size_t c = 0; c < counts.size(); ++c) out << kInstrumentClasses[c] << ',' << counts[c] << '\n';
}

}  // namespace xmodal
