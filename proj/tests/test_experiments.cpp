#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "xmodal/experiments.hpp"
#include "xmodal/synth.hpp"

using namespace xmodal;
using testing::error_of;
using testing::gaussian;

namespace {

SynthConfig small() {
  SynthConfig cfg;
  cfg.n_classes = 6;
  cfg.latent_dim = 8;
  cfg.audio_dim = 24;
  cfg.image_dim = 40;
  cfg.shared_dim = 16;
  cfg.translation_per_class = 12;
  cfg.crossmodal_per_class = 4;
  cfg.train_per_class = 8;
  cfg.test_per_class = 4;
  cfg.rng_seed = 5;
  return cfg;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.batch_size = 32;
  t.max_epochs = 10;
  return t;
}

}  // namespace

TEST_CASE("class labels need exactly one instrument per sample") {
  const SynthDataset d = generate(small());
  EmbeddingStore s = d.classification_audio;
  const LabeledSet l = labeled(all_rows(s), d.ontology);
  CHECK(l.size() == s.size());
  CHECK(l.y[0] == class_index(s.metas[0].labels[0].substr(4)));

  s.metas[0].labels.push_back(class_label_id(3));
  CHECK(error_of([&] { class_labels(all_rows(s), d.ontology); }) == ErrorCode::kValidation);
  s.metas[0].labels = {"toy:family:strings"};
  CHECK(error_of([&] { class_labels(all_rows(s), d.ontology); }) == ErrorCode::kValidation);
}

TEST_CASE("balanced sampling and the default grid") {
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 10; ++i) labels.push_back(c);
  const auto rows = balanced_sample(labels, 10, 4, 1);
  CHECK(rows.size() == 10);
  std::vector<int> per(4, 0);
  for (auto r : rows) ++per[static_cast<std::size_t>(labels[r])];
  CHECK(per == std::vector<int>{3, 3, 2, 2});
  CHECK(balanced_sample(labels, 10, 4, 1) == rows);
  CHECK(error_of([&] { balanced_sample(labels, 44, 4, 1); }) == ErrorCode::kConfig);

  const auto grid = default_mix_grid(1800, 18);
  CHECK(grid.front() == 0);
  CHECK(grid.back() == 1800);
  CHECK(grid.size() == 8);
  for (int n : grid) CHECK(n % 18 == 0);
}

TEST_CASE("projected stores keep metadata") {
  const SynthDataset d = generate(small());
  std::mt19937_64 rng(0);
  TranslationModel m{TowerParams::glorot(24, rng), TowerParams::glorot(40, rng)};
  const EmbeddingStore t = translate_store(m, d.classification_audio);
  CHECK(t.dim() == 128);
  CHECK(t.metas[3].sample_id == d.classification_audio.metas[3].sample_id);
  CHECK(t.metas[3].embedding_model == "joint");
  const EmbeddingStore p = pca_store(fit_pca(d.classification_image.matrix.to_matrix(), 5), d.classification_image);
  CHECK(p.dim() == 5);
  CHECK(p.metas[0].embedding_model == "pca");
}

TEST_CASE("cluster distances are symmetric with a zero diagonal") {
  std::mt19937_64 rng(3);
  LabeledSet a{gaussian(12, 5, rng), {0, 0, 1, 1, 2, 2, 0, 1, 2, 0, 1, 2}};
  LabeledSet v{gaussian(8, 5, rng), {0, 0, 1, 1, 0, 1, 0, 1}};
  const auto m = run_cluster_distances(a, v, 3, ClusterSort::kByModality);
  CHECK(m.keys.size() == 5);
  CHECK(m.missing == std::vector<ClusterKey>{{Modality::kImage, 2}});
  CHECK((m.distances - m.distances.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(m.distances.diagonal().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(m.keys[0] == ClusterKey{Modality::kAudio, 0});
  CHECK(m.keys[3] == ClusterKey{Modality::kImage, 0});

  const auto by_class = run_cluster_distances(a, v, 3, ClusterSort::kByClass);
  CHECK(by_class.keys[1] == ClusterKey{Modality::kImage, 0});

  // Centroid oracle for one cell.
  const Vector ca = (a.x.row(0) + a.x.row(1) + a.x.row(6) + a.x.row(9)).transpose() / 4.0;
  const Vector cv = (v.x.row(0) + v.x.row(1) + v.x.row(4) + v.x.row(6)).transpose() / 4.0;
  CHECK(m.distances(0, 3) == doctest::Approx(cosine_distance(ca, cv)).epsilon(1e-12));

  const auto s = summarize_clusters(m);
  CHECK(s.within_class_cross_modal == doctest::Approx((m.distances(0, 3) + m.distances(1, 4)) / 2));
}

TEST_CASE("combination study ranks translated, baseline and random rows") {
  const SynthConfig cfg = small();
  const SynthWorld w = make_world(cfg);
  auto stores = [&](const std::string& name, const EmbeddingModelSpec& spec) {
    return ModelStores{name, render(w, Subset::kTranslation, spec), render(w, Subset::kCrossModal, spec)};
  };
  const std::vector<ModelStores> audio{stores("audio", w.audio_model()),
                                       stores("audio-noisy", w.noisy_model(Modality::kAudio, 4.0))};
  const std::vector<ModelStores> image{stores("image", w.image_model())};
  std::optional<std::pair<ModelStores, ModelStores>> baseline(
      std::in_place, stores("audio-shared", w.shared_model(Modality::kAudio)),
      stores("image-shared", w.shared_model(Modality::kImage)));
  ComboStudyConfig study{quick_train(), RelevanceConfig::defaults_for(w.ontology), 10, 1};
  const auto rows = run_combination_study(audio, image, baseline, w.ontology, study);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].mean() >= rows[i].mean());
  int translated = 0, random = 0, none = 0;
  for (const auto& r : rows) {
    translated += r.kind == "translated";
    random += r.kind == "random";
    none += r.kind == "no_translation";
  }
  CHECK(translated == 2);
  CHECK(random == 1);
  CHECK(none == 1);

  testing::TempDir dir("combo");
  write_combo_csv(rows, dir / "c.csv");
  std::ifstream in(dir / "c.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.find("ndcg") != std::string::npos);
}

TEST_CASE("mix curve is deterministic and starts at zero-shot") {
  const SynthDataset d = generate(small());
  const TrainResult tr = train_translation(d.translation, quick_train());
  auto splits = [&](const EmbeddingStore& s, const EmbeddingStore& t) {
    return ProjectedSplits{labeled(filter_split(s, Split::kTrain), d.ontology),
                           labeled(filter_split(s, Split::kTest), d.ontology),
                           labeled(filter_split(t, Split::kTrain), d.ontology),
                           labeled(filter_split(t, Split::kTest), d.ontology)};
  };
  const ProjectedSplits trans = splits(translate_store(tr.model, d.classification_audio),
                                       translate_store(tr.model, d.classification_image));
  const auto pa = fit_pca(filter_split(d.classification_audio, Split::kTrain).to_matrix(), 8);
  const auto pv = fit_pca(filter_split(d.classification_image, Split::kTrain).to_matrix(), 8);
  const ProjectedSplits pca = splits(pca_store(pa, d.classification_audio), pca_store(pv, d.classification_image));

  MixCurveConfig mix;
  mix.grid = {0, 24, 48};
  mix.n_seeds = 2;
  mix.forest.n_trees = 10;
  mix.forest.n_classes = 6;
  const auto curve = run_mix_curve(mix, trans, pca);
  REQUIRE(curve.size() == 3);
  CHECK(curve == run_mix_curve(mix, trans, pca));
  CHECK(curve[0].n_mixed == 0);
  CHECK(curve[0].sm_target_f1 == curve[2].sm_target_f1);

  // The n = 0 point averages the zero-shot score over the per-seed forests.
  double zs = 0.0;
  for (int s = 0; s < 2; ++s) {
    ForestConfig f = mix.forest;
    f.rng_seed = mix.forest.rng_seed + static_cast<std::uint64_t>(s) * 1000003u;
    zs += zero_shot_f1(trans, f);
  }
  CHECK(curve[0].mmt_f1 == doctest::Approx(zs / 2).epsilon(1e-12));

  mix.grid = {0, 1000};
  CHECK(error_of([&] { run_mix_curve(mix, trans, pca); }) == ErrorCode::kConfig);
}
