#include "xmodal/cli.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "xmodal/error.hpp"
#include "xmodal/experiments.hpp"
#include "xmodal/forest.hpp"
#include "xmodal/ontology.hpp"
#include "xmodal/parallel.hpp"
#include "xmodal/pca.hpp"
#include "xmodal/retrieval.hpp"
#include "xmodal/run_manifest.hpp"
#include "xmodal/store.hpp"
#include "xmodal/synth.hpp"
#include "xmodal/translation.hpp"

namespace xmodal {
namespace {

namespace fs = std::filesystem;

/// Reads `--config` files as JSON: top-level keys are global flags, nested objects hold the
/// flags of the subcommand they are named after. Values on the command line win.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void collect(const nlohmann::json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(key);
        collect(value, nested, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 0;
};

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Echo of every option of `app` and its parents, as resolved after parsing.
nlohmann::json echo_params(const CLI::App* app) {
  nlohmann::json params = nlohmann::json::object();
  for (const CLI::App* a = app; a != nullptr; a = a->get_parent()) {
    for (const CLI::Option* opt : a->get_options()) {
      if (opt == a->get_help_ptr() || opt == a->get_config_ptr()) continue;
      const std::string name = opt->get_single_name();
      if (name.empty() || params.contains(name)) continue;
      if (opt->count() > 0) {
        const auto& results = opt->results();
        params[name] = results.size() == 1 ? nlohmann::json(results.front()) : nlohmann::json(results);
      } else {
        params[name] = opt->get_default_str();
      }
    }
  }
  return params;
}

RelevanceConfig relevance_config(const Ontology& ontology, const std::optional<std::string>& exclude, int max_distance) {
  RelevanceConfig cfg = RelevanceConfig::defaults_for(ontology);
  if (exclude) {
    cfg.excluded_labels.clear();
    for (const auto& id : split_csv(*exclude)) cfg.excluded_labels.insert(id);
  }
  cfg.max_distance = max_distance;
  cfg.validate(ontology);
  return cfg;
}

std::string sniff_magic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  return {magic, static_cast<std::size_t>(in.gcount())};
}

void add_train_flags(CLI::App* sub, TrainConfig& cfg) {
  sub->add_option("--batch-size", cfg.batch_size, "Pairs per training batch");
  sub->add_option("--margin", cfg.margin, "Contrastive margin on cosine distance");
  sub->add_option("--lr", cfg.learning_rate, "Adam learning rate");
  sub->add_option("--patience", cfg.patience_epochs, "Early-stopping patience in epochs");
  sub->add_option("--max-epochs", cfg.max_epochs, "Epoch cap");
  sub->add_option("--val-fraction", cfg.val_fraction, "Share of pairs held out for validation");
}

void add_forest_flags(CLI::App* sub, ForestConfig& cfg) {
  sub->add_option("--n-trees", cfg.n_trees, "Trees in the forest");
  sub->add_option("--max-depth", cfg.max_depth, "Maximum tree depth");
  sub->add_option("--min-samples-split", cfg.min_samples_split, "Smallest node that may be split");
  sub->add_option("--features-per-split", cfg.features_per_split, "Candidate features per split (0 = ceil(sqrt(dim)))");
}

void print_report(const CrossModalReport& r) {
  std::cout << "audio_to_image mean NDCG " << r.audio_to_image.mean_ndcg << " (skipped " << r.audio_to_image.skipped
            << ")\nimage_to_audio mean NDCG " << r.image_to_audio.mean_ndcg << " (skipped "
            << r.image_to_audio.skipped << ")\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Joint audio/image embeddings: translation, retrieval and modality-agnostic classification", "xmodal"};
  app.option_defaults()->always_capture_default();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with flag values (nested objects per subcommand)");

  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads (0 = XMODAL_THREADS or 1)")->envname("XMODAL_THREADS");

  std::function<void()> action;
  std::vector<fs::path> inputs;

  // synth ---------------------------------------------------------------------------------
  SynthConfig synth;
  std::string imbalance;
  double noisy_factor = 0.0;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic paired-embedding dataset and toy ontology");
  synth_cmd->add_option("--n-classes", synth.n_classes, "Number of classes (<= 18)");
  synth_cmd->add_option("--latent-dim", synth.latent_dim, "Latent dimension");
  synth_cmd->add_option("--audio-dim", synth.audio_dim, "Audio embedding dimension");
  synth_cmd->add_option("--image-dim", synth.image_dim, "Image embedding dimension");
  synth_cmd->add_option("--translation-per-class", synth.translation_per_class, "Translation-subset clips per class");
  synth_cmd->add_option("--crossmodal-per-class", synth.crossmodal_per_class, "Cross-modal-subset clips per class");
  synth_cmd->add_option("--train-per-class", synth.train_per_class, "Classification training clips per class");
  synth_cmd->add_option("--test-per-class", synth.test_per_class, "Classification test clips per class");
  synth_cmd->add_option("--latent-noise", synth.latent_noise, "Per-clip latent noise sigma");
  synth_cmd->add_option("--audio-noise", synth.audio_noise, "Audio rendering noise sigma");
  synth_cmd->add_option("--image-noise", synth.image_noise, "Image rendering noise sigma");
  synth_cmd->add_option("--shared-dim", synth.shared_dim, "Dimension of the untranslated shared-space baseline");
  synth_cmd->add_option("--shared-alignment", synth.shared_alignment, "Common-map weight of the shared-space baseline");
  synth_cmd->add_option("--imbalance", imbalance, "Comma-separated per-class count multipliers");
  synth_cmd->add_option("--noisy-factor", noisy_factor, "If > 0, also emit audio-noisy/image-noisy models with noise scaled by this");
  synth_cmd->callback([&] {
    action = [&] {
      synth.rng_seed = g.seed;
      for (const auto& m : split_csv(imbalance)) synth.class_imbalance.push_back(std::stod(m));
      const SynthWorld world = make_world(synth);
      const fs::path out = g.out_dir;
      fs::create_directories(out);
      world.ontology.save(out / "ontology.json");
      for (Subset subset : {Subset::kTranslation, Subset::kCrossModal, Subset::kClassification}) {
        const fs::path dir = out / std::string(to_string(subset));
        write_store(render(world, subset, world.audio_model()), dir / "audio");
        write_store(render(world, subset, world.image_model()), dir / "image");
        if (subset == Subset::kClassification) continue;
        if (noisy_factor > 0.0) {
          write_store(render(world, subset, world.noisy_model(Modality::kAudio, noisy_factor)), dir / "audio-noisy");
          write_store(render(world, subset, world.noisy_model(Modality::kImage, noisy_factor)), dir / "image-noisy");
        }
        if (subset == Subset::kCrossModal) {
          write_store(render(world, subset, world.shared_model(Modality::kAudio)), dir / "audio-shared");
          write_store(render(world, subset, world.shared_model(Modality::kImage)), dir / "image-shared");
        }
      }
      std::cout << "wrote synthetic dataset to " << out.string() << '\n';
    };
  });

  // validate-store ------------------------------------------------------------------------
  std::vector<std::string> validate_dirs;
  std::string validate_ontology;
  auto* validate_cmd = app.add_subcommand("validate-store", "Check store directories against the on-disk format");
  validate_cmd->add_option("--store", validate_dirs, "Store directory (repeatable)")->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  validate_cmd->add_option("--ontology", validate_ontology, "Also resolve labels against this ontology");
  validate_cmd->callback([&] {
    action = [&] {
      std::optional<Ontology> onto;
      if (!validate_ontology.empty()) onto = Ontology::load(validate_ontology);
      for (const auto& dir : validate_dirs) {
        const EmbeddingStore store = read_store(dir);
        if (onto) validate_labels(store.metas, *onto);
        std::cout << "ok " << dir << ": " << store.size() << " rows, dim " << store.dim() << '\n';
      }
    };
  });

  // train-translation ---------------------------------------------------------------------
  TrainConfig train;
  std::string pairs_dir, audio_dir, image_dir;
  auto* train_cmd = app.add_subcommand("train-translation", "Train the two-tower translation model on paired clips");
  train_cmd->add_option("--pairs", pairs_dir, "Directory holding audio/ and image/ stores");
  train_cmd->add_option("--audio", audio_dir, "Audio store (instead of --pairs)");
  train_cmd->add_option("--image", image_dir, "Image store (instead of --pairs)");
  add_train_flags(train_cmd, train);
  train_cmd->callback([&] {
    action = [&] {
      const fs::path a = !audio_dir.empty() ? fs::path(audio_dir) : fs::path(pairs_dir) / "audio";
      const fs::path v = !image_dir.empty() ? fs::path(image_dir) : fs::path(pairs_dir) / "image";
      if (pairs_dir.empty() && (audio_dir.empty() || image_dir.empty()))
        throw Error(ErrorCode::kConfig, "give --pairs or both --audio and --image");
      inputs = {a, v};
      train.rng_seed = g.seed;
      const TrainResult result = train_translation(pair_by_clip(read_store(a), read_store(v)), train);
      fs::create_directories(g.out_dir);
      save_translation(result.model, fs::path(g.out_dir) / "model.xmtm");
      write_history_csv(result.history, fs::path(g.out_dir) / "history.csv");
      std::cout << "stopped at epoch " << result.history.stop_epoch << " (" << to_string(result.history.stop_reason)
                << "), best epoch " << result.history.best_epoch << '\n';
    };
  });

  // fit-pca -------------------------------------------------------------------------------
  std::string pca_store_dir, pca_split = "train";
  int pca_k = kJointDim;
  auto* pca_cmd = app.add_subcommand("fit-pca", "Fit a PCA projection on one store");
  pca_cmd->add_option("--store", pca_store_dir, "Store directory")->required();
  pca_cmd->add_option("--k", pca_k, "Output dimension");
  pca_cmd->add_option("--split", pca_split, "Rows to fit on: train, val, test or all");
  pca_cmd->callback([&] {
    action = [&] {
      inputs = {pca_store_dir};
      const EmbeddingStore store = read_store(pca_store_dir);
      const Matrix x = pca_split == "all" ? all_rows(store).to_matrix()
                                          : filter_split(store, parse_split(pca_split)).to_matrix();
      const PcaModel model = fit_pca(x, pca_k);
      fs::create_directories(g.out_dir);
      save_pca(model, fs::path(g.out_dir) / "pca.xmpc");
      std::cout << "fit PCA on " << x.rows() << " rows, " << x.cols() << " -> " << pca_k << '\n';
    };
  });

  // project -------------------------------------------------------------------------------
  std::string project_store_dir, project_model;
  auto* project_cmd = app.add_subcommand("project", "Project a store with a translation or PCA checkpoint");
  project_cmd->add_option("--store", project_store_dir, "Store directory")->required();
  project_cmd->add_option("--model", project_model, "model.xmtm or pca.xmpc")->required();
  project_cmd->callback([&] {
    action = [&] {
      inputs = {project_store_dir, project_model};
      const EmbeddingStore store = read_store(project_store_dir);
      const std::string magic = sniff_magic(project_model);
      EmbeddingStore out;
      if (magic == "XMTM") out = translate_store(load_translation(project_model), store);
      else if (magic == "XMPC") out = pca_store(load_pca(project_model), store);
      else throw Error(ErrorCode::kUnsupportedFormat, project_model + ": unknown checkpoint type");
      write_store(out, g.out_dir);
      std::cout << "projected " << out.size() << " rows to dim " << out.dim() << '\n';
    };
  });

  // retrieve-eval -------------------------------------------------------------------------
  std::string ret_audio, ret_image, ret_ontology;
  std::optional<std::string> exclude;
  int k = 30;
  int max_distance = 21;
  bool random_ranking = false;
  auto* ret_cmd = app.add_subcommand("retrieve-eval", "Cross-modal retrieval NDCG in both directions");
  ret_cmd->add_option("--audio", ret_audio, "Audio store in the joint space")->required();
  ret_cmd->add_option("--image", ret_image, "Image store in the joint space")->required();
  ret_cmd->add_option("--ontology", ret_ontology, "Ontology JSON")->required();
  ret_cmd->add_option("--k", k, "Ranked list length");
  ret_cmd->add_option("--max-distance", max_distance, "C in r = C - d");
  ret_cmd->add_option("--exclude-labels", exclude, "Comma-separated ids removed from relevance (default: top labels)");
  ret_cmd->add_flag("--random", random_ranking, "Score a random permutation of the pool instead");
  ret_cmd->callback([&] {
    action = [&] {
      inputs = {ret_audio, ret_image, ret_ontology};
      const Ontology onto = Ontology::load(ret_ontology);
      const RelevanceConfig rel = relevance_config(onto, exclude, max_distance);
      const EmbeddingStore a = read_store(ret_audio);
      const EmbeddingStore v = read_store(ret_image);
      const CrossModalReport report =
          random_ranking ? random_baseline_eval(a, v, onto, rel, k, g.seed) : cross_modal_eval(a, v, onto, rel, k);
      fs::create_directories(g.out_dir);
      write_ndcg_csv(report, fs::path(g.out_dir) / "ndcg.csv");
      print_report(report);
    };
  });

  // combo-study ---------------------------------------------------------------------------
  std::string combo_root, combo_ontology, combo_audio = "audio", combo_image = "image", combo_baseline;
  TrainConfig combo_train;
  auto* combo_cmd = app.add_subcommand("combo-study", "Train and rank every audio x image embedding combination");
  combo_cmd->add_option("--root", combo_root, "Dataset root with translation/<model> and crossmodal/<model> stores")->required();
  combo_cmd->add_option("--ontology", combo_ontology, "Ontology JSON (default: <root>/ontology.json)");
  combo_cmd->add_option("--audio-models", combo_audio, "Comma-separated audio model directories");
  combo_cmd->add_option("--image-models", combo_image, "Comma-separated image model directories");
  combo_cmd->add_option("--baseline", combo_baseline, "audio,image crossmodal stores scored without translation");
  combo_cmd->add_option("--k", k, "Ranked list length");
  combo_cmd->add_option("--exclude-labels", exclude, "Comma-separated ids removed from relevance (default: top labels)");
  add_train_flags(combo_cmd, combo_train);
  combo_cmd->callback([&] {
    action = [&] {
      const fs::path root = combo_root;
      const fs::path onto_path = combo_ontology.empty() ? root / "ontology.json" : fs::path(combo_ontology);
      const Ontology onto = Ontology::load(onto_path);
      inputs = {root};
      auto load = [&](const std::string& name, bool with_translation) {
        ModelStores m;
        m.name = name;
        if (with_translation) m.translation = read_store(root / "translation" / name);
        m.crossmodal = read_store(root / "crossmodal" / name);
        return m;
      };
      std::vector<ModelStores> audio_models, image_models;
      for (const auto& n : split_csv(combo_audio)) audio_models.push_back(load(n, true));
      for (const auto& n : split_csv(combo_image)) image_models.push_back(load(n, true));
      std::optional<std::pair<ModelStores, ModelStores>> baseline;
      if (!combo_baseline.empty()) {
        const auto names = split_csv(combo_baseline);
        if (names.size() != 2) throw Error(ErrorCode::kConfig, "--baseline takes exactly two names");
        baseline.emplace(load(names[0], false), load(names[1], false));
      }
      ComboStudyConfig cfg{combo_train, relevance_config(onto, exclude, 21), k, g.seed};
      const auto rows = run_combination_study(audio_models, image_models, baseline, onto, cfg);
      fs::create_directories(g.out_dir);
      write_combo_csv(rows, fs::path(g.out_dir) / "combo.csv");
      for (const auto& r : rows)
        std::cout << r.kind << ' ' << r.audio_model << ' ' << r.image_model << ' ' << r.ndcg_audio_to_image << ' '
                  << r.ndcg_image_to_audio << '\n';
    };
  });

  // train-classifier / eval-classifier ------------------------------------------------------
  ForestConfig forest;
  std::vector<std::string> clf_train;
  std::string clf_ontology, clf_split = "train";
  auto* fit_cmd = app.add_subcommand("train-classifier", "Fit a random forest on projected stores");
  fit_cmd->add_option("--train", clf_train, "Projected store (repeatable; rows are pooled)")->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  fit_cmd->add_option("--ontology", clf_ontology, "Ontology JSON")->required();
  fit_cmd->add_option("--split", clf_split, "Rows to train on: train, val, test or all");
  add_forest_flags(fit_cmd, forest);
  fit_cmd->callback([&] {
    action = [&] {
      const Ontology onto = Ontology::load(clf_ontology);
      LabeledSet data;
      for (const auto& dir : clf_train) {
        inputs.emplace_back(dir);
        const EmbeddingStore store = read_store(dir);
        data = concat(data, labeled(clf_split == "all" ? all_rows(store) : filter_split(store, parse_split(clf_split)), onto));
      }
      forest.rng_seed = g.seed;
      const RandomForest model = fit_forest(data.x, data.y, forest);
      fs::create_directories(g.out_dir);
      save_forest(model, fs::path(g.out_dir) / "forest.xmrf");
      std::cout << "fit " << model.trees().size() << " trees on " << data.size() << " rows\n";
    };
  });

  std::string eval_model, eval_test, eval_split = "test";
  auto* eval_cmd = app.add_subcommand("eval-classifier", "Per-class F1 and confusion matrix of a trained forest");
  eval_cmd->add_option("--model", eval_model, "forest.xmrf")->required();
  eval_cmd->add_option("--test", eval_test, "Projected test store")->required();
  eval_cmd->add_option("--ontology", clf_ontology, "Ontology JSON")->required();
  eval_cmd->add_option("--split", eval_split, "Rows to score: train, val, test or all");
  eval_cmd->callback([&] {
    action = [&] {
      inputs = {eval_model, eval_test};
      const Ontology onto = Ontology::load(clf_ontology);
      const EmbeddingStore store = read_store(eval_test);
      const LabeledSet test = labeled(eval_split == "all" ? all_rows(store) : filter_split(store, parse_split(eval_split)), onto);
      if (test.size() == 0) throw Error(ErrorCode::kConfig, "no rows in the requested split");
      const ClassificationReport report = evaluate(load_forest(eval_model), test.x, test.y);
      fs::create_directories(g.out_dir);
      write_report_csv(report, fs::path(g.out_dir) / "report.csv");
      write_confusion_csv(report, fs::path(g.out_dir) / "confusion.csv");
      std::cout << "macro F1 " << report.macro_f1 << '\n';
    };
  });

  // mix-curve -----------------------------------------------------------------------------
  MixCurveConfig mix;
  std::string mix_root, mix_model, mix_ontology, mix_source = "audio", mix_grid;
  int mix_steps = 8;
  int mix_k = kJointDim;
  auto* mix_cmd = app.add_subcommand("mix-curve", "Macro-F1 as target-modality samples are mixed into training");
  mix_cmd->add_option("--classification", mix_root, "Directory with audio/ and image/ classification stores")->required();
  mix_cmd->add_option("--translation-model", mix_model, "model.xmtm")->required();
  mix_cmd->add_option("--ontology", mix_ontology, "Ontology JSON")->required();
  mix_cmd->add_option("--source", mix_source, "Training modality (audio or image)");
  mix_cmd->add_option("--grid", mix_grid, "Comma-separated mix-in counts (default: --steps even steps)");
  mix_cmd->add_option("--steps", mix_steps, "Grid points when --grid is not given");
  mix_cmd->add_option("--seeds", mix.n_seeds, "Repetitions averaged per point");
  mix_cmd->add_option("--pca-k", mix_k, "PCA output dimension for MMP / SM");
  add_forest_flags(mix_cmd, mix.forest);
  mix_cmd->callback([&] {
    action = [&] {
      const fs::path root = mix_root;
      inputs = {root / "audio", root / "image", mix_model};
      const Ontology onto = Ontology::load(mix_ontology);
      const TranslationModel model = load_translation(mix_model);
      mix.source = parse_modality(mix_source);
      mix.seed = g.seed;
      mix.forest.rng_seed = g.seed;
      const EmbeddingStore source = read_store(root / std::string(to_string(mix.source)));
      const EmbeddingStore target = read_store(root / std::string(to_string(mix.target())));
      auto splits = [&](const EmbeddingStore& s, const EmbeddingStore& t) {
        return ProjectedSplits{labeled(filter_split(s, Split::kTrain), onto), labeled(filter_split(s, Split::kTest), onto),
                               labeled(filter_split(t, Split::kTrain), onto), labeled(filter_split(t, Split::kTest), onto)};
      };
      const ProjectedSplits translated = splits(translate_store(model, source), translate_store(model, target));
      const PcaModel pca_source = fit_pca(filter_split(source, Split::kTrain).to_matrix(), mix_k);
      const PcaModel pca_target = fit_pca(filter_split(target, Split::kTrain).to_matrix(), mix_k);
      const ProjectedSplits pca = splits(pca_store(pca_source, source), pca_store(pca_target, target));
      if (!mix_grid.empty()) {
        for (const auto& n : split_csv(mix_grid)) mix.grid.push_back(std::stoi(n));
      } else {
        mix.grid = default_mix_grid(translated.target_train.size(), mix.forest.n_classes, mix_steps);
      }
      const auto curve = run_mix_curve(mix, translated, pca);
      fs::create_directories(g.out_dir);
      write_mix_curve_csv(curve, fs::path(g.out_dir) / "curve.csv");
      for (const auto& p : curve)
        std::cout << p.n_mixed << " mmt " << p.mmt_f1 << " mmp " << p.mmp_f1 << " sm_source " << p.sm_source_f1
                  << " sm_target " << p.sm_target_f1 << '\n';
    };
  });

  // cluster-dist --------------------------------------------------------------------------
  std::string cl_audio, cl_image, cl_ontology, cl_split = "test", cl_sort = "modality";
  auto* cluster_cmd = app.add_subcommand("cluster-dist", "Cosine distances between (modality, class) centroids");
  cluster_cmd->add_option("--audio", cl_audio, "Projected audio store")->required();
  cluster_cmd->add_option("--image", cl_image, "Projected image store")->required();
  cluster_cmd->add_option("--ontology", cl_ontology, "Ontology JSON")->required();
  cluster_cmd->add_option("--split", cl_split, "Rows to use: train, val, test or all");
  cluster_cmd->add_option("--sort", cl_sort, "Row order: modality or class")->check(CLI::IsMember({"modality", "class"}));
  cluster_cmd->callback([&] {
    action = [&] {
      inputs = {cl_audio, cl_image, cl_ontology};
      const Ontology onto = Ontology::load(cl_ontology);
      auto load = [&](const std::string& dir) {
        const EmbeddingStore s = read_store(dir);
        return labeled(cl_split == "all" ? all_rows(s) : filter_split(s, parse_split(cl_split)), onto);
      };
      const auto m = run_cluster_distances(load(cl_audio), load(cl_image), static_cast<int>(kInstrumentClasses.size()),
                                           cl_sort == "class" ? ClusterSort::kByClass : ClusterSort::kByModality);
      fs::create_directories(g.out_dir);
      write_cluster_csv(m, fs::path(g.out_dir) / "clusters.csv");
      const auto s = summarize_clusters(m);
      std::cout << "within-class cross-modal " << s.within_class_cross_modal << ", cross-class " << s.cross_class
                << ", missing cells " << m.missing.size() << '\n';
    };
  });

  // class-hist ----------------------------------------------------------------------------
  std::string hist_store, hist_ontology;
  auto* hist_cmd = app.add_subcommand("class-hist", "Samples per instrument class");
  hist_cmd->add_option("--store", hist_store, "Store directory")->required();
  hist_cmd->add_option("--ontology", hist_ontology, "Ontology JSON")->required();
  hist_cmd->callback([&] {
    action = [&] {
      inputs = {hist_store, hist_ontology};
      const auto counts = class_histogram(read_store(hist_store), Ontology::load(hist_ontology));
      fs::create_directories(g.out_dir);
      write_histogram_csv(counts, fs::path(g.out_dir) / "hist.csv");
      for (std::size_t c = 0; c < counts.size(); ++c) std::cout << kInstrumentClasses[c] << ' ' << counts[c] << '\n';
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (g.threads > 0) set_thread_count(g.threads);
    action();
    const CLI::App* used = app.get_subcommands().front();
    if (used->get_name() != "validate-store") write_run_manifest(g.out_dir, used->get_name(), echo_params(used), inputs);
    return 0;
  } catch (const Error& e) {
    std::cerr << "xmodal: " << e.what() << '\n';
    return e.code() == ErrorCode::kIo ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "xmodal: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "xmodal: bad numeric value: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace xmodal
