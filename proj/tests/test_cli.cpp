#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include <json.hpp>

#include "helpers.hpp"
#include "xmodal/store.hpp"

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(XMODAL_BIN) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) out += buf.data();
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const char* kSmall =
    " --n-classes 4 --latent-dim 6 --audio-dim 16 --image-dim 20 --shared-dim 8"
    " --translation-per-class 8 --crossmodal-per-class 3 --train-per-class 6 --test-per-class 3";

}  // namespace

TEST_CASE("help lists the default hyperparameters") {
  const Run train = run("train-translation --help");
  CHECK(train.code == 0);
  CHECK(train.out.find("--margin FLOAT [1]") != std::string::npos);
  CHECK(train.out.find("--lr FLOAT [0.001]") != std::string::npos);
  CHECK(train.out.find("--patience INT [5]") != std::string::npos);
  CHECK(train.out.find("--batch-size INT [4096]") != std::string::npos);
  const Run ret = run("retrieve-eval --help");
  CHECK(ret.out.find("--k INT [30]") != std::string::npos);
  const Run fit = run("train-classifier --help");
  CHECK(fit.out.find("--n-trees INT [100]") != std::string::npos);
  CHECK(fit.out.find("--max-depth INT [32]") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(run("").code == 1);
  CHECK(run("train-translation --bogus 1").code == 1);
  CHECK(run("validate-store --store /nonexistent/dir").code == 2);
  testing::TempDir dir("cli");
  CHECK(run("synth --n-classes 40 --out-dir " + dir.path().string()).code == 1);
}

TEST_CASE("synth output is valid and reproducible") {
  testing::TempDir a("cli"), b("cli");
  REQUIRE(run(std::string("synth --seed 4") + kSmall + " --out-dir " + a.path().string()).code == 0);
  REQUIRE(run(std::string("synth") + kSmall + " --seed 4 --out-dir " + b.path().string()).code == 0);
  for (const char* sub : {"translation/audio", "crossmodal/image-shared", "classification/image"}) {
    CHECK(slurp(a / sub / xmodal::kEmbeddingsFile) == slurp(b / sub / xmodal::kEmbeddingsFile));
    CHECK(slurp(a / sub / xmodal::kManifestFile) == slurp(b / sub / xmodal::kManifestFile));
  }
  const Run v = run("validate-store --store " + (a / "translation/audio").string() + " --store " +
                    (a / "classification/image").string() + " --ontology " + (a / "ontology.json").string());
  CHECK(v.code == 0);
  CHECK(v.out.find("32 rows, dim 16") != std::string::npos);

  const auto manifest = nlohmann::json::parse(slurp(a / "run.json"));
  CHECK(manifest["command"] == "synth");
  CHECK(manifest["params"]["seed"] == "4");
}

TEST_CASE("pipeline through the CLI with a JSON config") {
  testing::TempDir d("cli");
  const auto p = [&](const std::string& s) { return (d / s).string(); };
  REQUIRE(run(std::string("synth") + kSmall + " --out-dir " + p("data")).code == 0);
  {
    std::ofstream cfg(d / "cfg.json");
    cfg << R"({"seed": 2, "train-translation": {"batch-size": 16, "max-epochs": 3}})";
  }
  REQUIRE(run("train-translation --config " + p("cfg.json") + " --pairs " + p("data/translation") + " --out-dir " +
              p("tt")).code == 0);
  const auto params = nlohmann::json::parse(slurp(d / "tt/run.json"))["params"];
  CHECK(params["batch-size"] == "16");
  CHECK(params["seed"] == "2");
  CHECK(std::filesystem::exists(d / "tt/model.xmtm"));
  CHECK(slurp(d / "tt/history.csv").rfind("epoch,train_loss,val_loss\n", 0) == 0);

  // Command-line values beat the config file.
  REQUIRE(run("train-translation --config " + p("cfg.json") + " --batch-size 8 --pairs " + p("data/translation") +
              " --out-dir " + p("tt2")).code == 0);
  CHECK(nlohmann::json::parse(slurp(d / "tt2/run.json"))["params"]["batch-size"] == "8");

  REQUIRE(run("project --store " + p("data/crossmodal/audio") + " --model " + p("tt/model.xmtm") + " --out-dir " +
              p("ja")).code == 0);
  REQUIRE(run("project --store " + p("data/crossmodal/image") + " --model " + p("tt/model.xmtm") + " --out-dir " +
              p("ji")).code == 0);
  const Run r = run("retrieve-eval --k 5 --audio " + p("ja") + " --image " + p("ji") + " --ontology " +
                    p("data/ontology.json") + " --out-dir " + p("re"));
  CHECK(r.code == 0);
  CHECK(r.out.find("audio_to_image mean NDCG") != std::string::npos);
  const Run again = run("retrieve-eval --k 5 --audio " + p("ja") + " --image " + p("ji") + " --ontology " +
                        p("data/ontology.json") + " --out-dir " + p("re2"));
  CHECK(slurp(d / "re/ndcg.csv") == slurp(d / "re2/ndcg.csv"));

  REQUIRE(run("project --store " + p("data/classification/audio") + " --model " + p("tt/model.xmtm") +
              " --out-dir " + p("ca")).code == 0);
  REQUIRE(run("train-classifier --n-trees 5 --train " + p("ca") + " --ontology " + p("data/ontology.json") +
              " --out-dir " + p("f")).code == 0);
  const Run ev = run("eval-classifier --model " + p("f/forest.xmrf") + " --test " + p("ca") + " --ontology " +
                     p("data/ontology.json") + " --out-dir " + p("ev"));
  CHECK(ev.code == 0);
  CHECK(ev.out.find("macro F1") != std::string::npos);
  CHECK(std::filesystem::exists(d / "ev/confusion.csv"));

  CHECK(run("project --store " + p("ca") + " --model " + p("data/ontology.json") + " --out-dir " + p("x")).code == 1);
  CHECK(run("class-hist --threads 2 --store " + p("ca") + " --ontology " + p("data/ontology.json") + " --out-dir " +
            p("h")).code == 0);
}
