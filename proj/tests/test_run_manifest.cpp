#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "helpers.hpp"
#include "xmodal/run_manifest.hpp"

using namespace xmodal;

TEST_CASE("blob hash matches git") {
  // `printf 'hello\n' | git hash-object --stdin`
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("directory hashes depend on names and contents") {
  testing::TempDir a("hash"), b("hash");
  for (const auto* d : {&a, &b}) {
    std::ofstream(*d / "x.txt") << "one";
    std::filesystem::create_directories(*d / "sub");
    std::ofstream(*d / "sub" / "y.txt") << "two";
  }
  CHECK(content_hash(a.path()) == content_hash(b.path()));
  std::ofstream(b / "sub" / "y.txt") << "three";
  CHECK(content_hash(a.path()) != content_hash(b.path()));
  CHECK(content_hash(a / "x.txt") == git_blob_hash("one"));
}

TEST_CASE("run.json echoes command, parameters and input hashes") {
  testing::TempDir dir("run");
  std::ofstream(dir / "in.txt") << "data";
  write_run_manifest(dir.path(), "fit-pca", {{"k", "8"}, {"seed", "3"}}, {dir / "in.txt"});
  std::ifstream in(dir / "run.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["command"] == "fit-pca");
  CHECK(j["params"]["k"] == "8");
  CHECK(j["inputs"][(dir / "in.txt").string()] == git_blob_hash("data"));
}
