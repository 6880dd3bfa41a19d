#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "xmodal/ontology.hpp"
#include "xmodal/synth.hpp"

using namespace xmodal;
using testing::error_of;

namespace {

// a - b - c - d chain plus an isolated e; "top" links to everything.
Ontology chain() {
  return Ontology({{"top", "Music", {"a", "b", "c", "d"}},
                   {"a", "A", {"b"}},
                   {"b", "B", {"c"}},
                   {"c", "C", {"d"}},
                   {"d", "D", {}},
                   {"e", "E", {}}});
}

}  // namespace

TEST_CASE("construction rejects bad graphs") {
  CHECK(error_of([] { Ontology({{"x", "X", {}}, {"x", "Y", {}}}); }) == ErrorCode::kDuplicate);
  CHECK(error_of([] { Ontology({{"x", "X", {"nope"}}}); }) == ErrorCode::kReference);
  CHECK(error_of([] { Ontology({{"x", "X", {"x"}}}); }) == ErrorCode::kReference);
  CHECK(error_of([] { chain().index_of("zzz"); }) == ErrorCode::kLookup);
}

TEST_CASE("distances are undirected hop counts") {
  const Ontology o = chain();
  CHECK(o.graph_distance("a", "a", {}) == 0);
  CHECK(o.graph_distance("a", "d", {}) == 2);  // through top
  CHECK(o.graph_distance("d", "a", {}) == 2);
  CHECK(o.graph_distance("a", "d", {"top"}) == 3);
  CHECK(o.graph_distance("a", "e", {}) == kUnreachable);
  CHECK(o.graph_distance("a", "d", {"top", "b"}) == kUnreachable);
  CHECK(error_of([&] { o.graph_distance("top", "a", {"top"}); }) == ErrorCode::kDomain);
  CHECK(o.degree("b") == 3);
}

TEST_CASE("relevance") {
  const Ontology o = chain();
  RelevanceConfig cfg = RelevanceConfig::defaults_for(o);
  CHECK(cfg.max_distance == 21);
  CHECK(cfg.excluded_labels == std::set<std::string>{"top"});

  CHECK(relevance(o, {"a"}, {"a"}, cfg) == 21);
  CHECK(relevance(o, {"a"}, {"d"}, cfg) == 18);
  CHECK(relevance(o, {"a"}, {"e"}, cfg) == 0);
  // Best pair across label sets wins.
  CHECK(relevance(o, {"a", "e"}, {"e"}, cfg) == 21);
  // Excluded labels vanish from both sets.
  CHECK(relevance(o, {"top"}, {"top"}, cfg) == 0);
  CHECK(relevance(o, {"top", "c"}, {"d"}, cfg) == 20);

  cfg.max_distance = 2;
  CHECK(relevance(o, {"a"}, {"d"}, cfg) == 0);
  CHECK(relevance(o, {"a"}, {"b"}, cfg) == 1);

  cfg.max_distance = 0;
  CHECK(error_of([&] { cfg.validate(o); }) == ErrorCode::kConfig);
  cfg.max_distance = 21;
  cfg.excluded_labels = {"missing"};
  CHECK(error_of([&] { cfg.validate(o); }) == ErrorCode::kLookup);
}

TEST_CASE("memoized scorer agrees with the direct computation") {
  const Ontology o = toy_ontology(18);
  const RelevanceConfig cfg = RelevanceConfig::defaults_for(o);
  RelevanceScorer scorer(o, cfg);
  for (int i = 0; i < 18; ++i)
    for (int j = 0; j < 18; ++j) {
      const std::vector<std::string> q{class_label_id(i)}, c{class_label_id(j)};
      CHECK(scorer(q, c) == relevance(o, q, c, cfg));
      CHECK(scorer(q, c) == scorer(c, q));
    }
}

TEST_CASE("load and save round-trip; unknown keys are ignored") {
  testing::TempDir dir("onto");
  chain().save(dir / "o.json");
  const Ontology back = Ontology::load(dir / "o.json");
  CHECK(back.size() == 6);
  CHECK(back.node("a").child_ids == std::vector<std::string>{"b"});
  CHECK(back.find_by_name("Music") == std::optional<std::string>("top"));

  {
    std::ofstream out(dir / "x.json");
    out << R"([{"id":"p","name":"P","child_ids":["q"],"description":"ignored"},{"id":"q","name":"Q","child_ids":[]}])";
  }
  CHECK(Ontology::load(dir / "x.json").graph_distance("p", "q", {}) == 1);
  {
    std::ofstream out(dir / "bad.json");
    out << "{}";
  }
  CHECK(error_of([&] { Ontology::load(dir / "bad.json"); }) == ErrorCode::kFormat);
  CHECK(error_of([&] { Ontology::load(dir / "none.json"); }) == ErrorCode::kIo);
}
