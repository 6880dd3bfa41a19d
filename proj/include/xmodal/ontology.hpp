#pragma once

#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace xmodal {

struct OntologyNode {
  std::string id;
  std::string name;
  std::vector<std::string> child_ids;
};

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

/// Taxonomy graph in the AudioSet ontology JSON shape. Edges are child pointers but all
/// distance queries treat the graph as undirected.
class Ontology {
 public:
  explicit Ontology(std::vector<OntologyNode> nodes);

  static Ontology load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return nodes_.size(); }
  bool contains(const std::string& id) const { return index_.contains(id); }
  const OntologyNode& node(const std::string& id) const;
  const std::vector<OntologyNode>& nodes() const { return nodes_; }
  std::size_t index_of(const std::string& id) const;
  std::optional<std::string> find_by_name(const std::string& name) const;
  std::size_t degree(const std::string& id) const { return adjacency_[index_of(id)].size(); }

  /// Hop distances from `source` to every node, never entering a node in `excluded`.
  /// Unreachable nodes get kUnreachable.
  std::vector<int> distances_from(std::size_t source, const std::vector<bool>& excluded) const;
  std::vector<bool> exclusion_mask(const std::set<std::string>& excluded) const;

  /// Shortest undirected path between two non-excluded labels; kUnreachable if none.
  int graph_distance(const std::string& a, const std::string& b, const std::set<std::string>& excluded) const;

 private:
  std::vector<OntologyNode> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

struct RelevanceConfig {
  int max_distance = 21;
  std::set<std::string> excluded_labels;

  /// Generic top labels that make almost every pair relevant.
  static inline const std::vector<std::string> kDefaultExcludedNames = {"Music", "Musical instrument", "Tools",
                                                                        "Singing"};
  /// max_distance 21 and the ids of whichever default top labels exist in `ontology`.
  static RelevanceConfig defaults_for(const Ontology& ontology);
  void validate(const Ontology& ontology) const;
};

/// r = max(0, C - min(d*, C)) where d* is the smallest distance between any remaining label
/// pair after excluded labels are dropped; 0 if either set empties.
int relevance(const Ontology& ontology, const std::vector<std::string>& labels_q,
              const std::vector<std::string>& labels_c, const RelevanceConfig& cfg);

/// Same as relevance() with BFS results memoized per source label. Thread-safe.
class RelevanceScorer {
 public:
  RelevanceScorer(const Ontology& ontology, RelevanceConfig cfg);

  int operator()(const std::vector<std::string>& labels_q, const std::vector<std::string>& labels_c) const;
  const RelevanceConfig& config() const { return cfg_; }

 private:
  const std::vector<int>& distances_from(std::size_t source) const;

  const Ontology* ontology_;
  RelevanceConfig cfg_;
  std::vector<bool> mask_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::size_t, std::unique_ptr<std::vector<int>>> cache_;
};

}  // namespace xmodal
