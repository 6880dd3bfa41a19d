#include "xmodal/ontology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>

#include <json.hpp>

#include "xmodal/error.hpp"

namespace xmodal {

Ontology::Ontology(std::vector<OntologyNode> nodes) : nodes_(std::move(nodes)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!index_.emplace(nodes_[i].id, i).second)
      throw Error(ErrorCode::kDuplicate, "ontology id '" + nodes_[i].id + "' appears twice");
  adjacency_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& child : nodes_[i].child_ids) {
      auto it = index_.find(child);
      if (it == index_.end())
        throw Error(ErrorCode::kReference, "node '" + nodes_[i].id + "' references unknown child '" + child + "'");
      if (it->second == i) throw Error(ErrorCode::kReference, "node '" + child + "' lists itself as a child");
      adjacency_[i].push_back(it->second);
      adjacency_[it->second].push_back(i);
    }
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
}

Ontology Ontology::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open ontology " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw Error(ErrorCode::kFormat, "ontology must be a JSON array");
  std::vector<OntologyNode> nodes;
  nodes.reserve(j.size());
  try {
    for (const auto& item : j) {
      OntologyNode n;
      n.id = item.at("id").get<std::string>();
      n.name = item.at("name").get<std::string>();
      n.child_ids = item.at("child_ids").get<std::vector<std::string>>();
      nodes.push_back(std::move(n));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return Ontology(std::move(nodes));
}

void Ontology::save(const std::filesystem::path& path) const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& n : nodes_) j.push_back({{"id", n.id}, {"name", n.name}, {"child_ids", n.child_ids}});
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

const OntologyNode& Ontology::node(const std::string& id) const { return nodes_[index_of(id)]; }

std::size_t Ontology::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::kLookup, "unknown ontology label '" + id + "'");
  return it->second;
}

std::optional<std::string> Ontology::find_by_name(const std::string& name) const {
  for (const auto& n : nodes_)
    if (n.name == name) return n.id;
  return std::nullopt;
}

std::vector<bool> Ontology::exclusion_mask(const std::set<std::string>& excluded) const {
  std::vector<bool> mask(nodes_.size(), false);
  for (const auto& id : excluded) mask[index_of(id)] = true;
  return mask;
}

std::vector<int> Ontology::distances_from(std::size_t source, const std::vector<bool>& excluded) const {
  std::vector<int> dist(nodes_.size(), kUnreachable);
  if (excluded[source]) return dist;
  dist[source] = 0;
  std::deque<std::size_t> queue{source};
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adjacency_[u]) {
      if (excluded[v] || dist[v] != kUnreachable) continue;
      dist[v] = dist[u] + 1;
      queue.push_back(v);
    }
  }
  return dist;
}

int Ontology::graph_distance(const std::string& a, const std::string& b, const std::set<std::string>& excluded) const {
  const std::size_t ia = index_of(a);
  const std::size_t ib = index_of(b);
  if (excluded.contains(a) || excluded.contains(b))
    throw Error(ErrorCode::kDomain, "distance requested for an excluded label");
  return distances_from(ia, exclusion_mask(excluded))[ib];
}

RelevanceConfig RelevanceConfig::defaults_for(const Ontology& ontology) {
  RelevanceConfig cfg;
  for (const auto& name : kDefaultExcludedNames)
    if (auto id = ontology.find_by_name(name)) cfg.excluded_labels.insert(*id);
  return cfg;
}

void RelevanceConfig::validate(const Ontology& ontology) const {
  if (max_distance < 1) throw Error(ErrorCode::kConfig, "max distance C must be >= 1");
  for (const auto& id : excluded_labels)
    if (!ontology.contains(id)) throw Error(ErrorCode::kLookup, "excluded label '" + id + "' not in ontology");
}

namespace {

int clamp_relevance(int d, int max_distance) {
  if (d == kUnreachable || d >= max_distance) return 0;
  return max_distance - d;
}

template <typename DistanceFn>
int best_relevance(const std::vector<std::string>& q, const std::vector<std::string>& c, const RelevanceConfig& cfg,
                   DistanceFn&& distances) {
  int best = kUnreachable;
  for (const auto& lq : q) {
    if (cfg.excluded_labels.contains(lq)) continue;
    const std::vector<int>& dist = distances(lq);
    for (const auto& lc : c) {
      if (cfg.excluded_labels.contains(lc)) continue;
      best = std::min(best, dist[static_cast<std::size_t>(distances.index(lc))]);
    }
  }
  return clamp_relevance(best, cfg.max_distance);
}

}  // namespace

int relevance(const Ontology& ontology, const std::vector<std::string>& labels_q,
              const std::vector<std::string>& labels_c, const RelevanceConfig& cfg) {
  const auto mask = ontology.exclusion_mask(cfg.excluded_labels);
  for (const auto& l : labels_c) ontology.index_of(l);
  struct Fresh {
    const Ontology& o;
    const std::vector<bool>& mask;
    std::vector<int> scratch;
    const std::vector<int>& operator()(const std::string& id) {
      scratch = o.distances_from(o.index_of(id), mask);
      return scratch;
    }
    std::size_t index(const std::string& id) const { return o.index_of(id); }
  } fresh{ontology, mask, {}};
  return best_relevance(labels_q, labels_c, cfg, fresh);
}

RelevanceScorer::RelevanceScorer(const Ontology& ontology, RelevanceConfig cfg)
    : ontology_(&ontology), cfg_(std::move(cfg)) {
  cfg_.validate(ontology);
  mask_ = ontology.exclusion_mask(cfg_.excluded_labels);
}

const std::vector<int>& RelevanceScorer::distances_from(std::size_t source) const {
  std::lock_guard lock(mutex_);
  auto& slot = cache_[source];
  if (!slot) slot = std::make_unique<std::vector<int>>(ontology_->distances_from(source, mask_));
  return *slot;
}

int RelevanceScorer::operator()(const std::vector<std::string>& labels_q,
                                const std::vector<std::string>& labels_c) const {
  for (const auto& l : labels_c) ontology_->index_of(l);
  struct Cached {
    const RelevanceScorer& s;
    const std::vector<int>& operator()(const std::string& id) { return s.distances_from(s.ontology_->index_of(id)); }
    std::size_t index(const std::string& id) const { return s.ontology_->index_of(id); }
  } cached{*this};
  return best_relevance(labels_q, labels_c, cfg_, cached);
}

}  // namespace xmodal
