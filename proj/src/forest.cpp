#include "xmodal/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "xmodal/error.hpp"
#include "xmodal/parallel.hpp"

namespace xmodal {

void ForestConfig::validate() const {
  if (n_trees < 1) throw Error(ErrorCode::kConfig, "n_trees must be >= 1");
  if (max_depth < 1) throw Error(ErrorCode::kConfig, "max_depth must be >= 1");
  if (min_samples_split < 2) throw Error(ErrorCode::kConfig, "min_samples_split must be >= 2");
  if (features_per_split < 0) throw Error(ErrorCode::kConfig, "features_per_split must be >= 0");
  if (n_classes < 2) throw Error(ErrorCode::kConfig, "need at least 2 classes");
}

namespace {

int argmax_lowest(const std::vector<std::uint32_t>& counts) {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::Ref<const Matrix>& x, std::span<const int> y, const ForestConfig& cfg,
              std::mt19937_64& rng)
      : x_(x), y_(y), cfg_(cfg), rng_(rng), n_classes_(static_cast<std::size_t>(cfg.n_classes)) {
    const int dim = static_cast<int>(x.cols());
    mtry_ = cfg.features_per_split > 0 ? std::min(cfg.features_per_split, dim)
                                       : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dim))));
    features_.resize(static_cast<std::size_t>(dim));
    std::iota(features_.begin(), features_.end(), 0);
  }

  std::vector<DecisionTree::Node> build(std::vector<std::size_t> rows) {
    grow(rows, 0);
    return std::move(nodes_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = -1.0;  // sum_c L_c^2 / n_L + sum_c R_c^2 / n_R, larger is purer
  };

  int grow(std::vector<std::size_t>& rows, int depth) {
    std::vector<std::uint32_t> counts(n_classes_, 0);
    for (std::size_t r : rows) ++counts[static_cast<std::size_t>(y_[r])];
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;

    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    if (depth >= cfg_.max_depth || pure || static_cast<int>(rows.size()) < cfg_.min_samples_split)
      return make_leaf(id, std::move(counts));

    const Split split = best_split(rows, counts);
    if (split.feature < 0) return make_leaf(id, std::move(counts));

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (x_(static_cast<Eigen::Index>(r), split.feature) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  int make_leaf(int id, std::vector<std::uint32_t> counts) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.majority = argmax_lowest(counts);
    node.counts = std::move(counts);
    return id;
  }

  Split best_split(const std::vector<std::size_t>& rows, const std::vector<std::uint32_t>& total) {
    // Partial Fisher-Yates draw of mtry distinct features.
    for (int i = 0; i < mtry_; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(features_.size()) - 1);
      std::swap(features_[static_cast<std::size_t>(i)], features_[static_cast<std::size_t>(pick(rng_))]);
    }
    Split best;
    std::vector<std::pair<double, int>> column(rows.size());
    std::vector<std::uint32_t> left(n_classes_);
    for (int f = 0; f < mtry_; ++f) {
      const int feature = features_[static_cast<std::size_t>(f)];
      for (std::size_t i = 0; i < rows.size(); ++i)
        column[i] = {x_(static_cast<Eigen::Index>(rows[i]), feature), y_[rows[i]]};
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;

      std::fill(left.begin(), left.end(), 0);
      double sq_left = 0.0;
      double sq_right = 0.0;
      for (auto c : total) sq_right += static_cast<double>(c) * c;
      const double n = static_cast<double>(rows.size());
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        const auto c = static_cast<std::size_t>(column[i].second);
        const double lc = left[c];
        const double rc = total[c] - left[c];
        sq_left += 2.0 * lc + 1.0;
        sq_right -= 2.0 * rc - 1.0;
        ++left[c];
        if (column[i].first == column[i + 1].first) continue;
        const double n_left = static_cast<double>(i + 1);
        const double score = sq_left / n_left + sq_right / (n - n_left);
        if (score > best.score) {
          const double lo = column[i].first;
          const double hi = column[i + 1].first;
          double threshold = lo + (hi - lo) / 2.0;
          if (!(threshold >= lo && threshold < hi)) threshold = lo;
          best = {feature, threshold, score};
        }
      }
    }
    return best;
  }

  const Eigen::Ref<const Matrix>& x_;
  std::span<const int> y_;
  const ForestConfig& cfg_;
  std::mt19937_64& rng_;
  std::size_t n_classes_;
  int mtry_ = 1;
  std::vector<int> features_;
  std::vector<DecisionTree::Node> nodes_;
};

void check_labels(std::span<const int> y, int n_classes) {
  for (int label : y)
    if (label < 0 || label >= n_classes)
      throw Error(ErrorCode::kLookup, "class label " + std::to_string(label) + " outside [0, " +
                                          std::to_string(n_classes) + ")");
}

}  // namespace

DecisionTree DecisionTree::fit(const Eigen::Ref<const Matrix>& x, std::span<const int> y,
                               std::vector<std::size_t> rows, const ForestConfig& cfg, std::mt19937_64& rng) {
  DecisionTree tree;
  tree.n_features_ = static_cast<int>(x.cols());
  tree.nodes_ = TreeBuilder(x, y, cfg, rng).build(std::move(rows));
  return tree;
}

DecisionTree DecisionTree::from_nodes(std::vector<Node> nodes, int n_features) {
  DecisionTree tree;
  tree.nodes_ = std::move(nodes);
  tree.n_features_ = n_features;
  const auto n = static_cast<int>(tree.nodes_.size());
  if (n == 0) throw Error(ErrorCode::kFormat, "tree has no nodes");
  for (const auto& node : tree.nodes_) {
    if (node.is_leaf()) {
      if (node.counts.empty() || std::accumulate(node.counts.begin(), node.counts.end(), 0u) == 0)
        throw Error(ErrorCode::kFormat, "empty leaf histogram");
    } else if (node.feature >= n_features || node.left <= 0 || node.left >= n || node.right <= 0 || node.right >= n) {
      throw Error(ErrorCode::kFormat, "internal node with invalid feature or child");
    }
  }
  return tree;
}

int DecisionTree::predict(const Eigen::Ref<const Vector>& x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf())
    i = static_cast<std::size_t>(x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right);
  return nodes_[i].majority;
}

int DecisionTree::depth() const {
  std::vector<int> depth(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, depth[i]);
    if (!nodes_[i].is_leaf()) {
      depth[static_cast<std::size_t>(nodes_[i].left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(nodes_[i].right)] = depth[i] + 1;
    }
  }
  return deepest;
}

std::vector<int> RandomForest::votes(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != n_features_)
    throw Error(ErrorCode::kDimMismatch,
                "forest expects dim " + std::to_string(n_features_) + ", got " + std::to_string(x.size()));
  std::vector<int> tally(static_cast<std::size_t>(n_classes_), 0);
  for (const auto& tree : trees_) ++tally[static_cast<std::size_t>(tree.predict(x))];
  return tally;
}

int RandomForest::predict(const Eigen::Ref<const Vector>& x) const {
  const auto tally = votes(x);
  return static_cast<int>(std::max_element(tally.begin(), tally.end()) - tally.begin());
}

std::vector<int> RandomForest::predict_batch(const Eigen::Ref<const Matrix>& x) const {
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  parallel_for(out.size(), [&](std::size_t i) { out[i] = predict(x.row(static_cast<Eigen::Index>(i)).transpose()); });
  return out;
}

RandomForest fit_forest(const Eigen::Ref<const Matrix>& x, std::span<const int> y, const ForestConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != n) throw Error(ErrorCode::kDimMismatch, "feature and label counts differ");
  if (n < 2) throw Error(ErrorCode::kDegenerateFit, "need at least 2 samples");
  check_labels(y, cfg.n_classes);
  if (std::set<int>(y.begin(), y.end()).size() < 2)
    throw Error(ErrorCode::kDegenerateFit, "training labels contain a single class");
  if (!x.allFinite()) throw Error(ErrorCode::kValidation, "non-finite features");

  std::vector<DecisionTree> trees(static_cast<std::size_t>(cfg.n_trees));
  parallel_for(trees.size(), [&](std::size_t t) {
    std::mt19937_64 rng(cfg.rng_seed + t);
    std::vector<std::size_t> rows(n);
    if (cfg.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      for (auto& r : rows) r = draw(rng);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    trees[t] = DecisionTree::fit(x, y, std::move(rows), cfg, rng);
  });
  return {std::move(trees), static_cast<int>(x.cols()), cfg.n_classes};
}

std::string class_name(int index) {
  if (index >= 0 && index < static_cast<int>(kInstrumentClasses.size()))
    return std::string(kInstrumentClasses[static_cast<std::size_t>(index)]);
  return "class_" + std::to_string(index);
}

ClassificationReport classification_report(std::span<const int> truth, std::span<const int> predicted,
                                           int n_classes) {
  if (truth.size() != predicted.size()) throw Error(ErrorCode::kDimMismatch, "truth and prediction counts differ");
  check_labels(truth, n_classes);
  check_labels(predicted, n_classes);
  const auto k = static_cast<std::size_t>(n_classes);
  ClassificationReport rep;
  rep.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++rep.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  rep.class_names.resize(k);
  rep.precision.resize(k);
  rep.recall.resize(k);
  rep.f1.resize(k);
  rep.support.resize(k);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t predicted_c = 0;
    for (std::size_t t = 0; t < k; ++t) predicted_c += rep.confusion[t][c];
    const std::size_t support = std::accumulate(rep.confusion[c].begin(), rep.confusion[c].end(), std::size_t{0});
    const double tp = static_cast<double>(rep.confusion[c][c]);
    const double p = predicted_c == 0 ? 0.0 : tp / static_cast<double>(predicted_c);
    const double r = support == 0 ? 0.0 : tp / static_cast<double>(support);
    rep.class_names[c] = class_name(static_cast<int>(c));
    rep.precision[c] = p;
    rep.recall[c] = r;
    rep.f1[c] = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    rep.support[c] = support;
    f1_sum += rep.f1[c];
  }
  rep.macro_f1 = f1_sum / static_cast<double>(k);
  return rep;
}

ClassificationReport evaluate(const RandomForest& forest, const Eigen::Ref<const Matrix>& x, std::span<const int> y) {
  const auto predicted = forest.predict_batch(x);
  return classification_report(y, predicted, forest.n_classes());
}

void write_report_csv(const ClassificationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "class,precision,recall,f1,support\n";
  std::size_t total = 0;
  double mp = 0.0, mr = 0.0;
  for (std::size_t c = 0; c < report.class_names.size(); ++c) {
    out << report.class_names[c] << ',' << report.precision[c] << ',' << report.recall[c] << ',' << report.f1[c]
        << ',' << report.support[c] << '\n';
    total += report.support[c];
    mp += report.precision[c];
    mr += report.recall[c];
  }
  const auto k = static_cast<double>(report.class_names.size());
  out << "macro," << mp / k << ',' << mr / k << ',' << report.macro_f1 << ',' << total << '\n';
}

void write_confusion_csv(const ClassificationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "truth\\predicted";
  for (const auto& name : report.class_names) out << ',' << name;
  out << '\n';
  for (std::size_t t = 0; t < report.confusion.size(); ++t) {
    out << report.class_names[t];
    for (auto v : report.confusion[t]) out << ',' << v;
    out << '\n';
  }
}

namespace {

constexpr char kMagic[4] = {'X', 'M', 'R', 'F'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void save_forest(const RandomForest& forest, const std::filesystem::path& path) {
  std::string buf(kMagic, 4);
  auto put = [&buf](auto value) {
    char bytes[sizeof(value)];
    std::memcpy(bytes, &value, sizeof(value));
    buf.append(bytes, sizeof(value));
  };
  put(kVersion);
  put(static_cast<std::uint32_t>(forest.n_features()));
  put(static_cast<std::uint32_t>(forest.n_classes()));
  put(static_cast<std::uint32_t>(forest.trees().size()));
  for (const auto& tree : forest.trees()) {
    put(static_cast<std::uint32_t>(tree.nodes().size()));
    for (const auto& node : tree.nodes()) {
      put(static_cast<std::int32_t>(node.feature));
      put(node.threshold);
      put(static_cast<std::int32_t>(node.left));
      put(static_cast<std::int32_t>(node.right));
      if (node.is_leaf())
        for (auto c : node.counts) put(c);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

RandomForest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": not a forest checkpoint");
  std::size_t pos = 4;
  auto get = [&](auto& value) {
    if (pos + sizeof(value) > data.size()) throw Error(ErrorCode::kCorruptStore, "truncated forest checkpoint");
    std::memcpy(&value, data.data() + pos, sizeof(value));
    pos += sizeof(value);
  };
  std::uint16_t version;
  std::uint32_t n_features, n_classes, n_trees;
  get(version);
  if (version != kVersion) throw Error(ErrorCode::kUnsupportedFormat, "forest checkpoint version");
  get(n_features);
  get(n_classes);
  get(n_trees);
  std::vector<DecisionTree> trees;
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    std::uint32_t n_nodes;
    get(n_nodes);
    std::vector<DecisionTree::Node> nodes(n_nodes);
    for (auto& node : nodes) {
      std::int32_t feature, left, right;
      get(feature);
      get(node.threshold);
      get(left);
      get(right);
      node.feature = feature;
      node.left = left;
      node.right = right;
      if (node.is_leaf()) {
        node.counts.resize(n_classes);
        for (auto& c : node.counts) get(c);
        node.majority = argmax_lowest(node.counts);
      }
    }
    trees.push_back(DecisionTree::from_nodes(std::move(nodes), static_cast<int>(n_features)));
  }
  if (pos != data.size()) throw Error(ErrorCode::kCorruptStore, "trailing bytes in forest checkpoint");
  return {std::move(trees), static_cast<int>(n_features), static_cast<int>(n_classes)};
}

}  // namespace xmodal
