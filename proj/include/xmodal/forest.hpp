#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "xmodal/common.hpp"

namespace xmodal {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 32;
  int min_samples_split = 2;
  int features_per_split = 0;  // 0 = ceil(sqrt(dim))
  bool bootstrap = true;
  std::uint64_t rng_seed = 0;
  int n_classes = static_cast<int>(kInstrumentClasses.size());

  void validate() const;
};

/// CART tree with Gini splits. Internal nodes send x[feature] <= threshold to the left.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<std::uint32_t> counts;  // leaf class histogram
    int majority = 0;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const Node&) const = default;
  };

  static DecisionTree fit(const Eigen::Ref<const Matrix>& x, std::span<const int> y, std::vector<std::size_t> rows,
                          const ForestConfig& cfg, std::mt19937_64& rng);
  static DecisionTree from_nodes(std::vector<Node> nodes, int n_features);

  int predict(const Eigen::Ref<const Vector>& x) const;
  int depth() const;
  const std::vector<Node>& nodes() const { return nodes_; }
  bool operator==(const DecisionTree&) const = default;

 private:
  std::vector<Node> nodes_;
  int n_features_ = 0;
};

class RandomForest {
 public:
  RandomForest() = default;
  RandomForest(std::vector<DecisionTree> trees, int n_features, int n_classes)
      : trees_(std::move(trees)), n_features_(n_features), n_classes_(n_classes) {}

  /// Majority vote over trees; ties go to the lowest class index.
  int predict(const Eigen::Ref<const Vector>& x) const;
  std::vector<int> predict_batch(const Eigen::Ref<const Matrix>& x) const;
  std::vector<int> votes(const Eigen::Ref<const Vector>& x) const;

  const std::vector<DecisionTree>& trees() const { return trees_; }
  int n_features() const { return n_features_; }
  int n_classes() const { return n_classes_; }
  bool operator==(const RandomForest&) const = default;

 private:
  std::vector<DecisionTree> trees_;
  int n_features_ = 0;
  int n_classes_ = 0;
};

/// Tree t is grown from a bootstrap sample drawn with seed rng_seed + t, so results do not
/// depend on how trees are scheduled across threads.
RandomForest fit_forest(const Eigen::Ref<const Matrix>& x, std::span<const int> y, const ForestConfig& cfg);

struct ClassificationReport {
  std::vector<std::string> class_names;
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  double macro_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]

  bool operator==(const ClassificationReport&) const = default;
};

/// Per-class metrics over all n_classes; an undefined precision or recall counts as 0.
ClassificationReport classification_report(std::span<const int> truth, std::span<const int> predicted,
                                           int n_classes);
ClassificationReport evaluate(const RandomForest& forest, const Eigen::Ref<const Matrix>& x, std::span<const int> y);

std::string class_name(int index);

void write_report_csv(const ClassificationReport& report, const std::filesystem::path& path);
void write_confusion_csv(const ClassificationReport& report, const std::filesystem::path& path);

void save_forest(const RandomForest& forest, const std::filesystem::path& path);
RandomForest load_forest(const std::filesystem::path& path);

}  // namespace xmodal
