#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "xmodal/common.hpp"
#include "xmodal/store.hpp"

namespace xmodal {

/// Two-layer MLP: out = W2^T relu(W1^T x + b1) + b2.
struct TowerParams {
  Matrix w1;  // in_dim x hidden
  Vector b1;  // hidden
  Matrix w2;  // hidden x out
  Vector b2;  // out

  static TowerParams zeros(int in_dim, int hidden = 256, int out = kJointDim);
  /// Glorot-uniform weights, zero biases.
  static TowerParams glorot(int in_dim, std::mt19937_64& rng, int hidden = 256, int out = kJointDim);

  int in_dim() const { return static_cast<int>(w1.rows()); }
  int hidden_dim() const { return static_cast<int>(w1.cols()); }
  int out_dim() const { return static_cast<int>(w2.cols()); }
  bool operator==(const TowerParams& o) const {
    return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

Vector tower_forward(const TowerParams& tower, const Eigen::Ref<const Vector>& x);
/// Row-wise forward pass over a batch (one sample per row).
Matrix tower_forward_batch(const TowerParams& tower, const Eigen::Ref<const Matrix>& x);

struct TranslationModel {
  TowerParams audio;
  TowerParams image;

  const TowerParams& tower(Modality m) const { return m == Modality::kAudio ? audio : image; }
  TowerParams& tower(Modality m) { return m == Modality::kAudio ? audio : image; }
  bool operator==(const TranslationModel&) const = default;
};

Vector translate(const TranslationModel& model, Modality modality, const Eigen::Ref<const Vector>& x);
Matrix translate_batch(const TranslationModel& model, Modality modality, const Eigen::Ref<const Matrix>& x);

struct ContrastiveLoss {
  double loss = 0.0;
  Matrix grad_audio;  // B x out
  Matrix grad_image;
};

/// Margin contrastive loss over cosine distance with in-batch negatives:
///   (1/B) sum_i D(a_i, v_i)^2 + 1/(B(B-1)) sum_{i!=j} max(0, m - D(a_i, v_j))^2
ContrastiveLoss contrastive_batch_loss(const Eigen::Ref<const Matrix>& audio_out,
                                       const Eigen::Ref<const Matrix>& image_out, double margin);

struct TranslationGrad {
  TowerParams audio;
  TowerParams image;
};

/// Loss of a paired batch pushed through both towers, with gradients for every parameter.
double batch_loss_and_grad(const TranslationModel& model, const Eigen::Ref<const Matrix>& audio_in,
                           const Eigen::Ref<const Matrix>& image_in, double margin, TranslationGrad* grad);

struct TrainConfig {
  int batch_size = 4096;
  double margin = 1.0;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int patience_epochs = 5;
  int max_epochs = 200;
  double val_fraction = 0.1;
  std::uint64_t rng_seed = 0;
  int hidden_dim = 256;
  int out_dim = kJointDim;

  void validate() const;
};

enum class StopReason { kEarlyStopped, kMaxEpochs };
std::string_view to_string(StopReason r);

struct TrainHistory {
  double initial_val_loss = 0.0;
  std::vector<double> train_loss;  // index e-1 is epoch e
  std::vector<double> val_loss;
  int stop_epoch = 0;
  int best_epoch = 0;
  StopReason stop_reason = StopReason::kMaxEpochs;

  bool operator==(const TrainHistory&) const = default;
};

/// Patience-based stopping on a monitored loss; an epoch improves only if strictly lower.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Feeds the loss of the next epoch; returns true once `patience` epochs in a row failed
  /// to improve on the best.
  bool update(double loss);
  bool last_improved() const { return stale_ == 0; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_ = 0.0;
};

/// Adam over both towers with bias-corrected moments.
class AdamOptimizer {
 public:
  AdamOptimizer(const TranslationModel& shape, const TrainConfig& cfg);
  void step(TranslationModel& model, const TranslationGrad& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  TranslationGrad m_, v_;
};

struct TrainResult {
  TranslationModel model;
  TrainHistory history;
};

/// Self-supervised training on row-aligned pairs (audio row i pairs with image row i).
/// Labels are never consulted. Returns the best-validation parameters rounded to f32.
TrainResult train_translation(const Eigen::Ref<const Matrix>& audio, const Eigen::Ref<const Matrix>& image,
                              const TrainConfig& cfg);
TrainResult train_translation(const PairedDataset& pairs, const TrainConfig& cfg);

/// Loss over a paired set evaluated in consecutive chunks of batch_size, weighted by chunk size.
double evaluate_loss(const TranslationModel& model, const Eigen::Ref<const Matrix>& audio,
                     const Eigen::Ref<const Matrix>& image, int batch_size, double margin);

void save_translation(const TranslationModel& model, const std::filesystem::path& path);
TranslationModel load_translation(const std::filesystem::path& path);
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

/// Rows of `pairs` gathered into aligned audio / image matrices.
std::pair<Matrix, Matrix> paired_matrices(const PairedDataset& pairs);

}  // namespace xmodal
