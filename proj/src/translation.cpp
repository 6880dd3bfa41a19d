#include "xmodal/translation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "xmodal/error.hpp"

namespace xmodal {
namespace {

constexpr char kMagic[4] = {'X', 'M', 'T', 'M'};
constexpr std::uint16_t kVersion = 1;
constexpr int kCheckpointHidden = 256;

struct TowerCache {
  Matrix pre;     // B x hidden, before relu
  Matrix hidden;  // B x hidden
  Matrix out;     // B x out
};

TowerCache forward_cached(const TowerParams& t, const Eigen::Ref<const Matrix>& x) {
  TowerCache c;
  c.pre = (x * t.w1).rowwise() + t.b1.transpose();
  c.hidden = c.pre.cwiseMax(0.0);
  c.out = (c.hidden * t.w2).rowwise() + t.b2.transpose();
  return c;
}

void backward(const TowerParams& t, const Eigen::Ref<const Matrix>& x, const TowerCache& c,
              const Matrix& grad_out, TowerParams& g) {
  g.w2.noalias() = c.hidden.transpose() * grad_out;
  g.b2 = grad_out.colwise().sum().transpose();
  Matrix grad_pre = (grad_out * t.w2.transpose()).cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());
  g.w1.noalias() = x.transpose() * grad_pre;
  g.b1 = grad_pre.colwise().sum().transpose();
}

void check_input(const TowerParams& t, Eigen::Index cols) {
  if (cols != t.in_dim())
    throw Error(ErrorCode::kDimMismatch,
                "tower expects dim " + std::to_string(t.in_dim()) + ", got " + std::to_string(cols));
}

void round_to_f32(Matrix& m) { m = m.cast<float>().cast<double>(); }
void round_to_f32(Vector& v) { v = v.cast<float>().cast<double>(); }
void round_to_f32(TowerParams& t) {
  round_to_f32(t.w1);
  round_to_f32(t.b1);
  round_to_f32(t.w2);
  round_to_f32(t.b2);
}

}  // namespace

TowerParams TowerParams::zeros(int in_dim, int hidden, int out) {
  return {Matrix::Zero(in_dim, hidden), Vector::Zero(hidden), Matrix::Zero(hidden, out), Vector::Zero(out)};
}

TowerParams TowerParams::glorot(int in_dim, std::mt19937_64& rng, int hidden, int out) {
  auto init = [&rng](int rows, int cols) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
  };
  TowerParams t = zeros(in_dim, hidden, out);
  t.w1 = init(in_dim, hidden);
  t.w2 = init(hidden, out);
  return t;
}

Vector tower_forward(const TowerParams& tower, const Eigen::Ref<const Vector>& x) {
  check_input(tower, x.size());
  const Vector h = (tower.w1.transpose() * x + tower.b1).cwiseMax(0.0);
  return tower.w2.transpose() * h + tower.b2;
}

Matrix tower_forward_batch(const TowerParams& tower, const Eigen::Ref<const Matrix>& x) {
  check_input(tower, x.cols());
  return forward_cached(tower, x).out;
}

Vector translate(const TranslationModel& model, Modality modality, const Eigen::Ref<const Vector>& x) {
  return tower_forward(model.tower(modality), x);
}

Matrix translate_batch(const TranslationModel& model, Modality modality, const Eigen::Ref<const Matrix>& x) {
  return tower_forward_batch(model.tower(modality), x);
}

ContrastiveLoss contrastive_batch_loss(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& v,
                                       double margin) {
  const Eigen::Index b = a.rows();
  if (b < 2) throw Error(ErrorCode::kConfig, "contrastive loss needs at least 2 pairs per batch");
  if (v.rows() != b || v.cols() != a.cols())
    throw Error(ErrorCode::kDimMismatch, "audio and image batches differ in shape");

  const Vector na = a.rowwise().norm();
  const Vector nv = v.rowwise().norm();
  const Matrix norm_prod = na * nv.transpose();
  const Matrix den = norm_prod.cwiseMax(kCosineEps);
  const Matrix sim = (a * v.transpose()).cwiseQuotient(den);

  const double pos_scale = 1.0 / static_cast<double>(b);
  const double neg_scale = 1.0 / static_cast<double>(b * (b - 1));
  // coeff(i, j) = dLoss / dSim(i, j)
  Matrix coeff(b, b);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < b; ++j) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const double d = 1.0 - sim(i, j);
      if (i == j) {
        loss += pos_scale * d * d;
        coeff(i, j) = -2.0 * pos_scale * d;
      } else {
        const double h = std::max(0.0, margin - d);
        loss += neg_scale * h * h;
        coeff(i, j) = 2.0 * neg_scale * h;
      }
    }
  }

  // Where the norm product exceeds eps, dSim/da = v/den - sim * a / |a|^2; otherwise the
  // denominator is the constant eps and only the first term remains.
  const Matrix active = (norm_prod.array() > kCosineEps).cast<double>().matrix();
  const Matrix weighted = coeff.cwiseQuotient(den);
  const Matrix radial = coeff.cwiseProduct(sim).cwiseProduct(active);
  const Vector radial_a = radial.rowwise().sum();
  const Vector radial_v = radial.colwise().sum().transpose();

  ContrastiveLoss out;
  out.loss = loss;
  out.grad_audio = weighted * v;
  out.grad_image = weighted.transpose() * a;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (na[i] > 0.0) out.grad_audio.row(i) -= (radial_a[i] / (na[i] * na[i])) * a.row(i);
    if (nv[i] > 0.0) out.grad_image.row(i) -= (radial_v[i] / (nv[i] * nv[i])) * v.row(i);
  }
  return out;
}

double batch_loss_and_grad(const TranslationModel& model, const Eigen::Ref<const Matrix>& audio_in,
                           const Eigen::Ref<const Matrix>& image_in, double margin, TranslationGrad* grad) {
  check_input(model.audio, audio_in.cols());
  check_input(model.image, image_in.cols());
  const TowerCache ca = forward_cached(model.audio, audio_in);
  const TowerCache cv = forward_cached(model.image, image_in);
  ContrastiveLoss loss = contrastive_batch_loss(ca.out, cv.out, margin);
  if (grad != nullptr) {
    grad->audio = TowerParams::zeros(model.audio.in_dim(), model.audio.hidden_dim(), model.audio.out_dim());
    grad->image = TowerParams::zeros(model.image.in_dim(), model.image.hidden_dim(), model.image.out_dim());
    backward(model.audio, audio_in, ca, loss.grad_audio, grad->audio);
    backward(model.image, image_in, cv, loss.grad_image, grad->image);
  }
  return loss.loss;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw Error(ErrorCode::kConfig, "batch_size must be >= 2");
  if (!(margin > 0.0 && margin <= 2.0)) throw Error(ErrorCode::kConfig, "margin must lie in (0, 2]");
  if (learning_rate < 0.0) throw Error(ErrorCode::kConfig, "learning_rate must be >= 0");
  if (patience_epochs < 1) throw Error(ErrorCode::kConfig, "patience must be >= 1");
  if (max_epochs < 1) throw Error(ErrorCode::kConfig, "max_epochs must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw Error(ErrorCode::kConfig, "val_fraction must be in [0, 1)");
  if (hidden_dim < 1 || out_dim < 1) throw Error(ErrorCode::kConfig, "tower dims must be positive");
}

std::string_view to_string(StopReason r) {
  return r == StopReason::kEarlyStopped ? "early_stopped" : "max_epochs";
}

bool EarlyStopping::update(double loss) {
  ++epoch_;
  if (epoch_ == 1 || loss < best_) {
    best_ = loss;
    best_epoch_ = epoch_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

AdamOptimizer::AdamOptimizer(const TranslationModel& shape, const TrainConfig& cfg)
    : lr_(cfg.learning_rate), beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps) {
  for (auto* g : {&m_, &v_}) {
    g->audio = TowerParams::zeros(shape.audio.in_dim(), shape.audio.hidden_dim(), shape.audio.out_dim());
    g->image = TowerParams::zeros(shape.image.in_dim(), shape.image.hidden_dim(), shape.image.out_dim());
  }
}

void AdamOptimizer::step(TranslationModel& model, const TranslationGrad& grad) {
  ++t_;
  const double correct1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double correct2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update_tower = [&](TowerParams& param, const TowerParams& g, TowerParams& m, TowerParams& v) {
    auto update = [&](auto& p, const auto& gb, auto& mb, auto& vb) {
      mb = beta1_ * mb + (1.0 - beta1_) * gb;
      vb = beta2_ * vb + (1.0 - beta2_) * gb.cwiseAbs2();
      p.array() -= lr_ * (mb.array() / correct1) / ((vb.array() / correct2).sqrt() + eps_);
    };
    update(param.w1, g.w1, m.w1, v.w1);
    update(param.b1, g.b1, m.b1, v.b1);
    update(param.w2, g.w2, m.w2, v.w2);
    update(param.b2, g.b2, m.b2, v.b2);
  };
  update_tower(model.audio, grad.audio, m_.audio, v_.audio);
  update_tower(model.image, grad.image, m_.image, v_.image);
}

namespace {

// Consecutive chunks of at most `batch` indices; a trailing chunk of one is folded into the
// previous chunk because the loss needs two pairs.
std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t begin = 0; begin < n; begin += batch) ranges.emplace_back(begin, std::min(n, begin + batch));
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first < 2) {
    ranges[ranges.size() - 2].second = ranges.back().second;
    ranges.pop_back();
  }
  return ranges;
}

double chunked_loss(const TranslationModel& model, const Matrix& audio, const Matrix& image,
                    const std::vector<Eigen::Index>& order, int batch_size, double margin) {
  double total = 0.0;
  std::size_t count = 0;
  for (auto [begin, end] : chunk_ranges(order.size(), static_cast<std::size_t>(batch_size))) {
    std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    const Matrix a = audio(idx, Eigen::all);
    const Matrix v = image(idx, Eigen::all);
    total += batch_loss_and_grad(model, a, v, margin, nullptr) * static_cast<double>(end - begin);
    count += end - begin;
  }
  return total / static_cast<double>(count);
}

}  // namespace

double evaluate_loss(const TranslationModel& model, const Eigen::Ref<const Matrix>& audio,
                     const Eigen::Ref<const Matrix>& image, int batch_size, double margin) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(audio.rows()));
  std::iota(order.begin(), order.end(), 0);
  return chunked_loss(model, audio, image, order, batch_size, margin);
}

TrainResult train_translation(const Eigen::Ref<const Matrix>& audio, const Eigen::Ref<const Matrix>& image,
                              const TrainConfig& cfg) {
  cfg.validate();
  if (audio.rows() != image.rows()) throw Error(ErrorCode::kDimMismatch, "audio and image pair counts differ");
  const auto n = static_cast<std::size_t>(audio.rows());
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
  if (n == 0) throw Error(ErrorCode::kConfig, "no training pairs");
  if (n - n_val < 2 || (n_val > 0 && n_val < 2))
    throw Error(ErrorCode::kConfig, "too few pairs for a train/validation split");

  std::mt19937_64 rng(cfg.rng_seed);
  TranslationModel model{TowerParams::glorot(static_cast<int>(audio.cols()), rng, cfg.hidden_dim, cfg.out_dim),
                         TowerParams::glorot(static_cast<int>(image.cols()), rng, cfg.hidden_dim, cfg.out_dim)};

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Eigen::Index> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  const std::vector<Eigen::Index> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  // Losses are always evaluated in this fixed order so they only move when the weights do.
  const std::vector<Eigen::Index> train_eval = train_idx;
  const Matrix audio_all = audio;
  const Matrix image_all = image;

  auto monitored = [&](const TranslationModel& m, double* train_loss) {
    *train_loss = chunked_loss(m, audio_all, image_all, train_eval, cfg.batch_size, cfg.margin);
    return val_idx.empty() ? *train_loss
                           : chunked_loss(m, audio_all, image_all, val_idx, cfg.batch_size, cfg.margin);
  };

  TrainResult result;
  double unused = 0.0;
  result.history.initial_val_loss = monitored(model, &unused);

  AdamOptimizer adam(model, cfg);
  EarlyStopping stopper(cfg.patience_epochs);
  TranslationModel best = model;
  TranslationGrad grad;
  result.history.stop_reason = StopReason::kMaxEpochs;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    std::size_t batch_no = 0;
    for (auto [begin, end] : chunk_ranges(train_idx.size(), static_cast<std::size_t>(cfg.batch_size))) {
      std::vector<Eigen::Index> idx(train_idx.begin() + static_cast<std::ptrdiff_t>(begin),
                                    train_idx.begin() + static_cast<std::ptrdiff_t>(end));
      const Matrix a = audio_all(idx, Eigen::all);
      const Matrix v = image_all(idx, Eigen::all);
      const double loss = batch_loss_and_grad(model, a, v, cfg.margin, &grad);
      if (!std::isfinite(loss))
        throw Error(ErrorCode::kDivergence,
                    "non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_no));
      adam.step(model, grad);
      ++batch_no;
    }

    double train_loss = 0.0;
    const double val_loss = monitored(model, &train_loss);
    if (!std::isfinite(val_loss) || !std::isfinite(train_loss))
      throw Error(ErrorCode::kDivergence, "non-finite evaluation loss at epoch " + std::to_string(epoch));
    result.history.train_loss.push_back(train_loss);
    result.history.val_loss.push_back(val_loss);
    result.history.stop_epoch = epoch;

    const bool stop = stopper.update(val_loss);
    if (stopper.last_improved()) best = model;
    if (stop) {
      result.history.stop_reason = StopReason::kEarlyStopped;
      break;
    }
  }
  result.history.best_epoch = stopper.best_epoch();
  round_to_f32(best.audio);
  round_to_f32(best.image);
  result.model = std::move(best);
  return result;
}

std::pair<Matrix, Matrix> paired_matrices(const PairedDataset& pairs) {
  Matrix a(static_cast<Eigen::Index>(pairs.pairs.size()), pairs.audio.dim());
  Matrix v(static_cast<Eigen::Index>(pairs.pairs.size()), pairs.image.dim());
  for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
    const auto [ia, iv] = pairs.pairs[i];
    const auto ra = pairs.audio.matrix.row(ia);
    const auto rv = pairs.image.matrix.row(iv);
    for (std::size_t j = 0; j < ra.size(); ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ra[j];
    for (std::size_t j = 0; j < rv.size(); ++j) v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rv[j];
  }
  return {std::move(a), std::move(v)};
}

TrainResult train_translation(const PairedDataset& pairs, const TrainConfig& cfg) {
  if (pairs.pairs.empty()) throw Error(ErrorCode::kConfig, "paired dataset is empty");
  auto [a, v] = paired_matrices(pairs);
  return train_translation(a, v, cfg);
}

namespace {

template <typename T>
void put(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

// Row-major f32 dump of a matrix.
void put_matrix(std::string& buf, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put<float>(buf, static_cast<float>(m(i, j)));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw Error(ErrorCode::kCorruptStore, "truncated checkpoint");
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void read_matrix(Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<float>();
  }
  bool done() const { return pos_ == data_.size(); }
  const std::string& data() const { return data_; }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_translation(const TranslationModel& model, const std::filesystem::path& path) {
  std::string buf(kMagic, 4);
  put<std::uint16_t>(buf, kVersion);
  for (const TowerParams* t : {&model.audio, &model.image}) {
    if (t->hidden_dim() != kCheckpointHidden || t->out_dim() != kJointDim)
      throw Error(ErrorCode::kConfig, "checkpoint format requires 256 hidden and 128 output units");
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t->in_dim()));
    put_matrix(buf, t->w1);
    put_matrix(buf, t->b1.transpose());
    put_matrix(buf, t->w2);
    put_matrix(buf, t->b2.transpose());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

TranslationModel load_translation(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  Reader r(std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
  if (r.data().size() < 4 || std::memcmp(r.data().data(), kMagic, 4) != 0)
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": not a translation checkpoint");
  for (int i = 0; i < 4; ++i) r.template get<char>();
  if (r.get<std::uint16_t>() != kVersion) throw Error(ErrorCode::kUnsupportedFormat, "checkpoint version");
  TranslationModel model;
  for (TowerParams* t : {&model.audio, &model.image}) {
    const auto in_dim = r.get<std::uint32_t>();
    if (in_dim == 0 || in_dim > (1u << 24)) throw Error(ErrorCode::kCorruptStore, "implausible tower input dim");
    *t = TowerParams::zeros(static_cast<int>(in_dim));
    r.read_matrix(t->w1);
    Matrix row(1, t->b1.size());
    r.read_matrix(row);
    t->b1 = row.transpose();
    r.read_matrix(t->w2);
    row.resize(1, t->b2.size());
    r.read_matrix(row);
    t->b2 = row.transpose();
  }
  if (!r.done()) throw Error(ErrorCode::kCorruptStore, "trailing bytes in checkpoint");
  return model;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < history.train_loss.size(); ++e)
    out << e + 1 << ',' << history.train_loss[e] << ',' << history.val_loss[e] << '\n';
}

}  // namespace xmodal
