#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "xmodal/translation.hpp"

using namespace xmodal;
using testing::error_of;
using testing::gaussian;

namespace {

// Direct double loop over the loss definition, no matrix tricks.
double naive_loss(const Matrix& a, const Matrix& v, double margin) {
  const auto b = a.rows();
  double pos = 0.0, neg = 0.0;
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) {
      double dot = 0.0, na = 0.0, nv = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) {
        dot += a(i, k) * v(j, k);
        na += a(i, k) * a(i, k);
        nv += v(j, k) * v(j, k);
      }
      const double d = 1.0 - dot / std::max(std::sqrt(na) * std::sqrt(nv), 1e-12);
      if (i == j) pos += d * d;
      else neg += std::pow(std::max(0.0, margin - d), 2);
    }
  return pos / b + neg / (b * (b - 1.0));
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Max relative error between `grad` and central differences of f over the entries of `x`.
template <class F>
double fd_check(Matrix& x, const Matrix& grad, F&& f, double h = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double keep = x(i, j);
      x(i, j) = keep + h;
      const double up = f();
      x(i, j) = keep - h;
      const double down = f();
      x(i, j) = keep;
      worst = std::max(worst, rel_err(grad(i, j), (up - down) / (2 * h)));
    }
  return worst;
}

template <class F>
double fd_check(Vector& x, const Vector& grad, F&& f, double h = 1e-6) {
  Matrix m = x;
  Matrix g = grad;
  const double worst = fd_check(m, g, [&] {
    x = m.col(0);
    return f();
  }, h);
  x = m.col(0);
  return worst;
}

}  // namespace

TEST_CASE("batch loss matches the naive definition") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int b = 2 + trial % 5, d = 1 + trial % 7;
    const double margin = 0.25 + 0.1 * trial;
    const Matrix a = gaussian(b, d, rng), v = gaussian(b, d, rng);
    CHECK(contrastive_batch_loss(a, v, std::min(margin, 2.0)).loss ==
          doctest::Approx(naive_loss(a, v, std::min(margin, 2.0))).epsilon(1e-12));
  }
}

TEST_CASE("hand-sized loss values") {
  Matrix a(2, 2), v(2, 2);
  a << 1, 0, 0, 1;
  SUBCASE("perfect alignment leaves only the margin on negatives") {
    v = a;  // D_ii = 0, D_ij = 1, m = 1.5 -> neg term (0.5)^2 each
    CHECK(contrastive_batch_loss(a, v, 1.5).loss == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(contrastive_batch_loss(a, v, 1.0).loss == doctest::Approx(0.0));
  }
  SUBCASE("swapped pairs") {
    v << 0, 1, 1, 0;  // D_ii = 1, D_ij = 0
    CHECK(contrastive_batch_loss(a, v, 1.0).loss == doctest::Approx(1.0 + 1.0).epsilon(1e-14));
  }
  SUBCASE("zero vector is guarded") {
    Matrix z = Matrix::Zero(2, 2);
    const auto r = contrastive_batch_loss(z, a, 1.0);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(1.0));  // D = 1 everywhere
    CHECK(r.grad_audio.allFinite());
  }
  CHECK(error_of([] { contrastive_batch_loss(Matrix::Ones(1, 3), Matrix::Ones(1, 3), 1.0); }) == ErrorCode::kConfig);
}

TEST_CASE("output-space gradient matches central differences") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    const int b = 2 + trial % 4, d = 2 + trial % 6;
    const double margin = 0.5 + 0.06 * trial;
    Matrix a = gaussian(b, d, rng), v = gaussian(b, d, rng);
    const auto r = contrastive_batch_loss(a, v, margin);
    auto f = [&] { return contrastive_batch_loss(a, v, margin).loss; };
    CHECK(fd_check(a, r.grad_audio, f) < 1e-4);
    CHECK(fd_check(v, r.grad_image, f) < 1e-4);
  }
}

TEST_CASE("parameter gradients through both towers match central differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int b = 2 + trial % 4, in_a = 2 + trial % 7, in_v = 3 + trial % 5;
    const double margin = 0.8 + 0.05 * trial;
    TranslationModel m{TowerParams::glorot(in_a, rng, 6, 4), TowerParams::glorot(in_v, rng, 6, 4)};
    // Non-zero biases so their gradients are exercised away from the init point.
    m.audio.b1 = gaussian(6, 1, rng, 0.1).col(0);
    m.image.b2 = gaussian(4, 1, rng, 0.1).col(0);
    const Matrix xa = gaussian(b, in_a, rng), xv = gaussian(b, in_v, rng);
    TranslationGrad g;
    batch_loss_and_grad(m, xa, xv, margin, &g);
    auto f = [&] { return batch_loss_and_grad(m, xa, xv, margin, nullptr); };
    CHECK(fd_check(m.audio.w1, g.audio.w1, f) < 1e-4);
    CHECK(fd_check(m.audio.b1, g.audio.b1, f) < 1e-4);
    CHECK(fd_check(m.audio.w2, g.audio.w2, f) < 1e-4);
    CHECK(fd_check(m.audio.b2, g.audio.b2, f) < 1e-4);
    CHECK(fd_check(m.image.w1, g.image.w1, f) < 1e-4);
    CHECK(fd_check(m.image.b1, g.image.b1, f) < 1e-4);
    CHECK(fd_check(m.image.w2, g.image.w2, f) < 1e-4);
    CHECK(fd_check(m.image.b2, g.image.b2, f) < 1e-4);
  }
}

TEST_CASE("tower forward is two layers with a ReLU between") {
  TowerParams t = TowerParams::zeros(2, 2, 1);
  t.w1 << 1, -1, 1, 1;  // hidden = relu([x0 + x1, -x0 + x1])
  t.w2 << 2, 3;
  t.b2 << 0.5;
  Vector x(2);
  x << 1, -2;  // pre = [-1, -3] -> relu 0
  CHECK(tower_forward(t, x)(0) == doctest::Approx(0.5));
  x << 3, 1;   // pre = [4, -2] -> [4, 0]
  CHECK(tower_forward(t, x)(0) == doctest::Approx(8.5));
  Matrix batch(2, 2);
  batch << 1, -2, 3, 1;
  const Matrix out = tower_forward_batch(t, batch);
  CHECK(out(0, 0) == doctest::Approx(0.5));
  CHECK(out(1, 0) == doctest::Approx(8.5));
}

TEST_CASE("glorot init stays inside its bound") {
  std::mt19937_64 rng(0);
  const TowerParams t = TowerParams::glorot(30, rng, 20, 10);
  CHECK(t.w1.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 50.0));
  CHECK(t.w2.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 30.0));
  CHECK(t.b1.isZero());
  CHECK(t.b2.isZero());
}

TEST_CASE("early stopping counts strict improvements only") {
  EarlyStopping s(2);
  CHECK_FALSE(s.update(1.0));
  CHECK(s.last_improved());
  CHECK_FALSE(s.update(1.0));  // equal is not an improvement
  CHECK_FALSE(s.last_improved());
  CHECK(s.update(1.5));
  CHECK(s.best_epoch() == 1);

  EarlyStopping t(3);
  for (double l : {5.0, 4.0, 4.5, 3.0, 3.0, 3.0}) CHECK_FALSE(t.update(l));
  CHECK(t.update(3.0));
  CHECK(t.best_epoch() == 4);
  CHECK(t.best_loss() == 3.0);
}

TEST_CASE("first Adam step moves every weight by lr against its gradient sign") {
  std::mt19937_64 rng(2);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  TranslationModel m{TowerParams::glorot(3, rng, 4, 2), TowerParams::glorot(2, rng, 4, 2)};
  const TranslationModel before = m;
  TranslationGrad g{TowerParams::zeros(3, 4, 2), TowerParams::zeros(2, 4, 2)};
  g.audio.w1.setConstant(0.3);
  g.audio.w1(0, 0) = -2.0;
  AdamOptimizer adam(m, cfg);
  adam.step(m, g);
  // m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
  CHECK(m.audio.w1(0, 0) - before.audio.w1(0, 0) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(m.audio.w1(1, 1) - before.audio.w1(1, 1) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(m.image == before.image);  // zero gradient, zero step
}

namespace {

// Two views of the same latent through different random linear maps.
std::pair<Matrix, Matrix> toy_pairs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix z = gaussian(n, 4, rng);
  const Matrix ma = gaussian(4, 12, rng), mv = gaussian(4, 9, rng);
  return {z * ma, z * mv};
}

TrainConfig small_cfg() {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.hidden_dim = 16;
  cfg.out_dim = 8;
  cfg.max_epochs = 15;
  cfg.learning_rate = 0.01;
  return cfg;
}

}  // namespace

TEST_CASE("training lowers the validation loss and is seed-deterministic") {
  auto [a, v] = toy_pairs(120, 5);
  const TrainConfig cfg = small_cfg();
  const TrainResult r1 = train_translation(a, v, cfg);
  const TrainResult r2 = train_translation(a, v, cfg);
  CHECK(r1.model == r2.model);
  CHECK(r1.history == r2.history);
  const double best = *std::min_element(r1.history.val_loss.begin(), r1.history.val_loss.end());
  CHECK(best < r1.history.initial_val_loss);
  CHECK(r1.history.val_loss[static_cast<std::size_t>(r1.history.best_epoch - 1)] == best);
  // Best parameters come back rounded to f32.
  CHECK(r1.model.audio.w1 == r1.model.audio.w1.cast<float>().cast<double>());

  TrainConfig other = cfg;
  other.rng_seed = 1;
  CHECK_FALSE(train_translation(a, v, other).model == r1.model);
}

TEST_CASE("zero learning rate keeps the history flat and stops on patience") {
  auto [a, v] = toy_pairs(60, 6);
  TrainConfig cfg = small_cfg();
  cfg.learning_rate = 0.0;
  cfg.patience_epochs = 3;
  const TrainResult r = train_translation(a, v, cfg);
  CHECK(r.history.stop_reason == StopReason::kEarlyStopped);
  CHECK(r.history.stop_epoch == 4);
  CHECK(r.history.best_epoch == 1);
  for (double l : r.history.val_loss) CHECK(l == r.history.initial_val_loss);
  for (double l : r.history.train_loss) CHECK(l == r.history.train_loss.front());
}

TEST_CASE("non-finite inputs abort with a divergence error") {
  auto [a, v] = toy_pairs(40, 7);
  a(3, 2) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg = small_cfg();
  cfg.val_fraction = 0.0;
  try {
    train_translation(a, v, cfg);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDivergence);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.margin = 0.0;
  CHECK(error_of([&] { cfg.validate(); }) == ErrorCode::kConfig);
  cfg.margin = 2.5;
  CHECK(error_of([&] { cfg.validate(); }) == ErrorCode::kConfig);
  cfg.margin = 2.0;
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 1;
  CHECK(error_of([&] { cfg.validate(); }) == ErrorCode::kConfig);
}

TEST_CASE("checkpoint round-trip") {
  testing::TempDir dir("xmtm");
  std::mt19937_64 rng(8);
  TranslationModel m{TowerParams::glorot(5, rng), TowerParams::glorot(3, rng)};
  m.audio.b1.setConstant(0.25f);
  // Checkpoints hold f32, so round first to expect an exact match.
  for (TowerParams* t : {&m.audio, &m.image}) {
    t->w1 = t->w1.cast<float>().cast<double>();
    t->w2 = t->w2.cast<float>().cast<double>();
  }
  save_translation(m, dir / "m.xmtm");
  const TranslationModel back = load_translation(dir / "m.xmtm");
  CHECK(back == m);
  const Matrix v = gaussian(4, 3, rng);
  CHECK(translate_batch(back, Modality::kImage, v) == translate_batch(m, Modality::kImage, v));

  auto [a, x] = toy_pairs(50, 8);
  const TrainResult small = train_translation(a, x, small_cfg());
  CHECK(error_of([&] { save_translation(small.model, dir / "small.xmtm"); }) == ErrorCode::kConfig);

  {
    std::ofstream out(dir / "bad.xmtm", std::ios::binary);
    out << "NOPE";
  }
  CHECK(error_of([&] { load_translation(dir / "bad.xmtm"); }) == ErrorCode::kUnsupportedFormat);
  CHECK(error_of([&] { load_translation(dir / "none.xmtm"); }) == ErrorCode::kIo);
}
