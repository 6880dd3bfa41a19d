#include "xmodal/pca.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "xmodal/error.hpp"

namespace xmodal {
namespace {

constexpr char kMagic[4] = {'X', 'M', 'P', 'C'};
constexpr std::uint16_t kVersion = 1;

void orient(Eigen::Ref<Vector> axis) {
  Eigen::Index arg = 0;
  axis.cwiseAbs().maxCoeff(&arg);
  if (axis[arg] < 0.0) axis = -axis;
}

// Extends the orthonormal columns of `basis` to `want` columns by Gram-Schmidt over the
// standard basis.
Matrix complete_basis(const Matrix& basis, Eigen::Index want) {
  const Eigen::Index dim = basis.rows();
  Matrix out(dim, want);
  out.leftCols(basis.cols()) = basis;
  Eigen::Index filled = basis.cols();
  for (Eigen::Index e = 0; e < dim && filled < want; ++e) {
    Vector candidate = Vector::Unit(dim, e);
    for (int pass = 0; pass < 2; ++pass)
      candidate -= out.leftCols(filled) * (out.leftCols(filled).transpose() * candidate);
    const double norm = candidate.norm();
    if (norm < 1e-8) continue;
    out.col(filled++) = candidate / norm;
  }
  return out;
}

}  // namespace

PcaModel fit_pca(const Eigen::Ref<const Matrix>& x, int k) {
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  if (k < 1) throw Error(ErrorCode::kConfig, "k must be positive");
  if (dim < k) throw Error(ErrorCode::kConfig, "input dim " + std::to_string(dim) + " is below k=" + std::to_string(k));
  if (n < 2) throw Error(ErrorCode::kConfig, "PCA needs at least 2 samples");
  if (!x.allFinite()) throw Error(ErrorCode::kValidation, "PCA input has non-finite values");

  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - model.mean.transpose();

  // Right singular vectors of the centered data are the covariance eigenvectors; the
  // singular values are returned in decreasing order.
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Eigen::Index got = std::min<Eigen::Index>(svd.matrixV().cols(), k);
  Matrix axes = svd.matrixV().leftCols(got);
  Vector variance = Vector::Zero(k);
  for (Eigen::Index i = 0; i < got; ++i) {
    const double s = svd.singularValues()[i];
    variance[i] = s * s / static_cast<double>(n - 1);
  }
  if (got < k) axes = complete_basis(axes, k);

  // Numerically-null directions carry no variance; report exact zeros for them.
  const double tol = std::max<double>(n, dim) * std::numeric_limits<double>::epsilon() *
                     (svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0);
  for (Eigen::Index i = 0; i < got; ++i)
    if (svd.singularValues()[i] <= tol) variance[i] = 0.0;

  for (Eigen::Index i = 0; i < k; ++i) orient(axes.col(i));
  model.components = axes.transpose();
  model.explained_variance = variance;
  return model;
}

Vector project(const PcaModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.in_dim())
    throw Error(ErrorCode::kDimMismatch,
                "PCA expects dim " + std::to_string(model.in_dim()) + ", got " + std::to_string(x.size()));
  return model.components * (x - model.mean);
}

Matrix project_batch(const PcaModel& model, const Eigen::Ref<const Matrix>& x) {
  if (x.cols() != model.in_dim())
    throw Error(ErrorCode::kDimMismatch,
                "PCA expects dim " + std::to_string(model.in_dim()) + ", got " + std::to_string(x.cols()));
  return (x.rowwise() - model.mean.transpose()) * model.components.transpose();
}

void save_pca(const PcaModel& model, const std::filesystem::path& path) {
  std::string buf(kMagic, 4);
  auto put = [&buf](auto value) {
    char bytes[sizeof(value)];
    std::memcpy(bytes, &value, sizeof(value));
    buf.append(bytes, sizeof(value));
  };
  put(kVersion);
  put(static_cast<std::uint32_t>(model.in_dim()));
  put(static_cast<std::uint32_t>(model.k()));
  for (Eigen::Index i = 0; i < model.mean.size(); ++i) put(static_cast<float>(model.mean[i]));
  for (Eigen::Index r = 0; r < model.components.rows(); ++r)
    for (Eigen::Index c = 0; c < model.components.cols(); ++c) put(static_cast<float>(model.components(r, c)));
  for (Eigen::Index i = 0; i < model.explained_variance.size(); ++i)
    put(static_cast<float>(model.explained_variance[i]));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

PcaModel load_pca(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": not a PCA checkpoint");
  if (data.size() < 14) throw Error(ErrorCode::kCorruptStore, "truncated PCA header");
  std::uint16_t version;
  std::uint32_t in_dim, k;
  std::memcpy(&version, data.data() + 4, 2);
  std::memcpy(&in_dim, data.data() + 6, 4);
  std::memcpy(&k, data.data() + 10, 4);
  if (version != kVersion) throw Error(ErrorCode::kUnsupportedFormat, "PCA checkpoint version");
  const std::uint64_t floats = std::uint64_t{in_dim} + std::uint64_t{k} * in_dim + k;
  if (data.size() != 14 + 4 * floats) throw Error(ErrorCode::kCorruptStore, "PCA checkpoint length mismatch");
  std::size_t pos = 14;
  auto next = [&] {
    float f;
    std::memcpy(&f, data.data() + pos, 4);
    pos += 4;
    return static_cast<double>(f);
  };
  PcaModel model;
  model.mean.resize(in_dim);
  for (std::uint32_t i = 0; i < in_dim; ++i) model.mean[i] = next();
  model.components.resize(k, in_dim);
  for (std::uint32_t r = 0; r < k; ++r)
    for (std::uint32_t c = 0; c < in_dim; ++c) model.components(r, c) = next();
  model.explained_variance.resize(k);
  for (std::uint32_t i = 0; i < k; ++i) model.explained_variance[i] = next();
  return model;
}

}  // namespace xmodal
