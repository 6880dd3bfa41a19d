#pragma once

#include <filesystem>

#include "xmodal/common.hpp"

namespace xmodal {

/// Centered linear projection onto the top-k principal axes (no whitening).
struct PcaModel {
  Vector mean;                // in_dim
  Matrix components;          // k x in_dim, orthonormal rows, descending variance
  Vector explained_variance;  // k, non-increasing

  int in_dim() const { return static_cast<int>(mean.size()); }
  int k() const { return static_cast<int>(components.rows()); }
};

/// Fits on the rows of `x` (sample covariance with n-1). Each component is oriented so its
/// largest-magnitude entry is positive. If the data has rank below k, the trailing axes are
/// an arbitrary orthonormal completion with zero variance.
PcaModel fit_pca(const Eigen::Ref<const Matrix>& x, int k = kJointDim);

Vector project(const PcaModel& model, const Eigen::Ref<const Vector>& x);
/// Row-wise projection.
Matrix project_batch(const PcaModel& model, const Eigen::Ref<const Matrix>& x);

void save_pca(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);

}  // namespace xmodal
