#pragma once

// Slow, obviously-correct reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "xmodal/common.hpp"

namespace oracles {

struct EigenDecomposition {
  xmodal::Vector values;   // descending
  xmodal::Matrix vectors;  // columns, largest-magnitude entry positive
};

/// Cyclic Jacobi rotations on the sample covariance (n - 1).
inline EigenDecomposition covariance_eigen(const xmodal::Matrix& x) {
  const auto n = x.rows(), d = x.cols();
  xmodal::Matrix c = xmodal::Matrix::Zero(d, d);
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) mean[j] += x(i, j);
    mean[j] /= static_cast<double>(n);
  }
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) s += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
      c(a, b) = s / static_cast<double>(n - 1);
    }

  xmodal::Matrix v = xmodal::Matrix::Identity(d, d);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < d; ++p)
      for (Eigen::Index q = p + 1; q < d; ++q) off += c(p, q) * c(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < d; ++p)
      for (Eigen::Index q = p + 1; q < d; ++q) {
        if (std::abs(c(p, q)) < 1e-300) continue;
        const double theta = (c(q, q) - c(p, p)) / (2.0 * c(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0), sn = t * cs;
        for (Eigen::Index k = 0; k < d; ++k) {
          const double ckp = c(k, p), ckq = c(k, q);
          c(k, p) = cs * ckp - sn * ckq;
          c(k, q) = sn * ckp + cs * ckq;
        }
        for (Eigen::Index k = 0; k < d; ++k) {
          const double cpk = c(p, k), cqk = c(q, k);
          c(p, k) = cs * cpk - sn * cqk;
          c(q, k) = sn * cpk + cs * cqk;
        }
        for (Eigen::Index k = 0; k < d; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = cs * vkp - sn * vkq;
          v(k, q) = sn * vkp + cs * vkq;
        }
      }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return c(a, a) > c(b, b); });
  EigenDecomposition out{xmodal::Vector(d), xmodal::Matrix(d, d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    out.values(i) = c(order[i], order[i]);
    xmodal::Vector col = v.col(order[i]);
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < d; ++k)
      if (std::abs(col(k)) > std::abs(col(arg))) arg = k;
    if (col(arg) < 0) col = -col;
    out.vectors.col(i) = col;
  }
  return out;
}

/// Naive DCG with linear gain.
inline double dcg(const std::vector<int>& rel, int k) {
  double s = 0.0;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(rel.size())); ++i) s += rel[i] / std::log2(i + 2.0);
  return s;
}

}  // namespace oracles
