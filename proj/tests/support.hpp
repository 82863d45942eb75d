#pragma once

#include <random>
#include <vector>

#include "icluster/core.hpp"
#include "icluster/model.hpp"
#include "icluster/random.hpp"

namespace testing {

using icluster::Matrix;
using icluster::Vector;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  icluster::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

inline icluster::OmicsBlock make_block(const Matrix& X, bool ordered = false, bool center = true,
                                       const std::string& name = "block") {
  icluster::OmicsBlock b;
  b.name = name;
  b.values = X;
  b.ordered = ordered;
  for (Eigen::Index i = 0; i < X.rows(); ++i) b.feature_ids.push_back("g" + std::to_string(i + 1));
  for (Eigen::Index j = 0; j < X.cols(); ++j) b.sample_ids.push_back("s" + std::to_string(j + 1));
  return center ? icluster::center_rows(b) : b;
}

/// Model with Gaussian loadings and variances in [0.5, 1.5].
inline icluster::FactorModel random_model(const std::vector<int>& features, int K, std::uint64_t seed) {
  icluster::FactorModel m;
  m.K = K;
  icluster::Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  for (std::size_t t = 0; t < features.size(); ++t) {
    m.W.push_back(random_matrix(features[t], K - 1, icluster::derive_seed(seed, {t})));
    Vector psi(features[t]);
    for (int i = 0; i < features[t]; ++i) psi(i) = unif(rng);
    m.psi.push_back(psi);
  }
  return m;
}

inline Matrix stacked_W(const icluster::FactorModel& m) {
  Eigen::Index p = 0;
  for (const auto& W : m.W) p += W.rows();
  Matrix out(p, m.K - 1);
  Eigen::Index at = 0;
  for (const auto& W : m.W) {
    out.middleRows(at, W.rows()) = W;
    at += W.rows();
  }
  return out;
}

inline Vector stacked_psi(const icluster::FactorModel& m) {
  Eigen::Index p = 0;
  for (const auto& v : m.psi) p += v.size();
  Vector out(p);
  Eigen::Index at = 0;
  for (const auto& v : m.psi) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

/// Dense covariance W W' + Psi.
inline Matrix dense_sigma(const icluster::FactorModel& m) {
  const Matrix W = stacked_W(m);
  Matrix S = W * W.transpose();
  S.diagonal() += stacked_psi(m);
  return S;
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

}  // namespace testing
