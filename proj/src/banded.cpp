#include "icluster/banded.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "icluster/errors.hpp"

namespace icluster {

BandedSpd::BandedSpd(Eigen::Index size, Eigen::Index bandwidth)
    : size_(size),
      bandwidth_(bandwidth),
      data_(static_cast<std::size_t>(size * (bandwidth + 1)), 0.0) {}

void BandedSpd::add(Eigen::Index i, Eigen::Index j, double v) {
  if (i >= j) {
    at(i, j) += v;
  } else {
    at(j, i) += v;
  }
}

Eigen::VectorXd BandedSpd::multiply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(size_);
  for (Eigen::Index i = 0; i < size_; ++i) {
    y(i) += at(i, i) * x(i);
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - bandwidth_); j < i; ++j) {
      const double a = at(i, j);
      y(i) += a * x(j);
      y(j) += a * x(i);
    }
  }
  return y;
}

Eigen::MatrixXd BandedSpd::to_dense() const {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(size_, size_);
  for (Eigen::Index i = 0; i < size_; ++i) {
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - bandwidth_); j <= i; ++j) {
      A(i, j) = at(i, j);
      A(j, i) = at(i, j);
    }
  }
  return A;
}

BandedCholesky::BandedCholesky(BandedSpd matrix) : factor_(std::move(matrix)) {
  auto& L = factor_;
  const Eigen::Index n = L.size();
  const Eigen::Index bw = L.bandwidth();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index first = std::max<Eigen::Index>(0, i - bw);
    for (Eigen::Index j = first; j <= i; ++j) {
      double sum = L.at(i, j);
      for (Eigen::Index k = std::max(first, j - bw); k < j; ++k) sum -= L.at(i, k) * L.at(j, k);
      if (i == j) {
        if (!(sum > 0.0) || !std::isfinite(sum)) {
          std::ostringstream msg;
          msg << "banded Cholesky failed: pivot " << i << " of " << n << " is " << sum
              << " (matrix not positive definite)";
          throw NumericalError(msg.str());
        }
        L.at(i, i) = std::sqrt(sum);
      } else {
        L.at(i, j) = sum / L.at(j, j);
      }
    }
  }
}

Eigen::VectorXd BandedCholesky::solve(const Eigen::VectorXd& rhs) const {
  const auto& L = factor_;
  const Eigen::Index n = L.size();
  const Eigen::Index bw = L.bandwidth();
  Eigen::VectorXd y = rhs;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = std::max<Eigen::Index>(0, i - bw); k < i; ++k) y(i) -= L.at(i, k) * y(k);
    y(i) /= L.at(i, i);
  }
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    for (Eigen::Index k = i + 1; k <= std::min(n - 1, i + bw); ++k) y(i) -= L.at(k, i) * y(k);
    y(i) /= L.at(i, i);
  }
  return y;
}

Eigen::VectorXd conjugate_gradient(const BandedSpd& A, const Eigen::VectorXd& rhs, double rel_tol,
                                   int max_iter) {
  const Eigen::Index n = A.size();
  if (max_iter <= 0) max_iter = static_cast<int>(std::min<Eigen::Index>(10 * n, 100000));
  Eigen::VectorXd inv_diag(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(A.at(i, i) > 0.0)) throw NumericalError("conjugate gradient: non-positive diagonal entry");
    inv_diag(i) = 1.0 / A.at(i, i);
  }
  Eigen::VectorXd x = inv_diag.cwiseProduct(rhs);
  Eigen::VectorXd r = rhs - A.multiply(x);
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  const double target = rel_tol * std::max(rhs.norm(), 1e-300);
  for (int it = 0; it < max_iter && r.norm() > target; ++it) {
    const Eigen::VectorXd Ap = A.multiply(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) throw NumericalError("conjugate gradient: matrix not positive definite");
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  if (r.norm() > std::max(target, 1e-8 * rhs.norm())) {
    std::ostringstream msg;
    msg << "conjugate gradient did not converge (residual " << r.norm() << ")";
    throw NumericalError(msg.str());
  }
  return x;
}

Eigen::VectorXd solve_banded_spd(const BandedSpd& A, const Eigen::VectorXd& rhs,
                                 Eigen::Index cg_threshold) {
  if (A.size() > cg_threshold) return conjugate_gradient(A, rhs);
  return BandedCholesky(A).solve(rhs);
}

}  // namespace icluster
