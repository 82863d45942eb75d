#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace icluster {

/// Symmetric positive-definite matrix stored as its lower band.
/// Entry (i, j) with 0 <= i - j <= bandwidth lives at data_[i * (bandwidth + 1) + bandwidth - (i - j)].
class BandedSpd {
 public:
  BandedSpd(Eigen::Index size, Eigen::Index bandwidth);

  Eigen::Index size() const { return size_; }
  Eigen::Index bandwidth() const { return bandwidth_; }

  /// Lower-triangle access; requires 0 <= i - j <= bandwidth.
  double& at(Eigen::Index i, Eigen::Index j) { return data_[index(i, j)]; }
  double at(Eigen::Index i, Eigen::Index j) const { return data_[index(i, j)]; }

  /// Adds v to (i, j) and (j, i).
  void add(Eigen::Index i, Eigen::Index j, double v);

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd to_dense() const;

 private:
  std::size_t index(Eigen::Index i, Eigen::Index j) const {
    return static_cast<std::size_t>(i * (bandwidth_ + 1) + bandwidth_ - (i - j));
  }

  Eigen::Index size_;
  Eigen::Index bandwidth_;
  std::vector<double> data_;
};

/// In-place band Cholesky, O(n * bandwidth^2). Throws NumericalError with the
/// failing pivot when the matrix is not positive definite.
class BandedCholesky {
 public:
  explicit BandedCholesky(BandedSpd matrix);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

 private:
  BandedSpd factor_;
};

/// Jacobi-preconditioned conjugate gradient on a banded SPD system.
Eigen::VectorXd conjugate_gradient(const BandedSpd& A, const Eigen::VectorXd& rhs,
                                   double rel_tol = 1e-12, int max_iter = 0);

/// Direct banded solve below `cg_threshold` unknowns, conjugate gradient above it.
Eigen::VectorXd solve_banded_spd(const BandedSpd& A, const Eigen::VectorXd& rhs,
                                 Eigen::Index cg_threshold = 200000);

}  // namespace icluster
