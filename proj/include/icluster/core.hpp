#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "icluster/model.hpp"

namespace icluster {

/// Subtracts each row's mean. The removed means are kept in `row_means` so
/// results can be reported on the original scale. Throws DataError naming the
/// first non-finite entry.
OmicsBlock center_rows(const OmicsBlock& block);

/// Centers against externally supplied means (e.g. a training split's means).
OmicsBlock center_rows_with(const OmicsBlock& block, const Vector& means);

/// Divides each row by its standard deviation. Off by default in analyses;
/// rows with zero variance are left unscaled.
OmicsBlock scale_rows(const OmicsBlock& block);

/// Throws DataError unless all blocks share n and the sample ordering.
void validate_blocks(std::span<const OmicsBlock> blocks);

/// Lower bound for a feature's noise variance: max(1e-6, 1e-4 * mean square of the row).
Vector psi_floor(const OmicsBlock& block);

/// Row-stacks the blocks' values into one (sum p_t) x n matrix.
Matrix concatenate(std::span<const OmicsBlock> blocks);

/// The given sample columns of a block (feature metadata kept, centering reset).
OmicsBlock select_samples(const OmicsBlock& block, std::span<const int> columns);

/// Starting point for EM: W = U_q D_q / sqrt(n) from the rank-(K-1) truncated
/// SVD of the stacked data, psi = floored residual variance. The SVD is exact
/// so the result does not depend on `seed`; singular-vector signs are fixed so
/// the largest-magnitude entry of each column of U is positive.
FactorModel init_model(std::span<const OmicsBlock> blocks, int K, std::uint64_t seed = 0);

/// Woodbury form of Sigma = W W' + Psi for a model stacked over all blocks.
/// Holds Psi^-1 W and the factorised core (I + W' Psi^-1 W); never forms the
/// p x p covariance.
class WoodburyFactor {
 public:
  explicit WoodburyFactor(const FactorModel& model);

  /// Sigma^-1 X for X stacked over all blocks (rows in block order).
  Matrix apply(const Matrix& X) const;
  /// W' Sigma^-1 X = core^-1 W' Psi^-1 X, the posterior latent mean.
  Matrix latent_mean(std::span<const OmicsBlock> blocks) const;
  Matrix latent_mean(const Matrix& X) const;

  /// (I + W' Psi^-1 W), q x q.
  const Matrix& core() const { return core_; }
  /// core^-1, which equals I - W' Sigma^-1 W.
  Matrix core_inverse() const;
  /// log det Sigma via the matrix determinant lemma.
  double log_det_sigma() const;
  double core_condition() const { return condition_; }

  /// W' Psi^-1 X summed over blocks, q x n.
  Matrix projected(std::span<const OmicsBlock> blocks) const;

 private:
  Matrix W_;          // stacked loadings, p x q
  Vector psi_;        // stacked variances
  Matrix psi_inv_W_;  // Psi^-1 W
  Matrix core_;
  Eigen::LLT<Matrix> core_llt_;
  double condition_ = 1.0;
  std::vector<Eigen::Index> offsets_;
};

/// Sigma^-1 X through the Woodbury identity, plus the q x q core matrix.
struct WoodburyResult {
  Matrix sigma_inv_X;
  Matrix core;
};
WoodburyResult woodbury_apply(const FactorModel& model, const Matrix& X);

}  // namespace icluster
