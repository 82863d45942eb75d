#pragma once

// Penalized EM for the shared latent-variable model X_t = W_t Z + E_t.
//
// Each iteration computes the posterior moments of Z (E-step), then updates
// every block's loadings by one local-quadratic-approximation ridge step for
// its penalty, and finally its noise variances. The L1 terms are replaced by
// lambda * w^2 / |w_prev|; this surrogate majorizes 2 * lambda * |w| (up to a
// constant) so the tracked objective charges L1 and fusion terms at twice the
// nominal parameter, which keeps the iteration a monotone MM scheme.

#include <cstdint>
#include <span>
#include <vector>

#include "icluster/banded.hpp"
#include "icluster/cluster.hpp"
#include "icluster/core.hpp"
#include "icluster/model.hpp"

namespace icluster {

enum class NoiseModel {
  diagonal,   // one variance per feature
  isotropic,  // a single sigma^2 shared by all features of all blocks
};

struct FitOptions {
  int max_iter = 200;
  double tol = 1e-4;             // |delta objective| / (1 + |objective|)
  double lqa_floor = 1e-6;       // denominator floor in the quadratic approximation
  double zero_threshold = 1e-4;  // loadings below this are zeroed after convergence
  int kmeans_restarts = 20;
  std::uint64_t seed = 0;
  NoiseModel noise = NoiseModel::diagonal;
  bool exact_psi = true;
  bool zero_inactive = true;  // exact zero-row test for lasso and enet blocks after convergence
  Eigen::Index cg_threshold = 200000;  // fused systems larger than this use CG

  void validate() const;
};

struct FitResult {
  FactorModel model;
  LatentStats stats;
  Partition labels;
  std::vector<double> objective_trace;
  bool converged = false;
  int n_iter = 0;
  std::vector<std::vector<int>> selected_features;  // 0-based row indices per block
};

/// Posterior moments E[Z|X] and the aggregated second moment over all samples.
LatentStats e_step(const FactorModel& model, std::span<const OmicsBlock> blocks);

/// One LQA ridge update of a lasso-penalized block. Rows whose previous
/// coefficients are all below `lqa_floor` in magnitude stay at zero.
Matrix m_step_lasso(const OmicsBlock& block, const LatentStats& stats, const Matrix& prev_W,
                    const Vector& prev_psi, double lambda, double lqa_floor);

Matrix m_step_enet(const OmicsBlock& block, const LatentStats& stats, const Matrix& prev_W,
                   const Vector& prev_psi, double lambda1, double lambda2, double lqa_floor);

/// Fused-lasso update: one solve of the p(K-1) x p(K-1) banded system built
/// over vec(W') so fusion partners sit exactly K-1 positions apart.
Matrix m_step_fused(const OmicsBlock& block, const LatentStats& stats, const Matrix& prev_W,
                    const Vector& prev_psi, double lambda1, double lambda2, double lqa_floor,
                    Eigen::Index cg_threshold = 200000);

/// Assembled fused-lasso system (exposed for inspection and testing). Rows
/// held at zero are excluded; `free_rows` lists the feature rows kept.
struct FusedSystem {
  BandedSpd matrix{0, 0};
  Vector rhs;
  std::vector<int> free_rows;
};
FusedSystem assemble_fused_system(const OmicsBlock& block, const LatentStats& stats,
                                  const Matrix& prev_W, const Vector& prev_psi, double lambda1,
                                  double lambda2, double lqa_floor);

/// Diagonal of (X X' - W E[Z] X') / n, floored.
Vector update_psi(const OmicsBlock& block, const LatentStats& stats, const Matrix& new_W);

/// Zeroes the rows of a lasso or elastic-net block for which W_i = 0 solves
/// the row M-step exactly, i.e. max_k |X_i E[Z_k]'| <= 2 psi_i lambda1.
/// Fused blocks are left unchanged. Returns the number of rows zeroed.
int zero_inactive_rows(const OmicsBlock& block, const PenaltySpec& penalty, const LatentStats& stats,
                       const Vector& psi, Matrix& W);

/// Dispatches the M-step for one block's penalty.
Matrix m_step(const OmicsBlock& block, const PenaltySpec& penalty, const LatentStats& stats,
              const Matrix& prev_W, const Vector& prev_psi, const FitOptions& opts);

/// Penalty value as charged by the tracked objective (L1 and fusion terms at
/// twice the nominal parameter, ridge term at its nominal value).
double penalty_value(const PenaltySpec& penalty, const Matrix& W);

/// Penalized marginal log-likelihood (constants dropped):
/// -1/2 (n log|Sigma| + tr(Sigma^-1 X X')) - sum_t J_t(W_t).
double penalized_loglik(const FactorModel& model, std::span<const OmicsBlock> blocks,
                        std::span<const PenaltySpec> penalties);

FitResult fit(std::span<const OmicsBlock> blocks, int K, std::span<const PenaltySpec> penalties,
              const FitOptions& opts);

/// E[Z|X*] for new samples centered with the training means.
Matrix predict_latent(const FactorModel& model, std::span<const OmicsBlock> new_blocks);

/// Row indices with any nonzero coefficient.
std::vector<int> nonzero_rows(const Matrix& W);

}  // namespace icluster
