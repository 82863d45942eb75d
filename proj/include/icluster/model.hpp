#pragma once

// Domain types shared by every stage of the integrative clustering pipeline:
// data blocks, penalty choices, the factor model and its posterior statistics.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace icluster {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Feature-major storage: every M-step update walks one feature row at a time.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One data type: p features (rows) by n samples (columns).
struct OmicsBlock {
  std::string name;
  RowMatrix values;
  std::vector<std::string> feature_ids;
  std::vector<std::string> sample_ids;
  bool ordered = false;   // row order carries meaning (e.g. genomic position)
  bool centered = false;
  Vector row_means;       // means removed by center_rows; empty before centering
  Vector row_scales;      // standard deviations divided out by scale_rows; empty if unscaled

  int features() const { return static_cast<int>(values.rows()); }
  int samples() const { return static_cast<int>(values.cols()); }
};

struct Lasso {
  double lambda = 0.0;
};
struct ElasticNet {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};
struct FusedLasso {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

using PenaltySpec = std::variant<Lasso, ElasticNet, FusedLasso>;

enum class PenaltyKind { lasso, elastic_net, fused_lasso };

PenaltyKind kind_of(const PenaltySpec& penalty);
std::string to_string(PenaltyKind kind);
PenaltyKind parse_penalty_kind(const std::string& text);

/// Number of tuning parameters carried by a penalty kind (1 or 2).
int parameter_count(PenaltyKind kind);

/// Builds a penalty of the given kind from its parameters in declaration order.
PenaltySpec make_penalty(PenaltyKind kind, const std::vector<double>& params);
std::vector<double> penalty_parameters(const PenaltySpec& penalty);

/// Throws PreconditionError on negative or non-finite parameters, or a fused
/// penalty attached to an unordered block.
void validate_penalty(const PenaltySpec& penalty, const OmicsBlock& block);

/// Fitted parameters for K clusters: K-1 latent variables shared by all blocks.
struct FactorModel {
  int K = 2;
  std::vector<Matrix> W;    // block t: p_t x (K-1)
  std::vector<Vector> psi;  // block t: diagonal of Psi_t, length p_t

  int latent_dim() const { return K - 1; }
  int total_features() const;
  /// Throws PreconditionError when shapes disagree or a variance is not positive.
  void validate() const;
};

/// Posterior moments of the latent variables for the current model.
struct LatentStats {
  Matrix EZ;        // (K-1) x n posterior means, one column per sample
  Matrix cov_post;  // (K-1) x (K-1), I - W' Sigma^-1 W, shared by all samples
  Matrix SZZ;       // n * cov_post + EZ EZ'
};

}  // namespace icluster
