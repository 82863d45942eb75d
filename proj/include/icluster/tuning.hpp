#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icluster/em.hpp"
#include "icluster/model.hpp"

namespace icluster {

enum class Scale { log, linear };

struct ParamRange {
  double lo = 0.0;
  double hi = 1.0;
  Scale scale = Scale::log;
};

/// One penalty parameter of a block: either searched over `range` or held at `value`.
struct ParamSlot {
  bool tuned = true;
  double value = 0.0;
  ParamRange range;
};

struct BlockSearch {
  PenaltyKind kind = PenaltyKind::lasso;
  std::vector<ParamSlot> params;  // parameter_count(kind) entries
};

/// Per-block parameter ranges. The design dimension is the number of tuned slots.
struct SearchDomain {
  std::vector<BlockSearch> blocks;

  int dimension() const;
  /// Throws PreconditionError on empty domains, lo >= hi, negative bounds or
  /// log-scaled ranges starting at zero.
  void validate() const;
  /// Penalties for one design point (tuned parameters in block order).
  std::vector<PenaltySpec> penalties_at(std::span<const double> point) const;
};

/// Good-lattice-point set on [0,1]^d: row i is ((i * g_k mod n) / n + 1/(2n))_k
/// for the Korobov generator g = (1, h, h^2, ...) mod n.
struct LatticeDesign {
  Matrix points;  // n x d
  std::vector<long> generator;
  double discrepancy = 0.0;  // centered L2 discrepancy
};

/// Chooses h in [1, n) minimizing the centered L2 discrepancy among
/// generators whose components are distinct mod n (ties: smallest h).
/// Requires n prime, n >= 5, 1 <= d <= 6.
LatticeDesign good_lattice_points(int n_points, int dimension);

/// Hickernell's centered L2 discrepancy of points in [0,1]^d (rows).
double centered_l2_discrepancy(const Matrix& unit_points);

bool is_prime(long n);

/// Lattice points mapped onto the domain, one vector per point holding the
/// tuned parameters in block order. The design itself is deterministic.
std::vector<std::vector<double>> uniform_design(int n_points, const SearchDomain& domain);

/// Largest useful L1 parameter for each block: the smallest value at which a
/// zero row satisfies the optimality condition of the first M-step from the
/// SVD start, maximized over K in `K_values`. Blocks must be centered.
std::vector<double> lambda_max(std::span<const OmicsBlock> blocks, std::span<const int> K_values);

/// Default domain (log scale): L1 parameters on [0.1, 1] x lambda_max, fusion
/// parameters on [1e-3, 1] x lambda_max, elastic-net ridge parameters on [1e-3, 10].
SearchDomain default_search_domain(std::span<const OmicsBlock> blocks,
                                   std::span<const PenaltyKind> kinds,
                                   std::span<const int> K_values);

struct RIOptions {
  int folds = 10;
  FitOptions fit;
  std::uint64_t seed = 0;
};

struct RIResult {
  double ri = 0.0;              // median ARI over evaluated folds
  std::vector<double> fold_ari;  // evaluated folds only
  std::vector<int> skipped_folds;
  std::vector<std::string> warnings;
  double mean_selected = 0.0;  // selected features of the learning fits, averaged over folds
  double stability = 0.0;      // mean pairwise kappa agreement of the learning-fit selections
};

/// Multiplies every penalty parameter by `factor`.
std::vector<PenaltySpec> scale_penalties(std::span<const PenaltySpec> penalties, double factor);

/// Random fold assignment, fold[j] in [0, folds).
std::vector<int> assign_folds(int n, int folds, std::uint64_t seed);

/// Cross-validated reproducibility: per fold, fit on the learning split and
/// cluster the predicted test latents (C1); independently fit the test split
/// (C2); score ARI(C1, C2). Learning splits are centered with their own
/// means, the test split with the learning means for prediction and with its
/// own means for the independent fit. Penalties are scaled by split size
/// over n. A fold scores 0 when the learning fit leaves some block without a
/// selected feature or some latent dimension with no nonzero loading, or when
/// the test fit selects nothing. Folds with fewer than 3K test samples are
/// skipped; if all are skipped PreconditionError is thrown. Blocks may be uncentered.
RIResult reproducibility_index(std::span<const OmicsBlock> blocks, int K,
                               std::span<const PenaltySpec> penalties, const RIOptions& opts);

/// Same, with an explicit fold assignment.
RIResult reproducibility_index(std::span<const OmicsBlock> blocks, int K,
                               std::span<const PenaltySpec> penalties,
                               std::span<const int> fold_of, const RIOptions& opts);

struct TunePoint {
  int K = 2;
  std::vector<double> params;  // tuned parameters in block order
  double ri = 0.0;
  double mean_selected = 0.0;
  double stability = 0.0;
};

struct TuneResult {
  std::vector<TunePoint> evaluated;
  int best_K = 0;
  std::vector<double> best_params;
  std::vector<PenaltySpec> best_penalties;
  double best_ri = 0.0;
  std::vector<std::pair<int, double>> ri_by_K;  // max RI per K, K ascending
};

struct TuneOptions {
  int n_points = 13;
  RIOptions ri;
  int threads = 1;
};

/// Evaluates the reproducibility index at every (K, lattice point) and selects
/// the best: highest RI, then larger K, then more stable feature selection
/// across folds, then fewer selected features, then smaller parameter L2 norm.
TuneResult tune(std::span<const OmicsBlock> blocks, std::span<const int> K_range,
                const SearchDomain& domain, const TuneOptions& opts);

/// Selection rule used by tune, exposed so callers can re-rank a table.
void select_best(TuneResult& result, const SearchDomain& domain);

}  // namespace icluster
