#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icluster/cluster.hpp"
#include "icluster/em.hpp"
#include "icluster/model.hpp"
#include "icluster/sim.hpp"

namespace icluster {

/// K-means on the first K-1 right singular vectors of the row-concatenated
/// centered blocks.
Partition svd_baseline(std::span<const OmicsBlock> blocks, int K, std::uint64_t seed = 0,
                       int restarts = 20);

enum class KMeansMode { separate, concatenated };

/// K-means on the sample columns of each block (separate) or of the stacked
/// matrix (concatenated). Blocks are used as given.
std::vector<Partition> kmeans_baseline(std::span<const OmicsBlock> blocks, int K, KMeansMode mode,
                                       std::uint64_t seed = 0, int restarts = 20);

enum class Method {
  lasso,
  enet,
  fused,
  kmeans_separate,
  kmeans_concatenated,
  svd_concatenated,
};

std::string to_string(Method m);
/// Accepts the names produced by to_string.
Method parse_method(const std::string& name);
bool is_sparse_method(Method m);

struct BenchOptions {
  std::vector<int> K_range{2, 3, 4, 5};
  int n_points = 13;
  int folds = 5;
  std::uint64_t seed = 0;  // replicate r uses seed + r
  int threads = 1;
  FitOptions fit;
};

/// Outcome of one replicate for one result row.
struct ReplicateRecord {
  int replicate = 0;
  bool failed = false;
  std::string error;
  int chosen_K = 0;
  double error_rate = 0.0;
  double ri = 0.0;
  std::vector<int> true_positives;   // per block, sparse methods only
  std::vector<int> false_positives;
  std::vector<double> params;        // selected tuning parameters
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

/// One table row: a method, or one block of a separate-block method.
struct BenchRow {
  Method method = Method::lasso;
  int block = -1;  // block index for separate K-means, -1 otherwise
  std::vector<ReplicateRecord> replicates;
  int failures = 0;
  double percent_correct_K = 0.0;
  MeanSd error_rate;
  MeanSd ri;
  std::vector<MeanSd> true_positives;   // per block
  std::vector<MeanSd> false_positives;
};

struct BenchReport {
  int setup = 1;
  int replicates = 0;
  int true_K = 0;
  BenchOptions options;
  std::vector<BenchRow> rows;

  const BenchRow* find(Method m, int block = -1) const;
};

/// Cross-validated reproducibility of a baseline partitioner, using the same
/// fold protocol as the sparse model: predicted test labels (nearest learned
/// centroid for K-means, projection onto the learned singular vectors then
/// K-means for SVD) against an independent clustering of the test split.
/// `block` selects one block for the separate K-means baseline.
double baseline_reproducibility(std::span<const OmicsBlock> blocks, Method method, int block, int K,
                                std::span<const int> fold_of, int folds, std::uint64_t seed,
                                int restarts);

/// Runs every method on R simulated replicates. Per-replicate failures are
/// recorded in the rows rather than thrown.
BenchReport run_benchmark(int setup, std::span<const Method> methods, int R, const BenchOptions& opts);

/// Recomputes every row's summary statistics from its replicate records.
void summarize_report(BenchReport& report);

/// Clustering table followed by the feature-selection table.
std::string format_report(const BenchReport& report);

}  // namespace icluster
