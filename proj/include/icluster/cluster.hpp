#pragma once

#include <cstdint>
#include <vector>

#include "icluster/model.hpp"

namespace icluster {

/// Hard cluster assignment with labels in 1..K.
struct Partition {
  std::vector<int> labels;
  int K = 0;

  int size() const { return static_cast<int>(labels.size()); }
  /// Throws PreconditionError when a label is outside 1..K.
  void validate() const;
};

struct KMeansResult {
  Partition partition;
  Matrix centroids;  // K x d
  double objective = 0.0;  // within-cluster sum of squares
  int restart = 0;         // index of the winning restart
  std::vector<double> trace;  // objective after each Lloyd iteration and the final transfer pass
};

/// Lloyd's algorithm on the rows of `points` (n x d). Each restart seeds one
/// centre uniformly at random, adds the rest by farthest-point selection, and
/// iterates to a local optimum. Empty clusters take the point farthest from
/// its centroid. Lowest objective wins; ties go to the earliest restart.
KMeansResult kmeans(const Matrix& points, int K, int restarts, std::uint64_t seed);

/// Assigns each row of `points` to its nearest centroid (ties: lowest index).
Partition assign_nearest(const Matrix& points, const Matrix& centroids);

/// Hubert-Arabie adjusted Rand index. When the expected-index denominator is
/// zero the result is 1 for partitions equal up to relabeling and 0 otherwise.
double adjusted_rand_index(const Partition& a, const Partition& b);

/// Smallest fraction of disagreeing labels over all one-to-one matchings of
/// the label sets (label sets of unequal size are padded with empty labels).
double misclassification_rate(const Partition& pred, const Partition& truth);

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method).
/// Returns assignment[row] = column.
std::vector<int> min_cost_assignment(const Matrix& cost);

/// Contingency table, rows = labels of a, columns = labels of b.
Matrix contingency(const Partition& a, const Partition& b);

}  // namespace icluster
