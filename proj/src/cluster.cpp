#include "icluster/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "icluster/errors.hpp"
#include "icluster/random.hpp"

namespace icluster {

void Partition::validate() const {
  if (K < 1) throw PreconditionError("partition needs K >= 1");
  for (int l : labels) {
    if (l < 1 || l > K) {
      throw PreconditionError("label " + std::to_string(l) + " outside 1.." + std::to_string(K));
    }
  }
}

namespace {

struct Restart {
  std::vector<int> assign;  // 0-based cluster per point
  Matrix centroids;
  double objective = 0.0;
  std::vector<double> trace;
};

double squared_distance(const Matrix& points, Eigen::Index i, const Matrix& centroids,
                        Eigen::Index k) {
  return (points.row(i) - centroids.row(k)).squaredNorm();
}

int nearest(const Matrix& points, Eigen::Index i, const Matrix& centroids) {
  int best = 0;
  double best_d = squared_distance(points, i, centroids, 0);
  for (Eigen::Index k = 1; k < centroids.rows(); ++k) {
    const double d = squared_distance(points, i, centroids, k);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

double objective_of(const Matrix& points, const std::vector<int>& assign, const Matrix& centroids) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    total += squared_distance(points, i, centroids, assign[static_cast<std::size_t>(i)]);
  }
  return total;
}

void update_centroids(const Matrix& points, const std::vector<int>& assign, Matrix& centroids) {
  const auto K = centroids.rows();
  Matrix sums = Matrix::Zero(K, points.cols());
  std::vector<int> counts(static_cast<std::size_t>(K), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int k = assign[static_cast<std::size_t>(i)];
    sums.row(k) += points.row(i);
    ++counts[static_cast<std::size_t>(k)];
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    if (counts[static_cast<std::size_t>(k)] > 0) {
      centroids.row(k) = sums.row(k) / counts[static_cast<std::size_t>(k)];
    }
  }
}

// Moves the point farthest from its own centroid (taken from a cluster with
// more than one member) into each empty cluster.
void repair_empty(const Matrix& points, std::vector<int>& assign, Matrix& centroids) {
  const auto K = centroids.rows();
  std::vector<int> counts(static_cast<std::size_t>(K), 0);
  for (int a : assign) ++counts[static_cast<std::size_t>(a)];
  for (Eigen::Index k = 0; k < K; ++k) {
    if (counts[static_cast<std::size_t>(k)] > 0) continue;
    Eigen::Index pick = -1;
    double far = -1.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int own = assign[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(own)] < 2) continue;
      const double d = squared_distance(points, i, centroids, own);
      if (d > far) {
        far = d;
        pick = i;
      }
    }
    if (pick < 0) break;
    --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(pick)])];
    assign[static_cast<std::size_t>(pick)] = static_cast<int>(k);
    counts[static_cast<std::size_t>(k)] = 1;
    centroids.row(k) = points.row(pick);
  }
}

// Hartigan transfers: move single points while doing so lowers the objective.
void hartigan(const Matrix& points, std::vector<int>& assign, Matrix& centroids) {
  const auto K = centroids.rows();
  const Eigen::Index n = points.rows();
  std::vector<double> counts(static_cast<std::size_t>(K), 0.0);
  for (int a : assign) counts[static_cast<std::size_t>(a)] += 1.0;
  constexpr int kMaxSweeps = 200;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool moved = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = assign[static_cast<std::size_t>(i)];
      const double na = counts[static_cast<std::size_t>(a)];
      if (na < 2.0) continue;
      const double remove = na / (na - 1.0) * squared_distance(points, i, centroids, a);
      int best = a;
      double best_gain = 0.0;
      for (Eigen::Index b = 0; b < K; ++b) {
        if (b == a) continue;
        const double nb = counts[static_cast<std::size_t>(b)];
        const double gain = remove - nb / (nb + 1.0) * squared_distance(points, i, centroids, b);
        if (gain > best_gain * (1.0 + 1e-12) + 1e-12) {
          best_gain = gain;
          best = static_cast<int>(b);
        }
      }
      if (best == a) continue;
      const double nb = counts[static_cast<std::size_t>(best)];
      centroids.row(a) = (centroids.row(a) * na - points.row(i)) / (na - 1.0);
      centroids.row(best) = (centroids.row(best) * nb + points.row(i)) / (nb + 1.0);
      counts[static_cast<std::size_t>(a)] -= 1.0;
      counts[static_cast<std::size_t>(best)] += 1.0;
      assign[static_cast<std::size_t>(i)] = best;
      moved = true;
    }
    if (!moved) break;
  }
  update_centroids(points, assign, centroids);
}

Restart lloyd(const Matrix& points, int K, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);

  Restart r;
  r.centroids.resize(K, points.cols());
  r.centroids.row(0) = points.row(first(rng));
  Vector min_d(n);
  for (Eigen::Index i = 0; i < n; ++i) min_d(i) = squared_distance(points, i, r.centroids, 0);
  for (int k = 1; k < K; ++k) {
    Eigen::Index arg = 0;
    min_d.maxCoeff(&arg);
    r.centroids.row(k) = points.row(arg);
    for (Eigen::Index i = 0; i < n; ++i) {
      min_d(i) = std::min(min_d(i), squared_distance(points, i, r.centroids, k));
    }
  }

  r.assign.assign(static_cast<std::size_t>(n), -1);
  constexpr int kMaxLloyd = 500;
  for (int it = 0; it < kMaxLloyd; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = nearest(points, i, r.centroids);
      if (k != r.assign[static_cast<std::size_t>(i)]) {
        r.assign[static_cast<std::size_t>(i)] = k;
        changed = true;
      }
    }
    repair_empty(points, r.assign, r.centroids);
    update_centroids(points, r.assign, r.centroids);
    r.trace.push_back(objective_of(points, r.assign, r.centroids));
    if (!changed) break;
  }
  hartigan(points, r.assign, r.centroids);
  r.trace.push_back(objective_of(points, r.assign, r.centroids));
  r.objective = r.trace.back();
  return r;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int K, int restarts, std::uint64_t seed) {
  if (K < 1) throw PreconditionError("kmeans: K must be positive");
  if (points.cols() < 1) throw PreconditionError("kmeans: points need at least one dimension");
  if (K > points.rows()) {
    throw PreconditionError("kmeans: K = " + std::to_string(K) + " exceeds the number of points (" +
                            std::to_string(points.rows()) + ")");
  }
  if (!points.allFinite()) throw DataError("kmeans: non-finite coordinates");
  restarts = std::max(1, restarts);

  Restart best;
  int best_index = -1;
  for (int r = 0; r < restarts; ++r) {
    Restart cur = lloyd(points, K, derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    if (best_index < 0 || cur.objective < best.objective) {
      best = std::move(cur);
      best_index = r;
    }
  }

  // Canonical labels: clusters numbered by first appearance.
  std::vector<int> relabel(static_cast<std::size_t>(K), -1);
  int next = 0;
  for (int a : best.assign) {
    if (relabel[static_cast<std::size_t>(a)] < 0) relabel[static_cast<std::size_t>(a)] = next++;
  }
  for (auto& r : relabel) {
    if (r < 0) r = next++;
  }
  KMeansResult out;
  out.partition.K = K;
  out.partition.labels.reserve(best.assign.size());
  for (int a : best.assign) out.partition.labels.push_back(relabel[static_cast<std::size_t>(a)] + 1);
  out.centroids.resize(K, points.cols());
  for (int k = 0; k < K; ++k) out.centroids.row(relabel[static_cast<std::size_t>(k)]) = best.centroids.row(k);
  out.objective = best.objective;
  out.restart = best_index;
  out.trace = std::move(best.trace);
  return out;
}

Partition assign_nearest(const Matrix& points, const Matrix& centroids) {
  if (points.cols() != centroids.cols()) throw PreconditionError("assign_nearest: dimension mismatch");
  Partition p;
  p.K = static_cast<int>(centroids.rows());
  p.labels.reserve(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) p.labels.push_back(nearest(points, i, centroids) + 1);
  return p;
}

Matrix contingency(const Partition& a, const Partition& b) {
  if (a.size() != b.size()) {
    throw PreconditionError("partitions have different lengths (" + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()) + ")");
  }
  a.validate();
  b.validate();
  Matrix table = Matrix::Zero(a.K, b.K);
  for (int i = 0; i < a.size(); ++i) {
    table(a.labels[static_cast<std::size_t>(i)] - 1, b.labels[static_cast<std::size_t>(i)] - 1) += 1.0;
  }
  return table;
}

namespace {

double choose2(double x) { return 0.5 * x * (x - 1.0); }

bool same_up_to_relabel(const Matrix& table) {
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    if ((table.row(i).array() > 0.0).count() > 1) return false;
  }
  for (Eigen::Index j = 0; j < table.cols(); ++j) {
    if ((table.col(j).array() > 0.0).count() > 1) return false;
  }
  return true;
}

}  // namespace

double adjusted_rand_index(const Partition& a, const Partition& b) {
  const Matrix table = contingency(a, b);
  const double n = static_cast<double>(a.size());
  if (n < 2.0) return 1.0;
  double index = 0.0;
  for (Eigen::Index i = 0; i < table.size(); ++i) index += choose2(table.data()[i]);
  double sum_a = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i) sum_a += choose2(table.row(i).sum());
  double sum_b = 0.0;
  for (Eigen::Index j = 0; j < table.cols(); ++j) sum_b += choose2(table.col(j).sum());
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (std::abs(denom) < 1e-12) return same_up_to_relabel(table) ? 1.0 : 0.0;
  return (index - expected) / denom;
}

std::vector<int> min_cost_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw PreconditionError("assignment cost matrix must be square");
  const int n = static_cast<int>(cost.rows());
  // Shortest augmenting path formulation with row/column potentials (1-based).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (match[j] > 0) assignment[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  }
  return assignment;
}

double misclassification_rate(const Partition& pred, const Partition& truth) {
  const Matrix table = contingency(pred, truth);
  if (pred.size() == 0) return 0.0;
  const int m = std::max(pred.K, truth.K);
  Matrix cost = Matrix::Zero(m, m);
  cost.topLeftCorner(table.rows(), table.cols()) = -table;
  const auto assignment = min_cost_assignment(cost);
  double matched = 0.0;
  for (int i = 0; i < m; ++i) matched -= cost(i, assignment[static_cast<std::size_t>(i)]);
  return 1.0 - matched / static_cast<double>(pred.size());
}

}  // namespace icluster
