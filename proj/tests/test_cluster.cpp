#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "icluster/cluster.hpp"
#include "icluster/errors.hpp"
#include "support.hpp"

using namespace icluster;
using testing::random_matrix;

namespace {

Partition part(std::vector<int> labels, int K) {
  Partition p;
  p.labels = std::move(labels);
  p.K = K;
  return p;
}

Partition random_partition(int n, int K, Rng& rng) {
  std::uniform_int_distribution<int> d(1, K);
  Partition p;
  p.K = K;
  for (int i = 0; i < n; ++i) p.labels.push_back(d(rng));
  return p;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

// Adjusted Rand index from raw pair counts over all i < j.
double ari_pairs(const Partition& a, const Partition& b) {
  const int n = a.size();
  double both = 0, in_a = 0, in_b = 0, total = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool sa = a.labels[i] == a.labels[j];
      const bool sb = b.labels[i] == b.labels[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      total += 1;
    }
  }
  const double expected = in_a * in_b / total;
  const double max_index = 0.5 * (in_a + in_b);
  return (both - expected) / (max_index - expected);
}

// Minimum disagreement over all relabelings of pred onto truth labels.
double misclass_enum(const Partition& pred, const Partition& truth) {
  const int K = std::max(pred.K, truth.K);
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 1);
  int best = pred.size();
  do {
    int wrong = 0;
    for (int i = 0; i < pred.size(); ++i) wrong += perm[pred.labels[i] - 1] != truth.labels[i];
    best = std::min(best, wrong);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / pred.size();
}

}  // namespace

TEST_CASE("k-means separates two far clouds") {
  Matrix pts(10, 2);
  pts.topRows(5) = Matrix::Constant(5, 2, -10.0) + 0.1 * random_matrix(5, 2, 1);
  pts.bottomRows(5) = Matrix::Constant(5, 2, 10.0) + 0.1 * random_matrix(5, 2, 2);
  KMeansResult r = kmeans(pts, 2, 5, 3);
  for (int i = 1; i < 5; ++i) CHECK(r.partition.labels[i] == r.partition.labels[0]);
  for (int i = 6; i < 10; ++i) CHECK(r.partition.labels[i] == r.partition.labels[5]);
  CHECK(r.partition.labels[0] != r.partition.labels[5]);
}

TEST_CASE("k-means on identical points") {
  Matrix pts = Matrix::Ones(6, 3);
  KMeansResult r = kmeans(pts, 2, 3, 1);
  CHECK(r.objective == 0.0);
  CHECK(r.partition.size() == 6);
  CHECK_NOTHROW(r.partition.validate());
}

TEST_CASE("k-means reaches the brute-force optimum for two clusters") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Matrix pts = random_matrix(12, 1, seed);
    pts.topRows(4).array() += 3.0;
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 1; mask < (1 << 12) - 1; ++mask) {
      double sse = 0.0;
      for (int g = 0; g < 2; ++g) {
        double s = 0, s2 = 0, c = 0;
        for (int i = 0; i < 12; ++i) {
          if (((mask >> i) & 1) == g) {
            s += pts(i, 0);
            s2 += pts(i, 0) * pts(i, 0);
            c += 1;
          }
        }
        sse += s2 - s * s / c;
      }
      best = std::min(best, sse);
    }
    KMeansResult r = kmeans(pts, 2, 20, seed);
    CHECK(r.objective == doctest::Approx(best).epsilon(1e-10));
  }
}

TEST_CASE("k-means trace is non-increasing and runs are reproducible") {
  Matrix pts = random_matrix(60, 3, 7);
  KMeansResult a = kmeans(pts, 4, 5, 11);
  KMeansResult b = kmeans(pts, 4, 5, 11);
  CHECK(a.partition.labels == b.partition.labels);
  CHECK(a.objective == b.objective);
  for (std::size_t i = 1; i < a.trace.size(); ++i) CHECK(a.trace[i] <= a.trace[i - 1] + 1e-12);
  CHECK(a.trace.back() == doctest::Approx(a.objective));
}

TEST_CASE("no single point transfer improves the k-means result") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix pts = random_matrix(30, 200, seed);
    pts.block(0, 0, 10, 10).array() += 2.0;
    KMeansResult r = kmeans(pts, 3, 3, seed);
    auto sse = [&](const std::vector<int>& labels) {
      double total = 0.0;
      for (int k = 1; k <= 3; ++k) {
        Vector m = Vector::Zero(pts.cols());
        int c = 0;
        for (int i = 0; i < 30; ++i) {
          if (labels[i] == k) {
            m += pts.row(i).transpose();
            ++c;
          }
        }
        if (c == 0) continue;
        m /= c;
        for (int i = 0; i < 30; ++i) {
          if (labels[i] == k) total += (pts.row(i).transpose() - m).squaredNorm();
        }
      }
      return total;
    };
    const double base = sse(r.partition.labels);
    CHECK(base == doctest::Approx(r.objective).epsilon(1e-10));
    for (int i = 0; i < 30; ++i) {
      for (int k = 1; k <= 3; ++k) {
        std::vector<int> moved = r.partition.labels;
        moved[i] = k;
        if (std::count(moved.begin(), moved.end(), r.partition.labels[i]) == 0) continue;
        CHECK(sse(moved) >= base - 1e-9);
      }
    }
  }
}

TEST_CASE("k-means preconditions") {
  Matrix pts = random_matrix(3, 2, 1);
  CHECK_THROWS_AS(kmeans(pts, 4, 1, 0), PreconditionError);
  CHECK_THROWS_AS(kmeans(pts, 0, 1, 0), PreconditionError);
}

TEST_CASE("assign_nearest breaks ties toward the lower index") {
  Matrix c(2, 1);
  c << -1, 1;
  Matrix pts(3, 1);
  pts << -2, 0, 3;
  CHECK(assign_nearest(pts, c).labels == std::vector<int>{1, 1, 2});
}

TEST_CASE("ARI basics") {
  Partition a = part({1, 1, 2, 2, 3, 3}, 3);
  CHECK(adjusted_rand_index(a, a) == doctest::Approx(1.0));
  Partition relabeled = part({3, 3, 1, 1, 2, 2}, 3);
  CHECK(adjusted_rand_index(a, relabeled) == doctest::Approx(1.0));
  Partition one = part({1, 1, 1, 1, 1, 1}, 1);
  CHECK(adjusted_rand_index(one, one) == 1.0);
  Partition singletons = part({1, 2, 3, 4, 5, 6}, 6);
  CHECK(adjusted_rand_index(one, singletons) == 0.0);
  CHECK_THROWS_AS(adjusted_rand_index(a, part({1, 2}, 2)), PreconditionError);
}

TEST_CASE("ARI matches pair counting") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 4 + trial % 7;
    Partition a = random_partition(n, 2 + trial % 3, rng);
    Partition b = random_partition(n, 2 + (trial / 3) % 3, rng);
    const double got = adjusted_rand_index(a, b);
    // Skip draws where the expected index equals its maximum.
    double in_a = 0, in_b = 0;
    Matrix t = contingency(a, b);
    for (Eigen::Index i = 0; i < t.rows(); ++i) in_a += choose2(t.row(i).sum());
    for (Eigen::Index j = 0; j < t.cols(); ++j) in_b += choose2(t.col(j).sum());
    const double total = choose2(n);
    if (std::abs(0.5 * (in_a + in_b) - in_a * in_b / total) < 1e-12) continue;
    CHECK(got == doctest::Approx(ari_pairs(a, b)).epsilon(1e-12));
    CHECK(got == doctest::Approx(adjusted_rand_index(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("ARI is invariant to relabeling and sample order") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Partition a = random_partition(30, 3, rng);
    Partition b = random_partition(30, 4, rng);
    const double base = adjusted_rand_index(a, b);
    std::vector<int> relabel{2, 3, 1};
    Partition a2 = a;
    for (int& l : a2.labels) l = relabel[static_cast<std::size_t>(l - 1)];
    CHECK(adjusted_rand_index(a2, b) == doctest::Approx(base).epsilon(1e-12));
    std::vector<int> order(30);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Partition ap = a, bp = b;
    for (int i = 0; i < 30; ++i) {
      ap.labels[i] = a.labels[order[i]];
      bp.labels[i] = b.labels[order[i]];
    }
    CHECK(adjusted_rand_index(ap, bp) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("misclassification rate") {
  Partition truth;
  truth.K = 2;
  for (int i = 0; i < 100; ++i) truth.labels.push_back(i < 50 ? 1 : 2);
  CHECK(misclassification_rate(truth, truth) == 0.0);
  Partition swapped = truth;
  for (int& l : swapped.labels) l = 3 - l;
  CHECK(misclassification_rate(swapped, truth) == 0.0);
  Partition flipped = truth;
  for (int i = 0; i < 5; ++i) flipped.labels[i] = 2;
  CHECK(misclassification_rate(flipped, truth) == doctest::Approx(0.05));
}

TEST_CASE("misclassification equals permutation enumeration") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int K = 2 + trial % 3;
    Partition pred = random_partition(9 + trial % 4, K, rng);
    Partition truth = random_partition(pred.size(), K, rng);
    CHECK(misclassification_rate(pred, truth) == doctest::Approx(misclass_enum(pred, truth)));
    CHECK((misclassification_rate(pred, truth) == 0.0) == (adjusted_rand_index(pred, truth) == 1.0));
  }
  // Unequal label counts pad with empty clusters.
  Partition pred = part({1, 1, 2, 2, 3, 3}, 3);
  Partition truth = part({1, 1, 1, 2, 2, 2}, 2);
  CHECK(misclassification_rate(pred, truth) == doctest::Approx(misclass_enum(pred, truth)));
}

TEST_CASE("Hungarian matching equals enumeration") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const int K = 1 + static_cast<int>(seed % 4);
    Matrix cost = random_matrix(K, K, seed).cwiseAbs();
    if (seed % 5 == 0) cost = cost.array().round();  // ties
    std::vector<int> assign = min_cost_assignment(cost);
    double got = 0.0;
    for (int i = 0; i < K; ++i) got += cost(i, assign[static_cast<std::size_t>(i)]);
    std::vector<int> seen(assign);
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < K; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);
    std::vector<int> perm(static_cast<std::size_t>(K));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (int i = 0; i < K; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("contingency and validation") {
  Matrix t = contingency(part({1, 2, 2}, 2), part({1, 1, 2}, 2));
  CHECK(t(0, 0) == 1);
  CHECK(t(1, 0) == 1);
  CHECK(t(1, 1) == 1);
  CHECK_THROWS_AS(part({0, 1}, 2).validate(), PreconditionError);
  CHECK_THROWS_AS(part({3, 1}, 2).validate(), PreconditionError);
}
