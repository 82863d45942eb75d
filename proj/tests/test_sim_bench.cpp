#include <doctest.h>

#include <cmath>

#include "icluster/bench.hpp"
#include "icluster/core.hpp"
#include "icluster/errors.hpp"
#include "icluster/sim.hpp"
#include "icluster/tuning.hpp"
#include "support.hpp"

using namespace icluster;

namespace {

double row_mean(const OmicsBlock& b, int i) { return b.values.row(i).mean(); }

double row_var(const OmicsBlock& b, int i) {
  const double m = row_mean(b, i);
  return (b.values.row(i).array() - m).square().sum() / (b.samples() - 1);
}

}  // namespace

TEST_CASE("setup 1 shapes and truth") {
  SimData d = simulate_setup1(1);
  REQUIRE(d.blocks.size() == 2);
  for (const auto& b : d.blocks) {
    CHECK(b.features() == 200);
    CHECK(b.samples() == 100);
    CHECK(b.ordered);
    CHECK_FALSE(b.centered);
  }
  CHECK(d.truth.labels.K == 2);
  CHECK(d.truth.true_features[0].size() == 20);
  CHECK(d.truth.true_features[1].front() == 0);
  CHECK(d.blocks[0].sample_ids == d.blocks[1].sample_ids);
}

TEST_CASE("setup 1 moments") {
  int mean_ok = 0, rows = 0;
  double signal_var = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SimData d = simulate_setup1(seed);
    for (const auto& b : d.blocks) {
      for (int i = 20; i < 200; ++i) {
        mean_ok += std::abs(row_mean(b, i)) <= 4.0 / std::sqrt(100.0);
        ++rows;
      }
      for (int i = 0; i < 20; ++i) signal_var += row_var(b, i) / (50 * 2 * 20);
    }
  }
  // A 4-sigma tail leaves about 6e-5 of the rows outside; allow a handful.
  CHECK(rows - mean_ok <= 5);
  CHECK(signal_var == doctest::Approx(10.0).epsilon(0.2));
}

TEST_CASE("setup 1 is deterministic per seed") {
  SimData a = simulate_setup1(3);
  SimData b = simulate_setup1(3);
  SimData c = simulate_setup1(4);
  CHECK(testing::max_abs(a.blocks[0].values - b.blocks[0].values) == 0.0);
  CHECK(a.truth.labels.labels == b.truth.labels.labels);
  CHECK(testing::max_abs(a.blocks[0].values - c.blocks[0].values) > 0.0);
}

TEST_CASE("profile demo variant") {
  SimData d = simulate_setup1_profile_demo(2);
  CHECK(d.truth.true_features[1].front() == 100);
  CHECK(d.truth.true_features[1].back() == 119);
  double v = 0.0;
  for (int i = 100; i < 120; ++i) v += row_var(d.blocks[1], i) / 20;
  CHECK(v == doctest::Approx(1.0 + 2.25).epsilon(0.35));
}

TEST_CASE("setup 2 structure") {
  SimData d = simulate_setup2(5);
  CHECK(d.blocks[0].features() == 500);
  CHECK(d.blocks[0].samples() == 150);
  std::vector<int> size(3, 0);
  for (int l : d.truth.labels.labels) ++size[static_cast<std::size_t>(l - 1)];
  CHECK(size == std::vector<int>{50, 50, 50});
  CHECK(d.truth.true_features[0].size() == 20);

  // Cluster-1 rows 1-10: the second block is correlated with the first.
  double corr = 0.0;
  for (int i = 0; i < 10; ++i) {
    Vector a = d.blocks[0].values.row(i).head(50).transpose();
    Vector b = d.blocks[1].values.row(i).head(50).transpose();
    a.array() -= a.mean();
    b.array() -= b.mean();
    corr += a.dot(b) / (a.norm() * b.norm()) / 10.0;
  }
  CHECK(corr == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(0.35));

  // Rows 491-500 shift a different group in each block.
  auto group_mean = [&](int t, int lo, int hi, int g) {
    return d.blocks[static_cast<std::size_t>(t)].values.block(lo, 50 * g, hi - lo, 50).mean();
  };
  CHECK(group_mean(0, 0, 10, 0) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(group_mean(0, 490, 500, 1) == doctest::Approx(1.5).epsilon(0.15));
  CHECK(std::abs(group_mean(0, 490, 500, 2)) < 0.2);
  CHECK(group_mean(1, 490, 500, 2) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(std::abs(group_mean(1, 490, 500, 1)) < 0.2);
}

TEST_CASE("setup 2 null rows have zero mean") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SimData d = simulate_setup2(seed);
    for (const auto& b : d.blocks) CHECK(std::abs(b.values.middleRows(10, 480).mean()) <= 0.02);
  }
  CHECK_THROWS_AS(simulate_setup(3, 0), PreconditionError);
}

TEST_CASE("SVD baseline recovers two separated groups") {
  Matrix z(1, 60);
  Partition truth;
  truth.K = 2;
  for (int j = 0; j < 60; ++j) {
    z(0, j) = j % 2 ? 2.0 : -2.0;
    truth.labels.push_back(j % 2 + 1);
  }
  std::vector<OmicsBlock> blocks;
  for (std::uint64_t t = 0; t < 2; ++t) {
    Matrix w = Matrix::Zero(40, 1);
    w.topRows(10).setConstant(1.5);
    blocks.push_back(testing::make_block(w * z + testing::random_matrix(40, 60, 30 + t), false, false));
  }
  Partition p = svd_baseline(blocks, 2);
  CHECK(misclassification_rate(p, truth) == 0.0);
  CHECK(svd_baseline(blocks, 2).labels == p.labels);
}

TEST_CASE("K-means baselines") {
  SimData d = simulate_setup2(1);
  auto concat = kmeans_baseline(d.blocks, 3, KMeansMode::concatenated, 1);
  REQUIRE(concat.size() == 1);
  CHECK(misclassification_rate(concat[0], d.truth.labels) <= 0.1);
  auto sep = kmeans_baseline(d.blocks, 3, KMeansMode::separate, 1);
  REQUIRE(sep.size() == 2);
  for (const auto& p : sep) CHECK(p.K == 3);
  CHECK(sep[0].labels != sep[1].labels);
  auto again = kmeans_baseline(d.blocks, 3, KMeansMode::separate, 1);
  CHECK(again[1].labels == sep[1].labels);
}

TEST_CASE("method names round-trip") {
  for (Method m : {Method::lasso, Method::enet, Method::fused, Method::kmeans_separate,
                   Method::kmeans_concatenated, Method::svd_concatenated}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK(is_sparse_method(Method::fused));
  CHECK_FALSE(is_sparse_method(Method::svd_concatenated));
  CHECK_THROWS(parse_method("pca"));
}

TEST_CASE("baseline reproducibility") {
  SimData d = simulate_setup2(9);
  auto fold_of = assign_folds(150, 5, 9);
  double svd = baseline_reproducibility(d.blocks, Method::svd_concatenated, -1, 3, fold_of, 5, 1, 10);
  CHECK(svd >= 0.8);
  // Raw K-means on 30 test samples in 1000 dimensions is far less stable.
  double km = baseline_reproducibility(d.blocks, Method::kmeans_concatenated, -1, 3, fold_of, 5, 1, 10);
  CHECK(km >= -1.0);
  CHECK(km < svd);
  double sep = baseline_reproducibility(d.blocks, Method::kmeans_separate, 0, 3, fold_of, 5, 1, 10);
  CHECK(sep < svd);
}

TEST_CASE("small benchmark run") {
  BenchOptions opts;
  opts.K_range = {2, 3};
  opts.n_points = 5;
  opts.folds = 5;
  opts.seed = 100;
  std::vector<Method> methods{Method::lasso, Method::kmeans_separate, Method::svd_concatenated};
  BenchReport r = run_benchmark(1, methods, 2, opts);
  CHECK(r.true_K == 2);
  const BenchRow* lasso = r.find(Method::lasso);
  REQUIRE(lasso != nullptr);
  CHECK(lasso->replicates.size() == 2);
  CHECK(lasso->failures == 0);
  CHECK(lasso->true_positives.size() == 2);
  CHECK(lasso->error_rate.mean <= 0.2);
  CHECK(r.find(Method::kmeans_separate, 1) != nullptr);
  CHECK(r.find(Method::enet) == nullptr);
  const std::string table = format_report(r);
  CHECK(table.find("Lasso iCluster") != std::string::npos);
  CHECK(table.find("Concatenated SVD") != std::string::npos);

  // Replicates are reproducible.
  BenchReport again = run_benchmark(1, methods, 2, opts);
  CHECK(again.find(Method::lasso)->replicates[1].error_rate == lasso->replicates[1].error_rate);
}

TEST_CASE("benchmark records failures instead of throwing") {
  BenchOptions opts;
  opts.K_range = {40};  // test splits of 20 < 3K: every fold is skipped
  opts.n_points = 5;
  std::vector<Method> methods{Method::lasso};
  BenchReport r = run_benchmark(1, methods, 2, opts);
  const BenchRow* row = r.find(Method::lasso);
  REQUIRE(row != nullptr);
  CHECK(row->failures == 2);
  CHECK(row->replicates[0].failed);
  CHECK_FALSE(row->replicates[0].error.empty());
}
