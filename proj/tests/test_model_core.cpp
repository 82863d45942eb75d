#include <doctest.h>

#include <cmath>
#include <limits>

#include "icluster/banded.hpp"
#include "icluster/core.hpp"
#include "icluster/errors.hpp"
#include "icluster/sim.hpp"
#include "support.hpp"

using namespace icluster;
using testing::make_block;
using testing::random_matrix;

TEST_CASE("center_rows removes row means") {
  Matrix X(1, 3);
  X << 1, 2, 3;
  OmicsBlock b = make_block(X, false, false);
  OmicsBlock c = center_rows(b);
  CHECK(c.values(0, 0) == doctest::Approx(-1.0));
  CHECK(c.values(0, 1) == doctest::Approx(0.0));
  CHECK(c.values(0, 2) == doctest::Approx(1.0));
  CHECK(c.row_means(0) == doctest::Approx(2.0));
  CHECK(c.centered);
}

TEST_CASE("center_rows is idempotent and leaves zero means") {
  OmicsBlock b = make_block(random_matrix(200, 100, 3, 5.0).array() + 7.0, false, false);
  OmicsBlock c = center_rows(b);
  CHECK(c.values.rowwise().mean().cwiseAbs().maxCoeff() <= 1e-10);
  OmicsBlock cc = center_rows(c);
  CHECK((cc.values - c.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("center_rows names the first non-finite entry") {
  Matrix X = random_matrix(4, 5, 1);
  X(2, 3) = std::numeric_limits<double>::quiet_NaN();
  OmicsBlock b = make_block(X, false, false);
  try {
    center_rows(b);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("g3") != std::string::npos);
    CHECK(msg.find("s4") != std::string::npos);
  }
}

TEST_CASE("center_rows_with uses the supplied means") {
  Matrix X(2, 2);
  X << 1, 3, 10, 20;
  Vector means(2);
  means << 1, 5;
  OmicsBlock c = center_rows_with(make_block(X, false, false), means);
  CHECK(c.values(0, 1) == doctest::Approx(2.0));
  CHECK(c.values(1, 0) == doctest::Approx(5.0));
  CHECK_THROWS_AS(center_rows_with(make_block(X, false, false), Vector::Zero(3)), PreconditionError);
}

TEST_CASE("scale_rows gives unit variance and skips constant rows") {
  Matrix X = random_matrix(3, 50, 9, 4.0);
  X.row(1).setConstant(2.0);
  OmicsBlock s = scale_rows(make_block(X));
  for (int i : {0, 2}) {
    const double var = s.values.row(i).squaredNorm() / 49.0;
    CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
  }
  CHECK(s.values.row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("validate_blocks rejects mismatched samples") {
  std::vector<OmicsBlock> blocks{make_block(random_matrix(3, 5, 1)), make_block(random_matrix(3, 6, 2))};
  CHECK_THROWS_AS(validate_blocks(blocks), DataError);
  blocks[1] = make_block(random_matrix(3, 5, 2));
  blocks[1].sample_ids[0] = "other";
  CHECK_THROWS_AS(validate_blocks(blocks), DataError);
}

TEST_CASE("select_samples keeps metadata") {
  OmicsBlock b = make_block(random_matrix(3, 6, 4), true);
  std::vector<int> cols{4, 1};
  OmicsBlock s = select_samples(b, cols);
  CHECK(s.samples() == 2);
  CHECK(s.sample_ids[0] == "s5");
  CHECK(s.ordered);
  CHECK_FALSE(s.centered);
  CHECK(s.values(2, 1) == b.values(2, 1));
  std::vector<int> bad{6};
  CHECK_THROWS_AS(select_samples(b, bad), PreconditionError);
}

TEST_CASE("penalty helpers") {
  CHECK(parameter_count(PenaltyKind::lasso) == 1);
  CHECK(parameter_count(PenaltyKind::fused_lasso) == 2);
  PenaltySpec p = make_penalty(PenaltyKind::elastic_net, {0.5, 2.0});
  CHECK(kind_of(p) == PenaltyKind::elastic_net);
  CHECK(penalty_parameters(p) == std::vector<double>{0.5, 2.0});
  CHECK(parse_penalty_kind(to_string(PenaltyKind::fused_lasso)) == PenaltyKind::fused_lasso);
  CHECK_THROWS(parse_penalty_kind("ridge-ish"));

  OmicsBlock unordered = make_block(random_matrix(4, 5, 1));
  CHECK_THROWS_AS(validate_penalty(FusedLasso{1.0, 1.0}, unordered), PreconditionError);
  CHECK_THROWS_AS(validate_penalty(Lasso{-1.0}, unordered), PreconditionError);
  CHECK_THROWS_AS(validate_penalty(Lasso{std::nan("")}, unordered), PreconditionError);
  CHECK_NOTHROW(validate_penalty(ElasticNet{1.0, 0.0}, unordered));
}

TEST_CASE("FactorModel::validate") {
  FactorModel m = testing::random_model({4, 3}, 3, 1);
  CHECK_NOTHROW(m.validate());
  CHECK(m.total_features() == 7);
  m.psi[1](0) = 0.0;
  CHECK_THROWS_AS(m.validate(), PreconditionError);
  m = testing::random_model({4}, 3, 1);
  m.W[0] = Matrix::Zero(4, 1);
  CHECK_THROWS_AS(m.validate(), PreconditionError);
}

TEST_CASE("init_model recovers a rank-one direction") {
  // Rank-one data: the start has W proportional to the generating loadings
  // and noise variances at the floor.
  Vector w = Vector::LinSpaced(6, 1.0, 3.0);
  Vector z = random_matrix(40, 1, 5).col(0);
  OmicsBlock b = make_block(w * z.transpose());
  std::vector<OmicsBlock> blocks{b};
  FactorModel m = init_model(blocks, 2);
  const Vector got = m.W[0].col(0);
  const double cosine = std::abs(got.dot(w)) / (got.norm() * w.norm());
  CHECK(cosine == doctest::Approx(1.0).epsilon(1e-10));
  CHECK((m.psi[0] - psi_floor(b)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("init_model loadings concentrate on the signal rows") {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SimData sim = simulate_setup1(seed);
    std::vector<OmicsBlock> blocks;
    for (const auto& b : sim.blocks) blocks.push_back(center_rows(b));
    FactorModel m = init_model(blocks, 2);
    bool ok = true;
    for (const auto& W : m.W) {
      std::vector<int> idx(static_cast<std::size_t>(W.rows()));
      for (int i = 0; i < W.rows(); ++i) idx[static_cast<std::size_t>(i)] = i;
      std::partial_sort(idx.begin(), idx.begin() + 20, idx.end(),
                        [&](int a, int b) { return std::abs(W(a, 0)) > std::abs(W(b, 0)); });
      int in = 0;
      for (int k = 0; k < 20; ++k) in += idx[static_cast<std::size_t>(k)] < 20;
      ok = ok && in >= 18;
    }
    hits += ok;
  }
  CHECK(hits >= 45);
}

TEST_CASE("init_model rejects too many clusters") {
  std::vector<OmicsBlock> blocks{make_block(random_matrix(5, 4, 1))};
  CHECK_THROWS_AS(init_model(blocks, 6), PreconditionError);
  CHECK_THROWS_AS(init_model(blocks, 1), PreconditionError);
}

TEST_CASE("Woodbury with zero loadings is the diagonal inverse") {
  FactorModel m = testing::random_model({5}, 3, 2);
  m.W[0].setZero();
  Matrix X = random_matrix(5, 4, 3);
  WoodburyResult r = woodbury_apply(m, X);
  Matrix expected = m.psi[0].cwiseInverse().asDiagonal() * X;
  CHECK(testing::max_abs(r.sigma_inv_X - expected) <= 1e-14);
  CHECK(testing::max_abs(r.core - Matrix::Identity(2, 2)) == 0.0);
}

TEST_CASE("Woodbury matches Sherman-Morrison for one latent variable") {
  FactorModel m;
  m.K = 2;
  Matrix W(3, 1);
  W << 1, 2, 3;
  m.W.push_back(W);
  m.psi.push_back(Vector::Ones(3));
  Matrix X = Matrix::Identity(3, 3);
  WoodburyResult r = woodbury_apply(m, X);
  // (I + w w')^-1 = I - w w' / (1 + w'w)
  Matrix expected = Matrix::Identity(3, 3) - W * W.transpose() / 15.0;
  CHECK(testing::max_abs(r.sigma_inv_X - expected) <= 1e-14);
  CHECK(r.core(0, 0) == doctest::Approx(15.0));
}

TEST_CASE("Woodbury matches the dense inverse") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    FactorModel m = testing::random_model({6, 4}, 2 + static_cast<int>(seed % 4), seed);
    Matrix X = random_matrix(10, 7, seed + 100);
    WoodburyResult r = woodbury_apply(m, X);
    Matrix dense = testing::dense_sigma(m).inverse() * X;
    CHECK(testing::rel_err(r.sigma_inv_X, dense) <= 1e-10);

    WoodburyFactor f(m);
    const double logdet = std::log(testing::dense_sigma(m).determinant());
    CHECK(f.log_det_sigma() == doctest::Approx(logdet).epsilon(1e-12));
    Matrix Wst = testing::stacked_W(m);
    Matrix cov = Matrix::Identity(m.K - 1, m.K - 1) - Wst.transpose() * testing::dense_sigma(m).inverse() * Wst;
    CHECK(testing::max_abs(f.core_inverse() - cov) <= 1e-10);
  }
}

TEST_CASE("Woodbury property at moderate size") {
  FactorModel m = testing::random_model({30, 20}, 5, 77);
  Matrix X = random_matrix(50, 12, 78);
  WoodburyResult r = woodbury_apply(m, X);
  CHECK(testing::rel_err(r.sigma_inv_X, testing::dense_sigma(m).ldlt().solve(X)) <= 1e-8);
}

TEST_CASE("Woodbury flags an ill-conditioned core") {
  FactorModel m;
  m.K = 3;
  m.W.push_back(Matrix::Constant(3, 2, 1e8));
  m.psi.push_back(Vector::Ones(3));
  CHECK_THROWS_AS(WoodburyFactor{m}, NumericalError);
}

TEST_CASE("concatenate stacks blocks") {
  std::vector<OmicsBlock> blocks{make_block(random_matrix(2, 3, 1)), make_block(random_matrix(4, 3, 2))};
  Matrix S = concatenate(blocks);
  CHECK(S.rows() == 6);
  CHECK(S(3, 2) == blocks[1].values(1, 2));
}

namespace {

BandedSpd random_banded(Eigen::Index n, Eigen::Index bw, std::uint64_t seed) {
  Matrix R = random_matrix(n, n, seed);
  BandedSpd A(n, bw);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - bw); j <= i; ++j) {
      A.at(i, j) = i == j ? 2.0 * static_cast<double>(bw) + 2.0 + std::abs(R(i, j)) : R(i, j);
    }
  }
  return A;
}

}  // namespace

TEST_CASE("banded Cholesky matches the dense solve") {
  for (Eigen::Index bw : {0, 1, 2, 4}) {
    BandedSpd A = random_banded(25, bw, static_cast<std::uint64_t>(bw) + 10);
    Vector b = random_matrix(25, 1, 5).col(0);
    Matrix dense = A.to_dense();
    CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Vector expected = dense.llt().solve(b);
    CHECK((BandedCholesky(A).solve(b) - expected).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((conjugate_gradient(A, b) - expected).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((solve_banded_spd(A, b, 10) - expected).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((A.multiply(expected) - b).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("banded Cholesky rejects an indefinite matrix") {
  BandedSpd A(3, 1);
  A.at(0, 0) = 1.0;
  A.at(1, 1) = 1.0;
  A.at(2, 2) = 1.0;
  A.add(1, 0, 2.0);
  CHECK_THROWS_AS(BandedCholesky{A}, NumericalError);
}
