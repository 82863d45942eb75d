#include "icluster/em.hpp"

#include <cmath>
#include <sstream>

#include "icluster/errors.hpp"
#include "icluster/random.hpp"

namespace icluster {

void FitOptions::validate() const {
  if (max_iter < 1) throw PreconditionError("max_iter must be at least 1");
  if (!(tol > 0.0) || !(lqa_floor > 0.0) || !(zero_threshold > 0.0)) {
    throw PreconditionError("tol, lqa_floor and zero_threshold must be positive");
  }
  if (kmeans_restarts < 1) throw PreconditionError("kmeans_restarts must be at least 1");
}

namespace {

LatentStats stats_from(const WoodburyFactor& factor, std::span<const OmicsBlock> blocks) {
  LatentStats s;
  s.EZ = factor.latent_mean(blocks);
  s.cov_post = factor.core_inverse();
  s.cov_post = 0.5 * (s.cov_post + s.cov_post.transpose()).eval();
  const double n = static_cast<double>(s.EZ.cols());
  s.SZZ = n * s.cov_post + s.EZ * s.EZ.transpose();
  return s;
}

void check_stats(const OmicsBlock& block, const LatentStats& stats, const Matrix& prev_W,
                 const Vector& prev_psi) {
  const auto q = stats.EZ.rows();
  if (stats.EZ.cols() != block.values.cols()) {
    throw PreconditionError("latent statistics cover " + std::to_string(stats.EZ.cols()) +
                            " samples but block '" + block.name + "' has " +
                            std::to_string(block.values.cols()));
  }
  if (prev_W.rows() != block.values.rows() || prev_W.cols() != q ||
      prev_psi.size() != block.values.rows()) {
    throw PreconditionError("previous parameters do not match block '" + block.name + "'");
  }
}

bool row_dropped(const Matrix& prev_W, Eigen::Index i, double floor) {
  return (prev_W.row(i).array().abs() < floor).all();
}

// Shared lasso / elastic-net row update: w_i = c_i (SZZ + A_i)^-1 with
// A_i = 2 psi_i (l1 diag(1/max(|w_prev|, floor)) + l2 I).
Matrix ridge_rows(const OmicsBlock& block, const LatentStats& stats, const Matrix& prev_W,
                  const Vector& prev_psi, double l1, double l2, double floor) {
  check_stats(block, stats, prev_W, prev_psi);
  if (l1 < 0.0 || l2 < 0.0) throw PreconditionError("penalty parameters must be nonnegative");
  const auto p = block.values.rows();
  const auto q = stats.EZ.rows();
  const Matrix C = block.values * stats.EZ.transpose();
  Matrix W = Matrix::Zero(p, q);
  Eigen::LLT<Matrix> llt;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (l1 > 0.0 && row_dropped(prev_W, i, floor)) continue;
    Matrix M = stats.SZZ;
    for (Eigen::Index k = 0; k < q; ++k) {
      M(k, k) += 2.0 * prev_psi(i) * (l1 / std::max(std::abs(prev_W(i, k)), floor) + l2);
    }
    llt.compute(M);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("M-step system for feature " + std::to_string(i + 1) + " of block '" +
                           block.name + "' is not positive definite");
    }
    W.row(i) = llt.solve(C.row(i).transpose()).transpose();
  }
  return W;
}

Vector psi_unfloored(const OmicsBlock& block, const LatentStats& stats, const Matrix& new_W) {
  const double n = static_cast<double>(block.values.cols());
  const Matrix C = block.values * stats.EZ.transpose();
  const Vector explained = (new_W.array() * C.array()).rowwise().sum();
  return (block.values.rowwise().squaredNorm() - explained) / n;
}

Vector psi_exact(const OmicsBlock& block, const LatentStats& stats, const Matrix& W) {
  const double n = static_cast<double>(block.values.cols());
  const Matrix C = block.values * stats.EZ.transpose();
  const Vector cross = (W.array() * C.array()).rowwise().sum();
  const Vector quad = ((W * stats.SZZ).array() * W.array()).rowwise().sum();
  return (block.values.rowwise().squaredNorm() - 2.0 * cross + quad) / n;
}

struct Evaluation {
  LatentStats stats;
  double objective = 0.0;
};

Evaluation evaluate(const FactorModel& model, std::span<const OmicsBlock> blocks,
                    std::span<const PenaltySpec> penalties) {
  WoodburyFactor factor(model);
  Evaluation ev;
  ev.stats = stats_from(factor, blocks);
  const double n = static_cast<double>(blocks.front().values.cols());
  double trace = 0.0;
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    trace += (blocks[t].values.rowwise().squaredNorm().array() / model.psi[t].array()).sum();
  }
  // tr(core^-1 G G') with G = W' Psi^-1 X and core^-1 G = EZ.
  const Matrix G = factor.projected(blocks);
  trace -= (G.array() * ev.stats.EZ.array()).sum();
  double penalty = 0.0;
  for (std::size_t t = 0; t < blocks.size(); ++t) penalty += penalty_value(penalties[t], model.W[t]);
  ev.objective = -0.5 * (n * factor.log_det_sigma() + trace) - penalty;
  return ev;
}

void make_isotropic(FactorModel& model, std::span<const OmicsBlock> blocks,
                    const std::vector<Vector>& raw) {
  double total = 0.0;
  double second_moment = 0.0;
  Eigen::Index p = 0;
  for (std::size_t t = 0; t < raw.size(); ++t) {
    total += raw[t].sum();
    second_moment += blocks[t].values.squaredNorm() / static_cast<double>(blocks[t].values.cols());
    p += raw[t].size();
  }
  const double floor = std::max(1e-6, 1e-4 * second_moment / static_cast<double>(p));
  const double sigma2 = std::max(total / static_cast<double>(p), floor);
  for (auto& psi : model.psi) psi.setConstant(sigma2);
}

}  // namespace

LatentStats e_step(const FactorModel& model, std::span<const OmicsBlock> blocks) {
  return stats_from(WoodburyFactor(model), blocks);
}

Matrix m_step_lasso(const OmicsBlock& block, const LatentStats& stats, const Matrix& prev_W,
                    const Vector& prev_psi, double lambda, double lqa_floor) {
  return ridge_rows(block, stats, prev_W, prev_psi, lambda, 0.0, lqa_floor);
}

Matrix m_step_enet(const OmicsBlock& block, const LatentStats& stats, const Matrix& prev_W,
                   const Vector& prev_psi, double lambda1, double lambda2, double lqa_floor) {
  return ridge_rows(block, stats, prev_W, prev_psi, lambda1, lambda2, lqa_floor);
}

FusedSystem assemble_fused_system(const OmicsBlock& block, const LatentStats& stats,
                                  const Matrix& prev_W, const Vector& prev_psi, double lambda1,
                                  double lambda2, double lqa_floor) {
  if (!block.ordered) {
    throw PreconditionError("fused lasso requires an ordered block; '" + block.name +
                            "' is not ordered");
  }
  check_stats(block, stats, prev_W, prev_psi);
  if (lambda1 < 0.0 || lambda2 < 0.0) throw PreconditionError("penalty parameters must be nonnegative");
  const auto p = block.values.rows();
  const auto q = stats.EZ.rows();

  std::vector<Eigen::Index> position(static_cast<std::size_t>(p), -1);
  FusedSystem sys;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (lambda1 > 0.0 && row_dropped(prev_W, i, lqa_floor)) continue;
    position[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(sys.free_rows.size());
    sys.free_rows.push_back(static_cast<int>(i));
  }
  const auto s = static_cast<Eigen::Index>(sys.free_rows.size()) * q;
  sys.matrix = BandedSpd(s, q);
  sys.rhs = Vector::Zero(s);

  const Matrix C = block.values * stats.EZ.transpose();
  for (int i : sys.free_rows) {
    const Eigen::Index base = position[static_cast<std::size_t>(i)] * q;
    const double inv_psi = 1.0 / prev_psi(i);
    for (Eigen::Index k = 0; k < q; ++k) {
      for (Eigen::Index l = 0; l <= k; ++l) sys.matrix.at(base + k, base + l) += inv_psi * stats.SZZ(k, l);
      sys.matrix.at(base + k, base + k) +=
          2.0 * lambda1 / std::max(std::abs(prev_W(i, k)), lqa_floor);
      sys.rhs(base + k) = inv_psi * C(i, k);
    }
  }
  if (lambda2 > 0.0) {
    for (Eigen::Index i = 0; i + 1 < p; ++i) {
      const Eigen::Index a = position[static_cast<std::size_t>(i)];
      const Eigen::Index b = position[static_cast<std::size_t>(i + 1)];
      if (a < 0 && b < 0) continue;
      for (Eigen::Index k = 0; k < q; ++k) {
        const double weight =
            2.0 * lambda2 / std::max(std::abs(prev_W(i + 1, k) - prev_W(i, k)), lqa_floor);
        // Graph Laplacian of the fusion chain; a neighbour held at zero only
        // contributes to the diagonal.
        if (a >= 0) sys.matrix.at(a * q + k, a * q + k) += weight;
        if (b >= 0) sys.matrix.at(b * q + k, b * q + k) += weight;
        if (a >= 0 && b >= 0) sys.matrix.at(b * q + k, a * q + k) -= weight;
      }
    }
  }
  return sys;
}

Matrix m_step_fused(const OmicsBlock& block, const LatentStats& stats, const Matrix& prev_W,
                    const Vector& prev_psi, double lambda1, double lambda2, double lqa_floor,
                    Eigen::Index cg_threshold) {
  const FusedSystem sys =
      assemble_fused_system(block, stats, prev_W, prev_psi, lambda1, lambda2, lqa_floor);
  const auto q = stats.EZ.rows();
  Matrix W = Matrix::Zero(block.values.rows(), q);
  if (sys.free_rows.empty()) return W;
  Vector solution;
  try {
    solution = solve_banded_spd(sys.matrix, sys.rhs, cg_threshold);
  } catch (const NumericalError& e) {
    throw NumericalError("fused M-step for block '" + block.name + "': " + e.what());
  }
  for (std::size_t r = 0; r < sys.free_rows.size(); ++r) {
    W.row(sys.free_rows[r]) = solution.segment(static_cast<Eigen::Index>(r) * q, q).transpose();
  }
  return W;
}

Vector update_psi(const OmicsBlock& block, const LatentStats& stats, const Matrix& new_W) {
  if (new_W.rows() != block.values.rows() || new_W.cols() != stats.EZ.rows()) {
    throw PreconditionError("update_psi: loading matrix does not match block '" + block.name + "'");
  }
  return psi_unfloored(block, stats, new_W).cwiseMax(psi_floor(block));
}

Matrix m_step(const OmicsBlock& block, const PenaltySpec& penalty, const LatentStats& stats,
              const Matrix& prev_W, const Vector& prev_psi, const FitOptions& opts) {
  return std::visit(
      [&](const auto& pen) -> Matrix {
        using T = std::decay_t<decltype(pen)>;
        if constexpr (std::is_same_v<T, Lasso>) {
          return m_step_lasso(block, stats, prev_W, prev_psi, pen.lambda, opts.lqa_floor);
        } else if constexpr (std::is_same_v<T, ElasticNet>) {
          return m_step_enet(block, stats, prev_W, prev_psi, pen.lambda1, pen.lambda2,
                             opts.lqa_floor);
        } else {
          return m_step_fused(block, stats, prev_W, prev_psi, pen.lambda1, pen.lambda2,
                              opts.lqa_floor, opts.cg_threshold);
        }
      },
      penalty);
}

double penalty_value(const PenaltySpec& penalty, const Matrix& W) {
  return std::visit(
      [&](const auto& pen) -> double {
        using T = std::decay_t<decltype(pen)>;
        const double l1 = W.cwiseAbs().sum();
        if constexpr (std::is_same_v<T, Lasso>) {
          return 2.0 * pen.lambda * l1;
        } else if constexpr (std::is_same_v<T, ElasticNet>) {
          return 2.0 * pen.lambda1 * l1 + pen.lambda2 * W.squaredNorm();
        } else {
          double fusion = 0.0;
          if (W.rows() > 1) {
            fusion = (W.bottomRows(W.rows() - 1) - W.topRows(W.rows() - 1)).cwiseAbs().sum();
          }
          return 2.0 * pen.lambda1 * l1 + 2.0 * pen.lambda2 * fusion;
        }
      },
      penalty);
}

double penalized_loglik(const FactorModel& model, std::span<const OmicsBlock> blocks,
                        std::span<const PenaltySpec> penalties) {
  if (penalties.size() != blocks.size()) throw PreconditionError("one penalty per block is required");
  return evaluate(model, blocks, penalties).objective;
}

std::vector<int> nonzero_rows(const Matrix& W) {
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    if ((W.row(i).array() != 0.0).any()) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

FitResult fit(std::span<const OmicsBlock> blocks, int K, std::span<const PenaltySpec> penalties,
              const FitOptions& opts) {
  opts.validate();
  validate_blocks(blocks);
  if (penalties.size() != blocks.size()) {
    throw PreconditionError("fit needs one penalty per block (" + std::to_string(blocks.size()) +
                            " blocks, " + std::to_string(penalties.size()) + " penalties)");
  }
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    if (!blocks[t].centered) {
      throw PreconditionError("block '" + blocks[t].name + "' must be centered before fitting");
    }
    validate_penalty(penalties[t], blocks[t]);
  }

  FitResult result;
  FactorModel model = init_model(blocks, K, opts.seed);
  if (opts.noise == NoiseModel::isotropic) make_isotropic(model, blocks, model.psi);

  Evaluation ev = evaluate(model, blocks, penalties);
  double previous = ev.objective;
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    FactorModel next = model;
    std::vector<Vector> raw(blocks.size());
    for (std::size_t t = 0; t < blocks.size(); ++t) {
      next.W[t] = m_step(blocks[t], penalties[t], ev.stats, model.W[t], model.psi[t], opts);
      raw[t] = opts.exact_psi ? psi_exact(blocks[t], ev.stats, next.W[t])
                              : psi_unfloored(blocks[t], ev.stats, next.W[t]);
      next.psi[t] = raw[t].cwiseMax(psi_floor(blocks[t]));
    }
    if (opts.noise == NoiseModel::isotropic) make_isotropic(next, blocks, raw);
    model = std::move(next);
    ev = evaluate(model, blocks, penalties);
    result.objective_trace.push_back(ev.objective);
    result.n_iter = iter;
    if (std::abs(ev.objective - previous) / (1.0 + std::abs(ev.objective)) <= opts.tol) {
      result.converged = true;
      break;
    }
    previous = ev.objective;
  }

  if (opts.zero_inactive) {
    for (std::size_t t = 0; t < blocks.size(); ++t) {
      zero_inactive_rows(blocks[t], penalties[t], ev.stats, model.psi[t], model.W[t]);
    }
  }
  for (auto& W : model.W) W = (W.array().abs() < opts.zero_threshold).select(0.0, W);
  result.stats = e_step(model, blocks);
  const Matrix points = result.stats.EZ.transpose();
  result.labels = kmeans(points, K, opts.kmeans_restarts, derive_seed(opts.seed, {0x6b6d65616e73ULL}))
                      .partition;
  for (const auto& W : model.W) result.selected_features.push_back(nonzero_rows(W));
  result.model = std::move(model);
  return result;
}

int zero_inactive_rows(const OmicsBlock& block, const PenaltySpec& penalty, const LatentStats& stats,
                       const Vector& psi, Matrix& W) {
  double lambda1 = 0.0;
  if (const auto* l = std::get_if<Lasso>(&penalty)) {
    lambda1 = l->lambda;
  } else if (const auto* e = std::get_if<ElasticNet>(&penalty)) {
    lambda1 = e->lambda1;
  } else {
    return 0;
  }
  if (lambda1 <= 0.0) return 0;
  const Matrix c = block.values * stats.EZ.transpose();
  int zeroed = 0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    if (W.row(i).isZero(0.0)) continue;
    if (c.row(i).cwiseAbs().maxCoeff() <= 2.0 * psi(i) * lambda1) {
      W.row(i).setZero();
      ++zeroed;
    }
  }
  return zeroed;
}

Matrix predict_latent(const FactorModel& model, std::span<const OmicsBlock> new_blocks) {
  if (new_blocks.size() != model.W.size()) {
    throw PreconditionError("predict_latent: expected " + std::to_string(model.W.size()) +
                            " blocks, got " + std::to_string(new_blocks.size()));
  }
  for (std::size_t t = 0; t < new_blocks.size(); ++t) {
    if (new_blocks[t].values.rows() != model.W[t].rows()) {
      throw PreconditionError("predict_latent: block '" + new_blocks[t].name + "' has " +
                              std::to_string(new_blocks[t].values.rows()) + " features, model has " +
                              std::to_string(model.W[t].rows()));
    }
    if (new_blocks[t].values.cols() != new_blocks.front().values.cols()) {
      throw PreconditionError("predict_latent: blocks disagree on the number of samples");
    }
  }
  return WoodburyFactor(model).latent_mean(new_blocks);
}

}  // namespace icluster
