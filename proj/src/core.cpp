#include "icluster/core.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "icluster/errors.hpp"

namespace icluster {

namespace {

void check_finite(const OmicsBlock& block) {
  const auto& X = block.values;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (!std::isfinite(X(i, j))) {
        std::ostringstream msg;
        msg << "block '" << block.name << "': non-finite value at row " << i + 1 << ", column "
            << j + 1;
        if (static_cast<std::size_t>(i) < block.feature_ids.size()) {
          msg << " (feature " << block.feature_ids[i];
          if (static_cast<std::size_t>(j) < block.sample_ids.size()) msg << ", sample " << block.sample_ids[j];
          msg << ")";
        }
        throw DataError(msg.str());
      }
    }
  }
}

constexpr double kCoreConditionLimit = 1e14;

}  // namespace

OmicsBlock center_rows(const OmicsBlock& block) {
  check_finite(block);
  Vector means = block.values.rowwise().mean();
  OmicsBlock out = center_rows_with(block, means);
  // A second pass absorbs rounding left by the first subtraction.
  Vector residual = out.values.rowwise().mean();
  out.values.colwise() -= residual;
  out.row_means = means + residual;
  if (block.centered && block.row_means.size() == means.size()) out.row_means += block.row_means;
  return out;
}

OmicsBlock center_rows_with(const OmicsBlock& block, const Vector& means) {
  if (means.size() != block.values.rows()) {
    throw PreconditionError("centering means have length " + std::to_string(means.size()) +
                            " but block '" + block.name + "' has " +
                            std::to_string(block.values.rows()) + " rows");
  }
  check_finite(block);
  OmicsBlock out = block;
  out.values.colwise() -= means;
  out.row_means = means;
  out.centered = true;
  return out;
}

OmicsBlock scale_rows(const OmicsBlock& block) {
  check_finite(block);
  OmicsBlock out = block;
  const double n = static_cast<double>(block.samples());
  Vector scales(block.features());
  for (int i = 0; i < block.features(); ++i) {
    const auto row = block.values.row(i);
    const double mean = row.mean();
    const double sd = std::sqrt((row.array() - mean).square().sum() / std::max(1.0, n - 1.0));
    scales(i) = sd > 0.0 ? sd : 1.0;
    out.values.row(i) /= scales(i);
  }
  out.row_scales = scales;
  return out;
}

void validate_blocks(std::span<const OmicsBlock> blocks) {
  if (blocks.empty()) throw DataError("at least one data block is required");
  const int n = blocks.front().samples();
  for (const auto& b : blocks) {
    if (b.samples() != n) {
      throw DataError("block '" + b.name + "' has " + std::to_string(b.samples()) +
                      " samples, expected " + std::to_string(n));
    }
    if (b.features() == 0) throw DataError("block '" + b.name + "' has no features");
    if (!b.sample_ids.empty() && !blocks.front().sample_ids.empty() &&
        b.sample_ids != blocks.front().sample_ids) {
      throw DataError("block '" + b.name + "' sample IDs differ from block '" +
                      blocks.front().name + "'");
    }
  }
}

Vector psi_floor(const OmicsBlock& block) {
  const double n = static_cast<double>(block.samples());
  Vector second_moment = block.values.rowwise().squaredNorm() / n;
  return (1e-4 * second_moment.array()).max(1e-6).matrix();
}

Matrix concatenate(std::span<const OmicsBlock> blocks) {
  Eigen::Index p = 0;
  for (const auto& b : blocks) p += b.values.rows();
  Matrix X(p, blocks.empty() ? 0 : blocks.front().values.cols());
  Eigen::Index offset = 0;
  for (const auto& b : blocks) {
    X.middleRows(offset, b.values.rows()) = b.values;
    offset += b.values.rows();
  }
  return X;
}

OmicsBlock select_samples(const OmicsBlock& block, std::span<const int> columns) {
  OmicsBlock out;
  out.name = block.name;
  out.feature_ids = block.feature_ids;
  out.ordered = block.ordered;
  out.values.resize(block.values.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] < 0 || columns[c] >= block.samples()) throw PreconditionError("sample index out of range");
    out.values.col(static_cast<Eigen::Index>(c)) = block.values.col(columns[c]);
    if (!block.sample_ids.empty()) out.sample_ids.push_back(block.sample_ids[static_cast<std::size_t>(columns[c])]);
  }
  return out;
}

FactorModel init_model(std::span<const OmicsBlock> blocks, int K, std::uint64_t /*seed*/) {
  validate_blocks(blocks);
  if (K < 2) throw PreconditionError("K must be at least 2");
  const int n = blocks.front().samples();
  const int q = K - 1;
  if (q >= n) {
    throw PreconditionError("invalid rank: K-1 = " + std::to_string(q) +
                            " must be smaller than the sample count " + std::to_string(n));
  }
  for (const auto& b : blocks) {
    if (!b.centered) throw PreconditionError("block '" + b.name + "' must be centered before fitting");
  }

  const Matrix X = concatenate(blocks);
  Eigen::BDCSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Matrix U = svd.matrixU().leftCols(q);
  const Vector d = svd.singularValues().head(q);
  Matrix V = svd.matrixV().leftCols(q);
  for (int k = 0; k < q; ++k) {
    Eigen::Index arg = 0;
    U.col(k).cwiseAbs().maxCoeff(&arg);
    if (U(arg, k) < 0.0) {
      U.col(k) *= -1.0;
      V.col(k) *= -1.0;
    }
  }
  const Matrix W = U * d.asDiagonal() / std::sqrt(static_cast<double>(n));
  const Matrix residual = X - U * d.asDiagonal() * V.transpose();

  FactorModel model;
  model.K = K;
  Eigen::Index offset = 0;
  for (const auto& b : blocks) {
    const auto p = b.values.rows();
    model.W.push_back(W.middleRows(offset, p));
    Vector psi = residual.middleRows(offset, p).rowwise().squaredNorm() / static_cast<double>(n);
    model.psi.push_back(psi.cwiseMax(psi_floor(b)));
    offset += p;
  }
  return model;
}

WoodburyFactor::WoodburyFactor(const FactorModel& model) {
  model.validate();
  const Eigen::Index p = model.total_features();
  const int q = model.latent_dim();
  W_.resize(p, q);
  psi_.resize(p);
  Eigen::Index offset = 0;
  for (std::size_t t = 0; t < model.W.size(); ++t) {
    offsets_.push_back(offset);
    W_.middleRows(offset, model.W[t].rows()) = model.W[t];
    psi_.segment(offset, model.psi[t].size()) = model.psi[t];
    offset += model.W[t].rows();
  }
  offsets_.push_back(offset);
  psi_inv_W_ = psi_.cwiseInverse().asDiagonal() * W_;
  core_ = Matrix::Identity(q, q) + W_.transpose() * psi_inv_W_;
  core_ = 0.5 * (core_ + core_.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(core_, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  core_llt_.compute(core_);
  if (core_llt_.info() != Eigen::Success || !std::isfinite(condition_) ||
      condition_ > kCoreConditionLimit) {
    std::ostringstream msg;
    msg << "Woodbury core I + W'Psi^-1 W is singular (condition number " << condition_ << ")";
    throw NumericalError(msg.str());
  }
}

Matrix WoodburyFactor::apply(const Matrix& X) const {
  if (X.rows() != W_.rows()) {
    throw PreconditionError("woodbury_apply: X has " + std::to_string(X.rows()) +
                            " rows, model has " + std::to_string(W_.rows()));
  }
  Matrix out = psi_.cwiseInverse().asDiagonal() * X;
  out -= psi_inv_W_ * core_llt_.solve(psi_inv_W_.transpose() * X);
  return out;
}

Matrix WoodburyFactor::projected(std::span<const OmicsBlock> blocks) const {
  if (blocks.size() + 1 != offsets_.size()) {
    throw PreconditionError("block count does not match the model");
  }
  const Eigen::Index n = blocks.front().values.cols();
  Matrix G = Matrix::Zero(W_.cols(), n);
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    const auto p = offsets_[t + 1] - offsets_[t];
    if (blocks[t].values.rows() != p || blocks[t].values.cols() != n) {
      throw PreconditionError("block '" + blocks[t].name + "' does not match the model dimensions");
    }
    G.noalias() += psi_inv_W_.middleRows(offsets_[t], p).transpose() * blocks[t].values;
  }
  return G;
}

Matrix WoodburyFactor::latent_mean(std::span<const OmicsBlock> blocks) const {
  return core_llt_.solve(projected(blocks));
}

Matrix WoodburyFactor::latent_mean(const Matrix& X) const {
  if (X.rows() != W_.rows()) throw PreconditionError("latent_mean: row count mismatch");
  return core_llt_.solve(psi_inv_W_.transpose() * X);
}

Matrix WoodburyFactor::core_inverse() const {
  return core_llt_.solve(Matrix::Identity(core_.rows(), core_.cols()));
}

double WoodburyFactor::log_det_sigma() const {
  const Matrix L = core_llt_.matrixL();
  return psi_.array().log().sum() + 2.0 * L.diagonal().array().log().sum();
}

WoodburyResult woodbury_apply(const FactorModel& model, const Matrix& X) {
  WoodburyFactor factor(model);
  return {factor.apply(X), factor.core()};
}

}  // namespace icluster
