#include "icluster/model.hpp"

#include <cmath>

#include "icluster/errors.hpp"

namespace icluster {

PenaltyKind kind_of(const PenaltySpec& penalty) {
  return static_cast<PenaltyKind>(penalty.index());
}

std::string to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::lasso: return "lasso";
    case PenaltyKind::elastic_net: return "enet";
    case PenaltyKind::fused_lasso: return "fused";
  }
  return "unknown";
}

PenaltyKind parse_penalty_kind(const std::string& text) {
  if (text == "lasso") return PenaltyKind::lasso;
  if (text == "enet" || text == "elastic_net" || text == "elasticnet") return PenaltyKind::elastic_net;
  if (text == "fused" || text == "fused_lasso" || text == "fusedlasso") return PenaltyKind::fused_lasso;
  throw PreconditionError("unknown penalty kind '" + text + "' (expected lasso, enet or fused)");
}

int parameter_count(PenaltyKind kind) { return kind == PenaltyKind::lasso ? 1 : 2; }

PenaltySpec make_penalty(PenaltyKind kind, const std::vector<double>& params) {
  if (static_cast<int>(params.size()) != parameter_count(kind)) {
    throw PreconditionError(to_string(kind) + " penalty takes " +
                            std::to_string(parameter_count(kind)) + " parameter(s), got " +
                            std::to_string(params.size()));
  }
  switch (kind) {
    case PenaltyKind::lasso: return Lasso{params[0]};
    case PenaltyKind::elastic_net: return ElasticNet{params[0], params[1]};
    case PenaltyKind::fused_lasso: return FusedLasso{params[0], params[1]};
  }
  throw PreconditionError("unknown penalty kind");
}

std::vector<double> penalty_parameters(const PenaltySpec& penalty) {
  return std::visit(
      [](const auto& p) -> std::vector<double> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Lasso>) {
          return {p.lambda};
        } else {
          return {p.lambda1, p.lambda2};
        }
      },
      penalty);
}

void validate_penalty(const PenaltySpec& penalty, const OmicsBlock& block) {
  for (double v : penalty_parameters(penalty)) {
    if (!std::isfinite(v) || v < 0.0) {
      throw PreconditionError("penalty parameters must be finite and nonnegative (block '" +
                              block.name + "')");
    }
  }
  if (kind_of(penalty) == PenaltyKind::fused_lasso && !block.ordered) {
    throw PreconditionError("fused lasso requires an ordered block; '" + block.name +
                            "' is not marked ordered");
  }
}

int FactorModel::total_features() const {
  int p = 0;
  for (const auto& w : W) p += static_cast<int>(w.rows());
  return p;
}

void FactorModel::validate() const {
  if (K < 2) throw PreconditionError("K must be at least 2");
  if (W.size() != psi.size() || W.empty()) {
    throw PreconditionError("model needs one loading matrix and one variance vector per block");
  }
  for (std::size_t t = 0; t < W.size(); ++t) {
    if (W[t].cols() != latent_dim() || W[t].rows() != psi[t].size()) {
      throw PreconditionError("model block " + std::to_string(t) + " has inconsistent shape");
    }
    if (!W[t].allFinite()) throw PreconditionError("non-finite loadings in block " + std::to_string(t));
    if (!(psi[t].array() > 0.0).all() || !psi[t].allFinite()) {
      throw PreconditionError("noise variances must be positive (block " + std::to_string(t) + ")");
    }
  }
}

}  // namespace icluster
