#include "icluster/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "icluster/core.hpp"
#include "icluster/errors.hpp"
#include "icluster/parallel.hpp"
#include "icluster/random.hpp"

namespace icluster {

int SearchDomain::dimension() const {
  int d = 0;
  for (const auto& b : blocks) {
    for (const auto& s : b.params) d += s.tuned ? 1 : 0;
  }
  return d;
}

void SearchDomain::validate() const {
  if (blocks.empty()) throw PreconditionError("search domain has no blocks");
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    const auto& b = blocks[t];
    if (static_cast<int>(b.params.size()) != parameter_count(b.kind)) {
      throw PreconditionError("search domain block " + std::to_string(t) + ": " + to_string(b.kind) +
                              " needs " + std::to_string(parameter_count(b.kind)) + " parameter(s)");
    }
    for (const auto& s : b.params) {
      if (!s.tuned) {
        if (!(s.value >= 0.0) || !std::isfinite(s.value)) {
          throw PreconditionError("fixed penalty parameters must be finite and nonnegative");
        }
        continue;
      }
      const auto& r = s.range;
      if (!(r.lo >= 0.0) || !(r.lo < r.hi) || !std::isfinite(r.hi)) {
        throw PreconditionError("search range must satisfy 0 <= lo < hi");
      }
      if (r.scale == Scale::log && !(r.lo > 0.0)) {
        throw PreconditionError("log-scaled search range needs lo > 0");
      }
    }
  }
  if (dimension() < 1) throw PreconditionError("search domain has no tuned parameter");
}

std::vector<PenaltySpec> SearchDomain::penalties_at(std::span<const double> point) const {
  if (static_cast<int>(point.size()) != dimension()) {
    throw PreconditionError("design point has " + std::to_string(point.size()) +
                            " coordinates, domain dimension is " + std::to_string(dimension()));
  }
  std::vector<PenaltySpec> out;
  std::size_t next = 0;
  for (const auto& b : blocks) {
    std::vector<double> params;
    for (const auto& s : b.params) params.push_back(s.tuned ? point[next++] : s.value);
    out.push_back(make_penalty(b.kind, params));
  }
  return out;
}

bool is_prime(long n) {
  if (n < 2) return false;
  for (long d = 2; d * d <= n; ++d) {
    if (n % d == 0) return false;
  }
  return true;
}

double centered_l2_discrepancy(const Matrix& x) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (n == 0) throw PreconditionError("discrepancy of an empty point set");
  const Matrix a = (x.array() - 0.5).abs().matrix();
  double single = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double prod = 1.0;
    for (Eigen::Index k = 0; k < d; ++k) prod *= 1.0 + 0.5 * a(i, k) - 0.5 * a(i, k) * a(i, k);
    single += prod;
  }
  double pair = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double prod = 1.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        prod *= 1.0 + 0.5 * a(i, k) + 0.5 * a(j, k) - 0.5 * std::abs(x(i, k) - x(j, k));
      }
      pair += prod;
    }
  }
  const double nn = static_cast<double>(n);
  const double value = std::pow(13.0 / 12.0, static_cast<double>(d)) - 2.0 / nn * single + pair / (nn * nn);
  return std::sqrt(std::max(0.0, value));
}

namespace {

Matrix lattice(int n, const std::vector<long>& generator) {
  const auto d = static_cast<Eigen::Index>(generator.size());
  Matrix pts(n, d);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const long r = (static_cast<long>(i) * generator[static_cast<std::size_t>(k)]) % n;
      pts(i, k) = static_cast<double>(r) / n + 0.5 / n;
    }
  }
  return pts;
}

}  // namespace

LatticeDesign good_lattice_points(int n_points, int dimension) {
  if (n_points < 5 || !is_prime(n_points)) {
    throw PreconditionError("uniform design needs a prime number of points >= 5, got " +
                            std::to_string(n_points));
  }
  if (dimension < 1 || dimension > 6) {
    throw PreconditionError("uniform design supports 1 to 6 dimensions, got " + std::to_string(dimension));
  }
  LatticeDesign best;
  bool found = false;
  const long first_h = dimension == 1 ? 1 : 2;
  const long last_h = dimension == 1 ? 1 : n_points - 1;
  for (long h = first_h; h <= last_h; ++h) {
    std::vector<long> g;
    long power = 1;
    for (int k = 0; k < dimension; ++k) {
      g.push_back(power);
      power = (power * h) % n_points;
    }
    std::vector<long> sorted = g;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;
    Matrix pts = lattice(n_points, g);
    const double cd = centered_l2_discrepancy(pts);
    if (!found || cd < best.discrepancy) {
      best.points = std::move(pts);
      best.generator = std::move(g);
      best.discrepancy = cd;
      found = true;
    }
  }
  if (!found) {
    throw PreconditionError("no admissible lattice generator for " + std::to_string(dimension) +
                            " dimensions with " + std::to_string(n_points) + " points");
  }
  return best;
}

std::vector<std::vector<double>> uniform_design(int n_points, const SearchDomain& domain) {
  domain.validate();
  const LatticeDesign design = good_lattice_points(n_points, domain.dimension());
  std::vector<const ParamRange*> ranges;
  for (const auto& b : domain.blocks) {
    for (const auto& s : b.params) {
      if (s.tuned) ranges.push_back(&s.range);
    }
  }
  std::vector<std::vector<double>> out;
  for (Eigen::Index i = 0; i < design.points.rows(); ++i) {
    std::vector<double> point;
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      const auto& r = *ranges[k];
      const double u = design.points(i, static_cast<Eigen::Index>(k));
      if (r.scale == Scale::log) {
        point.push_back(std::exp(std::log(r.lo) + u * (std::log(r.hi) - std::log(r.lo))));
      } else {
        point.push_back(r.lo + u * (r.hi - r.lo));
      }
    }
    out.push_back(std::move(point));
  }
  return out;
}

std::vector<double> lambda_max(std::span<const OmicsBlock> blocks, std::span<const int> K_values) {
  std::vector<double> out(blocks.size(), 0.0);
  for (int K : K_values) {
    const FactorModel model = init_model(blocks, K);
    const LatentStats stats = e_step(model, blocks);
    for (std::size_t t = 0; t < blocks.size(); ++t) {
      const Matrix C = blocks[t].values * stats.EZ.transpose();
      // Zero is optimal for row i when |c_ik| / psi_i <= 2 lambda for every k.
      const Vector scaled = C.cwiseAbs().rowwise().maxCoeff().cwiseQuotient(model.psi[t]);
      out[t] = std::max(out[t], 0.5 * scaled.maxCoeff());
    }
  }
  return out;
}

SearchDomain default_search_domain(std::span<const OmicsBlock> blocks,
                                   std::span<const PenaltyKind> kinds, std::span<const int> K_values) {
  if (kinds.size() != blocks.size()) throw PreconditionError("one penalty kind per block is required");
  const auto lmax = lambda_max(blocks, K_values);
  SearchDomain domain;
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    BlockSearch b;
    b.kind = kinds[t];
    const double hi = lmax[t] > 0.0 ? lmax[t] : 1.0;
    b.params.push_back({true, 0.0, {0.1 * hi, hi, Scale::log}});
    if (kinds[t] == PenaltyKind::fused_lasso) {
      b.params.push_back({true, 0.0, {1e-3 * hi, hi, Scale::log}});
    } else if (kinds[t] == PenaltyKind::elastic_net) {
      b.params.push_back({true, 0.0, {1e-3, 10.0, Scale::log}});
    }
    domain.blocks.push_back(std::move(b));
  }
  return domain;
}

std::vector<int> assign_folds(int n, int folds, std::uint64_t seed) {
  if (folds < 2) throw PreconditionError("at least 2 folds are required");
  if (folds > n) throw PreconditionError("more folds than samples");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x666f6c6473ULL}));
  // Fisher-Yates with an explicit draw so the permutation is library-independent.
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r % folds;
  return fold_of;
}

namespace {

bool every_block_selected(const FitResult& r) {
  for (const auto& s : r.selected_features) {
    if (s.empty()) return false;
  }
  return true;
}

// Every latent dimension keeps at least one nonzero loading in some block.
bool every_dimension_loaded(const FitResult& r) {
  const Eigen::Index dims = r.model.W.front().cols();
  for (Eigen::Index k = 0; k < dims; ++k) {
    bool loaded = false;
    for (const auto& W : r.model.W) loaded = loaded || !W.col(k).isZero(0.0);
    if (!loaded) return false;
  }
  return true;
}

double selected_count(const FitResult& r) {
  double total = 0.0;
  for (const auto& s : r.selected_features) total += static_cast<double>(s.size());
  return total;
}

// Cohen's kappa between two selections of p features, as 0/1 indicators.
double selection_kappa(const std::vector<int>& a, const std::vector<int>& b, double p) {
  std::vector<int> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double c = static_cast<double>(common.size());
  const double observed = (p - na - nb + 2.0 * c) / p;
  const double chance = (na * nb + (p - na) * (p - nb)) / (p * p);
  if (chance >= 1.0) return a == b ? 1.0 : 0.0;
  return (observed - chance) / (1.0 - chance);
}

// Mean pairwise kappa of the per-block selections across folds, averaged over blocks.
double selection_stability(const std::vector<std::vector<std::vector<int>>>& per_fold,
                           std::span<const OmicsBlock> blocks) {
  if (per_fold.size() < 2) return 1.0;
  double total = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < per_fold.size(); ++a) {
    for (std::size_t b = a + 1; b < per_fold.size(); ++b) {
      double sum = 0.0;
      for (std::size_t t = 0; t < blocks.size(); ++t) {
        sum += selection_kappa(per_fold[a][t], per_fold[b][t], static_cast<double>(blocks[t].features()));
      }
      total += sum / static_cast<double>(blocks.size());
      ++pairs;
    }
  }
  return total / pairs;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::vector<PenaltySpec> scale_penalties(std::span<const PenaltySpec> penalties, double factor) {
  std::vector<PenaltySpec> out;
  for (const auto& p : penalties) {
    auto params = penalty_parameters(p);
    for (auto& v : params) v *= factor;
    out.push_back(make_penalty(kind_of(p), params));
  }
  return out;
}

RIResult reproducibility_index(std::span<const OmicsBlock> blocks, int K,
                               std::span<const PenaltySpec> penalties, const RIOptions& opts) {
  validate_blocks(blocks);
  const auto folds = assign_folds(blocks.front().samples(), opts.folds, opts.seed);
  return reproducibility_index(blocks, K, penalties, folds, opts);
}

RIResult reproducibility_index(std::span<const OmicsBlock> blocks, int K,
                               std::span<const PenaltySpec> penalties, std::span<const int> fold_of,
                               const RIOptions& opts) {
  validate_blocks(blocks);
  if (opts.folds < 2) throw PreconditionError("reproducibility index needs at least 2 folds");
  const int n = blocks.front().samples();
  if (static_cast<int>(fold_of.size()) != n) throw PreconditionError("fold assignment length mismatch");

  RIResult result;
  std::vector<std::vector<std::vector<int>>> selections;
  double selected = 0.0;
  int fitted = 0;
  for (int f = 0; f < opts.folds; ++f) {
    std::vector<int> learn, test;
    for (int j = 0; j < n; ++j) (fold_of[static_cast<std::size_t>(j)] == f ? test : learn).push_back(j);
    if (static_cast<int>(test.size()) < 3 * K || static_cast<int>(learn.size()) <= K) {
      result.skipped_folds.push_back(f);
      result.warnings.push_back("fold " + std::to_string(f + 1) + " skipped: " +
                                std::to_string(test.size()) + " test samples, need at least " +
                                std::to_string(3 * K));
      continue;
    }
    std::vector<OmicsBlock> learn_blocks, test_for_predict, test_alone;
    for (const auto& b : blocks) {
      OmicsBlock l = center_rows(select_samples(b, learn));
      OmicsBlock t = select_samples(b, test);
      test_for_predict.push_back(center_rows_with(t, l.row_means));
      test_alone.push_back(center_rows(t));
      learn_blocks.push_back(std::move(l));
    }
    FitOptions fo = opts.fit;
    fo.seed = derive_seed(opts.seed, {static_cast<std::uint64_t>(K), static_cast<std::uint64_t>(f), 1});
    const FitResult learned =
        fit(learn_blocks, K, scale_penalties(penalties, static_cast<double>(learn.size()) / n), fo);
    fo.seed = derive_seed(opts.seed, {static_cast<std::uint64_t>(K), static_cast<std::uint64_t>(f), 2});
    const FitResult refit =
        fit(test_alone, K, scale_penalties(penalties, static_cast<double>(test.size()) / n), fo);
    selected += selected_count(learned);
    selections.push_back(learned.selected_features);
    ++fitted;
    if (!every_block_selected(learned) || !every_dimension_loaded(learned) || selected_count(refit) == 0.0) {
      result.fold_ari.push_back(0.0);
      continue;
    }
    const Matrix predicted = predict_latent(learned.model, test_for_predict);
    const Partition c1 =
        kmeans(predicted.transpose(), K, opts.fit.kmeans_restarts,
               derive_seed(opts.seed, {static_cast<std::uint64_t>(K), static_cast<std::uint64_t>(f), 3}))
            .partition;
    result.fold_ari.push_back(adjusted_rand_index(c1, refit.labels));
  }
  if (result.fold_ari.empty()) {
    throw PreconditionError("reproducibility index: every fold was skipped (test splits smaller than 3K = " +
                            std::to_string(3 * K) + ")");
  }
  result.ri = median(result.fold_ari);
  result.mean_selected = selected / fitted;
  result.stability = selection_stability(selections, blocks);
  return result;
}

void select_best(TuneResult& result, const SearchDomain& domain) {
  if (result.evaluated.empty()) throw PreconditionError("no tuning points evaluated");
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
  };
  auto better = [&](const TunePoint& a, const TunePoint& b) {
    if (a.ri != b.ri) return a.ri > b.ri;
    if (a.K != b.K) return a.K > b.K;
    if (a.stability != b.stability) return a.stability > b.stability;
    if (a.mean_selected != b.mean_selected) return a.mean_selected < b.mean_selected;
    return norm(a.params) < norm(b.params);
  };
  const TunePoint* best = &result.evaluated.front();
  for (const auto& pt : result.evaluated) {
    if (better(pt, *best)) best = &pt;
  }
  result.best_K = best->K;
  result.best_params = best->params;
  result.best_ri = best->ri;
  result.best_penalties = domain.penalties_at(best->params);

  result.ri_by_K.clear();
  for (const auto& pt : result.evaluated) {
    auto it = std::find_if(result.ri_by_K.begin(), result.ri_by_K.end(),
                           [&](const auto& e) { return e.first == pt.K; });
    if (it == result.ri_by_K.end()) {
      result.ri_by_K.emplace_back(pt.K, pt.ri);
    } else {
      it->second = std::max(it->second, pt.ri);
    }
  }
  std::sort(result.ri_by_K.begin(), result.ri_by_K.end());
}

TuneResult tune(std::span<const OmicsBlock> blocks, std::span<const int> K_range,
                const SearchDomain& domain, const TuneOptions& opts) {
  if (K_range.empty()) throw PreconditionError("K range is empty");
  for (int K : K_range) {
    if (K < 2) throw PreconditionError("every K in the range must be at least 2");
  }
  if (domain.blocks.size() != blocks.size()) throw PreconditionError("search domain does not match blocks");
  validate_blocks(blocks);
  const auto points = uniform_design(opts.n_points, domain);
  const auto fold_of = assign_folds(blocks.front().samples(), opts.ri.folds, opts.ri.seed);

  TuneResult result;
  for (int K : K_range) {
    for (const auto& p : points) result.evaluated.push_back({K, p, 0.0});
  }
  parallel_for(result.evaluated.size(), opts.threads, [&](std::size_t i) {
    auto& pt = result.evaluated[i];
    const auto penalties = domain.penalties_at(pt.params);
    const RIResult r = reproducibility_index(blocks, pt.K, penalties, fold_of, opts.ri);
    pt.ri = r.ri;
    pt.mean_selected = r.mean_selected;
    pt.stability = r.stability;
  });
  select_best(result, domain);
  return result;
}

}  // namespace icluster
