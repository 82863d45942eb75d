#include "icluster/bench.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "icluster/core.hpp"
#include "icluster/errors.hpp"
#include "icluster/random.hpp"
#include "icluster/tuning.hpp"

namespace icluster {

namespace {

struct SvdBasis {
  Matrix U;  // features x q
  Vector d;
  Matrix V;  // samples x q
};

SvdBasis truncated_svd(const Matrix& X, int q) {
  if (q < 1 || q > std::min(X.rows(), X.cols())) throw PreconditionError("SVD rank out of range");
  Eigen::BDCSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdBasis b{svd.matrixU().leftCols(q), svd.singularValues().head(q), svd.matrixV().leftCols(q)};
  for (int k = 0; k < q; ++k) {
    Eigen::Index at = 0;
    b.U.col(k).cwiseAbs().maxCoeff(&at);
    if (b.U(at, k) < 0.0) {
      b.U.col(k) *= -1.0;
      b.V.col(k) *= -1.0;
    }
  }
  return b;
}

std::vector<OmicsBlock> centered(std::span<const OmicsBlock> blocks) {
  std::vector<OmicsBlock> out;
  for (const auto& b : blocks) out.push_back(center_rows(b));
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

MeanSd summarize(const std::vector<double>& v) {
  MeanSd s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

// Data the partitioner sees: one block, or all of them stacked.
Matrix baseline_points(std::span<const OmicsBlock> blocks, Method method, int block) {
  if (method == Method::kmeans_separate) return blocks[static_cast<std::size_t>(block)].values.transpose();
  return concatenate(blocks).transpose();
}

Partition baseline_partition(std::span<const OmicsBlock> blocks, Method method, int block, int K,
                             std::uint64_t seed, int restarts) {
  if (method == Method::svd_concatenated) return svd_baseline(blocks, K, seed, restarts);
  return kmeans(baseline_points(blocks, method, block), K, restarts, seed).partition;
}

void score(ReplicateRecord& rec, const FitResult& fitted, const SimTruth& truth) {
  for (std::size_t t = 0; t < truth.true_features.size(); ++t) {
    const auto& tf = truth.true_features[t];
    int tp = 0;
    int fp = 0;
    for (int i : fitted.selected_features[t]) {
      (std::find(tf.begin(), tf.end(), i) != tf.end() ? tp : fp) += 1;
    }
    rec.true_positives.push_back(tp);
    rec.false_positives.push_back(fp);
  }
}

PenaltyKind kind_for(Method m) {
  switch (m) {
    case Method::lasso: return PenaltyKind::lasso;
    case Method::enet: return PenaltyKind::elastic_net;
    case Method::fused: return PenaltyKind::fused_lasso;
    default: throw PreconditionError("not a sparse method: " + to_string(m));
  }
}

ReplicateRecord run_sparse(const SimData& data, Method method, int r, std::uint64_t rep_seed,
                           const BenchOptions& opts) {
  ReplicateRecord rec;
  rec.replicate = r;
  const auto blocks = centered(data.blocks);
  const std::vector<PenaltyKind> kinds(blocks.size(), kind_for(method));
  const SearchDomain domain = default_search_domain(blocks, kinds, opts.K_range);
  TuneOptions to;
  to.n_points = opts.n_points;
  to.threads = opts.threads;
  to.ri.folds = opts.folds;
  to.ri.fit = opts.fit;
  to.ri.seed = rep_seed;
  const TuneResult tuned = tune(blocks, opts.K_range, domain, to);
  FitOptions fo = opts.fit;
  fo.seed = derive_seed(rep_seed, {0x66756c6cULL});
  const FitResult fitted = fit(blocks, tuned.best_K, tuned.best_penalties, fo);
  rec.chosen_K = tuned.best_K;
  rec.ri = tuned.best_ri;
  rec.params = tuned.best_params;
  rec.error_rate = misclassification_rate(fitted.labels, data.truth.labels);
  score(rec, fitted, data.truth);
  return rec;
}

ReplicateRecord run_baseline(const SimData& data, Method method, int block, int r, std::uint64_t rep_seed,
                             const BenchOptions& opts) {
  ReplicateRecord rec;
  rec.replicate = r;
  const int n = data.blocks.front().samples();
  const auto fold_of = assign_folds(n, opts.folds, rep_seed);
  const int restarts = opts.fit.kmeans_restarts;
  double best_ri = -2.0;
  for (int K : opts.K_range) {
    const double ri = baseline_reproducibility(data.blocks, method, block, K, fold_of, opts.folds,
                                               derive_seed(rep_seed, {static_cast<std::uint64_t>(K)}), restarts);
    if (ri > best_ri) {
      best_ri = ri;
      rec.chosen_K = K;
    }
  }
  rec.ri = best_ri;
  const Partition p =
      baseline_partition(data.blocks, method, block, rec.chosen_K, derive_seed(rep_seed, {0x66756c6cULL}), restarts);
  rec.error_rate = misclassification_rate(p, data.truth.labels);
  return rec;
}

void aggregate(BenchRow& row, int true_K, int n_blocks) {
  std::vector<double> err, ri;
  std::vector<std::vector<double>> tp(static_cast<std::size_t>(n_blocks)), fp(static_cast<std::size_t>(n_blocks));
  int correct = 0;
  row.failures = 0;
  for (const auto& rec : row.replicates) {
    if (rec.failed) {
      ++row.failures;
      continue;
    }
    correct += rec.chosen_K == true_K ? 1 : 0;
    err.push_back(rec.error_rate);
    ri.push_back(rec.ri);
    for (std::size_t t = 0; t < rec.true_positives.size() && t < tp.size(); ++t) {
      tp[t].push_back(rec.true_positives[t]);
      fp[t].push_back(rec.false_positives[t]);
    }
  }
  const int ok = static_cast<int>(err.size());
  row.percent_correct_K = ok > 0 ? 100.0 * correct / ok : 0.0;
  row.error_rate = summarize(err);
  row.ri = summarize(ri);
  row.true_positives.clear();
  row.false_positives.clear();
  if (is_sparse_method(row.method)) {
    for (int t = 0; t < n_blocks; ++t) {
      row.true_positives.push_back(summarize(tp[static_cast<std::size_t>(t)]));
      row.false_positives.push_back(summarize(fp[static_cast<std::size_t>(t)]));
    }
  }
}

std::string row_label(const BenchRow& row) {
  switch (row.method) {
    case Method::lasso: return "Lasso iCluster";
    case Method::enet: return "Enet iCluster";
    case Method::fused: return "Fused lasso iCluster";
    case Method::kmeans_separate: return "Separate K-means (data " + std::to_string(row.block + 1) + ")";
    case Method::kmeans_concatenated: return "Concatenated K-means";
    case Method::svd_concatenated: return "Concatenated SVD";
  }
  return "?";
}

std::string cell(const MeanSd& s, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f (%.*f)", digits, s.mean, digits, s.sd);
  return buf;
}

}  // namespace

Partition svd_baseline(std::span<const OmicsBlock> blocks, int K, std::uint64_t seed, int restarts) {
  validate_blocks(blocks);
  if (K < 2) throw PreconditionError("K must be at least 2");
  const auto c = centered(blocks);
  const SvdBasis b = truncated_svd(concatenate(c), K - 1);
  return kmeans(b.V, K, restarts, seed).partition;
}

std::vector<Partition> kmeans_baseline(std::span<const OmicsBlock> blocks, int K, KMeansMode mode,
                                       std::uint64_t seed, int restarts) {
  validate_blocks(blocks);
  std::vector<Partition> out;
  if (mode == KMeansMode::concatenated) {
    out.push_back(kmeans(concatenate(blocks).transpose(), K, restarts, seed).partition);
    return out;
  }
  for (const auto& b : blocks) out.push_back(kmeans(b.values.transpose(), K, restarts, seed).partition);
  return out;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::lasso: return "lasso";
    case Method::enet: return "enet";
    case Method::fused: return "fused";
    case Method::kmeans_separate: return "kmeans-separate";
    case Method::kmeans_concatenated: return "kmeans-concat";
    case Method::svd_concatenated: return "svd-concat";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::lasso, Method::enet, Method::fused, Method::kmeans_separate,
                   Method::kmeans_concatenated, Method::svd_concatenated}) {
    if (to_string(m) == name) return m;
  }
  throw PreconditionError("unknown method '" + name +
                          "' (expected lasso, enet, fused, kmeans-separate, kmeans-concat or svd-concat)");
}

bool is_sparse_method(Method m) { return m == Method::lasso || m == Method::enet || m == Method::fused; }

const BenchRow* BenchReport::find(Method m, int block) const {
  for (const auto& r : rows) {
    if (r.method == m && r.block == block) return &r;
  }
  return nullptr;
}

double baseline_reproducibility(std::span<const OmicsBlock> blocks, Method method, int block, int K,
                                std::span<const int> fold_of, int folds, std::uint64_t seed, int restarts) {
  validate_blocks(blocks);
  if (is_sparse_method(method)) throw PreconditionError("baseline_reproducibility needs a baseline method");
  if (method == Method::kmeans_separate && (block < 0 || block >= static_cast<int>(blocks.size()))) {
    throw PreconditionError("block index out of range");
  }
  const int n = blocks.front().samples();
  if (static_cast<int>(fold_of.size()) != n) throw PreconditionError("fold assignment length mismatch");
  std::vector<double> ari;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> learn, test;
    for (int j = 0; j < n; ++j) (fold_of[static_cast<std::size_t>(j)] == f ? test : learn).push_back(j);
    if (static_cast<int>(test.size()) < 3 * K || static_cast<int>(learn.size()) <= K) continue;
    std::vector<OmicsBlock> lb, tb;
    for (const auto& b : blocks) {
      lb.push_back(select_samples(b, learn));
      tb.push_back(select_samples(b, test));
    }
    const std::uint64_t s1 = derive_seed(seed, {static_cast<std::uint64_t>(f), 1});
    const std::uint64_t s2 = derive_seed(seed, {static_cast<std::uint64_t>(f), 2});
    Partition c1;
    if (method == Method::svd_concatenated) {
      std::vector<OmicsBlock> lc, tc;
      for (std::size_t t = 0; t < lb.size(); ++t) {
        lc.push_back(center_rows(lb[t]));
        tc.push_back(center_rows_with(tb[t], lc.back().row_means));
      }
      const SvdBasis basis = truncated_svd(concatenate(lc), K - 1);
      const Matrix projected =
          (basis.d.cwiseInverse().asDiagonal() * basis.U.transpose() * concatenate(tc)).transpose();
      c1 = kmeans(projected, K, restarts, s1).partition;
    } else {
      const KMeansResult learned = kmeans(baseline_points(lb, method, block), K, restarts, s1);
      c1 = assign_nearest(baseline_points(tb, method, block), learned.centroids);
    }
    const Partition c2 = baseline_partition(tb, method, block, K, s2, restarts);
    ari.push_back(adjusted_rand_index(c1, c2));
  }
  if (ari.empty()) {
    throw PreconditionError("reproducibility index: every fold was skipped (test splits smaller than 3K = " +
                            std::to_string(3 * K) + ")");
  }
  return median(ari);
}

BenchReport run_benchmark(int setup, std::span<const Method> methods, int R, const BenchOptions& opts) {
  if (R < 2) throw PreconditionError("benchmark needs at least 2 replicates");
  if (methods.empty()) throw PreconditionError("no benchmark methods given");
  if (opts.K_range.empty()) throw PreconditionError("K range is empty");
  BenchReport report;
  report.setup = setup;
  report.replicates = R;
  report.options = opts;

  for (int r = 0; r < R; ++r) {
    const std::uint64_t rep_seed = opts.seed + static_cast<std::uint64_t>(r);
    const SimData data = simulate_setup(setup, rep_seed);
    const int n_blocks = static_cast<int>(data.blocks.size());
    report.true_K = data.truth.labels.K;
    if (report.rows.empty()) {
      for (Method m : methods) {
        const int parts = m == Method::kmeans_separate ? n_blocks : 1;
        for (int t = 0; t < parts; ++t) {
          BenchRow row;
          row.method = m;
          row.block = m == Method::kmeans_separate ? t : -1;
          report.rows.push_back(std::move(row));
        }
      }
    }
    for (auto& row : report.rows) {
      ReplicateRecord rec;
      try {
        rec = is_sparse_method(row.method) ? run_sparse(data, row.method, r, rep_seed, opts)
                                           : run_baseline(data, row.method, row.block, r, rep_seed, opts);
      } catch (const std::exception& e) {
        rec = ReplicateRecord{};
        rec.replicate = r;
        rec.failed = true;
        rec.error = e.what();
      }
      row.replicates.push_back(std::move(rec));
    }
  }
  summarize_report(report);
  return report;
}

void summarize_report(BenchReport& report) {
  int n_blocks = 0;
  for (const auto& row : report.rows) {
    for (const auto& rec : row.replicates) n_blocks = std::max(n_blocks, static_cast<int>(rec.true_positives.size()));
  }
  for (auto& row : report.rows) aggregate(row, report.true_K, n_blocks);
}

std::string format_report(const BenchReport& report) {
  std::ostringstream os;
  char line[256];
  os << "Setup " << report.setup << " (K = " << report.true_K << "), " << report.replicates
     << " replicates\n\n";
  std::snprintf(line, sizeof line, "%-30s %10s %18s %18s %9s\n", "Method", "correct K", "error rate",
                "reproducibility", "failures");
  os << line;
  for (const auto& row : report.rows) {
    std::snprintf(line, sizeof line, "%-30s %9.0f%% %18s %18s %9d\n", row_label(row).c_str(),
                  row.percent_correct_K, cell(row.error_rate, 4).c_str(), cell(row.ri, 2).c_str(), row.failures);
    os << line;
  }
  bool any_sparse = false;
  for (const auto& row : report.rows) any_sparse = any_sparse || is_sparse_method(row.method);
  if (!any_sparse) return os.str();

  os << "\nFeature selection (true / false positives per block)\n";
  std::snprintf(line, sizeof line, "%-30s", "Method");
  os << line;
  const std::size_t n_blocks = report.rows.empty() ? 0 : [&] {
    for (const auto& row : report.rows) {
      if (is_sparse_method(row.method)) return row.true_positives.size();
    }
    return std::size_t{0};
  }();
  for (std::size_t t = 0; t < n_blocks; ++t) {
    std::snprintf(line, sizeof line, " %15s %15s", ("data " + std::to_string(t + 1) + " TP").c_str(),
                  ("data " + std::to_string(t + 1) + " FP").c_str());
    os << line;
  }
  os << "\n";
  for (const auto& row : report.rows) {
    if (!is_sparse_method(row.method)) continue;
    std::snprintf(line, sizeof line, "%-30s", row_label(row).c_str());
    os << line;
    for (std::size_t t = 0; t < row.true_positives.size(); ++t) {
      std::snprintf(line, sizeof line, " %15s %15s", cell(row.true_positives[t], 2).c_str(),
                    cell(row.false_positives[t], 2).c_str());
      os << line;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace icluster
