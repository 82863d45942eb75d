#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "icluster/bench.hpp"
#include "icluster/core.hpp"
#include "icluster/em.hpp"
#include "icluster/errors.hpp"
#include "icluster/io.hpp"
#include "icluster/parallel.hpp"
#include "icluster/sim.hpp"
#include "icluster/tuning.hpp"

namespace fs = std::filesystem;
using namespace icluster;

namespace {

// Configuration problems are reported like command-line misuse.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string number_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <typename Write>
void write_with(const fs::path& path, Write&& write) {
  std::ostringstream os;
  write(os);
  write_file(path, os.str());
}

AnalysisConfig read_config(const fs::path& path) {
  try {
    return load_config(path);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

std::vector<OmicsBlock> center_all(const std::vector<OmicsBlock>& blocks) {
  std::vector<OmicsBlock> out;
  for (const auto& b : blocks) out.push_back(center_rows(b));
  return out;
}

Manifest base_manifest(const std::string& command, std::uint64_t seed) {
  Manifest m;
  m.command = command;
  m.version = library_version();
  m.seed = seed;
  return m;
}

void write_fit_outputs(const FitResult& result, const std::vector<OmicsBlock>& blocks, const fs::path& out) {
  write_with(out / "model.tsv", [&](std::ostream& os) { write_model(os, result.model, blocks); });
  write_with(out / "labels.tsv",
             [&](std::ostream& os) { write_labels(os, result.labels, blocks.front().sample_ids); });
  write_with(out / "selected.tsv", [&](std::ostream& os) {
    os << "block\tindex\tfeature\n";
    for (std::size_t t = 0; t < blocks.size(); ++t) {
      for (int i : result.selected_features[t]) {
        os << blocks[t].name << "\t" << i + 1 << "\t" << blocks[t].feature_ids[static_cast<std::size_t>(i)] << "\n";
      }
    }
  });
  write_with(out / "trace.tsv", [&](std::ostream& os) {
    os << "iteration\tobjective\n";
    char buf[40];
    for (std::size_t k = 0; k < result.objective_trace.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", result.objective_trace[k]);
      os << k << "\t" << buf << "\n";
    }
  });
  export_plotdata(result, blocks, out / "plotdata");
}

void print_fit_summary(const FitResult& r, const std::vector<OmicsBlock>& blocks) {
  std::printf("K = %d, %s after %d iterations, objective %.6g\n", r.model.K,
              r.converged ? "converged" : "not converged", r.n_iter,
              r.objective_trace.empty() ? 0.0 : r.objective_trace.back());
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    std::printf("  %s: %zu of %d features selected\n", blocks[t].name.c_str(), r.selected_features[t].size(),
                blocks[t].features());
  }
  std::vector<int> sizes(static_cast<std::size_t>(r.labels.K), 0);
  for (int l : r.labels.labels) ++sizes[static_cast<std::size_t>(l - 1)];
  std::printf("  cluster sizes:");
  for (int s : sizes) std::printf(" %d", s);
  std::printf("\n");
}

void add_row_means(Manifest& m, const std::vector<OmicsBlock>& centered) {
  for (const auto& b : centered) m.row_means.emplace_back(b.name, std::vector<double>(b.row_means.begin(), b.row_means.end()));
}

int cmd_fit(const fs::path& config_path, const std::string& out_override) {
  AnalysisConfig cfg = read_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (cfg.any_tuned()) throw UsageError("configuration has parameters set to 'tune'; use the tune command");
  if (cfg.K_values.size() != 1) throw UsageError("fit needs a single K (found a range)");
  const auto penalties = config_penalties(cfg);
  const auto blocks = center_all(load_blocks(cfg));
  for (std::size_t t = 0; t < blocks.size(); ++t) validate_penalty(penalties[t], blocks[t]);
  FitOptions fo = cfg.fit;
  fo.seed = cfg.seed;
  const FitResult result = fit(blocks, cfg.K_values.front(), penalties, fo);
  write_fit_outputs(result, blocks, cfg.output_dir);
  Manifest m = base_manifest("fit", cfg.seed);
  m.config_lines = lines_of(write_config(cfg));
  add_row_means(m, blocks);
  m.entries.emplace_back("converged", result.converged ? "true" : "false");
  m.entries.emplace_back("iterations", std::to_string(result.n_iter));
  write_with(cfg.output_dir / "manifest.tsv", [&](std::ostream& os) { write_manifest(os, m); });
  print_fit_summary(result, blocks);
  std::printf("results written to %s\n", cfg.output_dir.string().c_str());
  return 0;
}

int cmd_tune(const fs::path& config_path, const std::string& out_override, int threads_override) {
  AnalysisConfig cfg = read_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (threads_override > 0) cfg.threads = threads_override;
  const auto blocks = center_all(load_blocks(cfg));
  const SearchDomain domain = config_domain(cfg, blocks);
  TuneOptions to;
  to.n_points = cfg.n_points;
  to.threads = cfg.threads > 0 ? cfg.threads : default_thread_count();
  to.ri.folds = cfg.folds;
  to.ri.fit = cfg.fit;
  to.ri.seed = cfg.seed;
  const TuneResult tuned = tune(blocks, cfg.K_values, domain, to);

  std::vector<std::string> names;
  for (const auto& b : blocks) names.push_back(b.name);
  const auto param_names = tuned_parameter_names(domain, names);
  write_with(cfg.output_dir / "tune.tsv", [&](std::ostream& os) { write_tune_result(os, tuned, param_names); });
  std::printf("%s", format_ri_by_k(tuned).c_str());
  std::printf("selected K = %d, RI = %.3f", tuned.best_K, tuned.best_ri);
  for (std::size_t k = 0; k < param_names.size(); ++k) {
    std::printf(", %s = %.4g", param_names[k].c_str(), tuned.best_params[k]);
  }
  std::printf("\n");

  FitOptions fo = cfg.fit;
  fo.seed = cfg.seed;
  const FitResult result = fit(blocks, tuned.best_K, tuned.best_penalties, fo);
  write_fit_outputs(result, blocks, cfg.output_dir);
  Manifest m = base_manifest("tune", cfg.seed);
  m.config_lines = lines_of(write_config(cfg));
  add_row_means(m, blocks);
  m.entries.emplace_back("best_K", std::to_string(tuned.best_K));
  write_with(cfg.output_dir / "manifest.tsv", [&](std::ostream& os) { write_manifest(os, m); });
  print_fit_summary(result, blocks);
  std::printf("results written to %s\n", cfg.output_dir.string().c_str());
  return 0;
}

int cmd_simulate(int setup, std::uint64_t seed, const fs::path& out, bool profile_demo, const std::string& delim) {
  if (setup != 1 && setup != 2) throw UsageError("--setup must be 1 or 2");
  if (profile_demo && setup != 1) throw UsageError("--profile-demo applies to setup 1 only");
  const char d = delim == "comma" ? ',' : '\t';
  const std::string ext = d == ',' ? ".csv" : ".tsv";
  const SimData data = profile_demo ? simulate_setup1_profile_demo(seed) : simulate_setup(setup, seed);
  for (const auto& b : data.blocks) save_matrix(out / (b.name + ext), b, d);
  write_with(out / "truth_labels.tsv",
             [&](std::ostream& os) { write_labels(os, data.truth.labels, data.blocks.front().sample_ids); });
  write_with(out / "truth_features.tsv", [&](std::ostream& os) {
    os << "block\tindex\tfeature\n";
    for (std::size_t t = 0; t < data.blocks.size(); ++t) {
      for (int i : data.truth.true_features[t]) {
        os << data.blocks[t].name << "\t" << i + 1 << "\t" << data.blocks[t].feature_ids[static_cast<std::size_t>(i)]
           << "\n";
      }
    }
  });
  Manifest m = base_manifest("simulate", seed);
  m.config_lines = {"setup = " + std::to_string(setup), std::string("profile_demo = ") + (profile_demo ? "true" : "false"),
                    "delimiter = " + delim};
  write_with(out / "manifest.tsv", [&](std::ostream& os) { write_manifest(os, m); });
  std::printf("setup %d (seed %llu): %zu blocks written to %s\n", setup, static_cast<unsigned long long>(seed),
              data.blocks.size(), out.string().c_str());
  return 0;
}

int cmd_benchmark(int setup, const std::vector<std::string>& method_names, int reps, const BenchOptions& opts,
                  const fs::path& out) {
  if (setup != 1 && setup != 2) throw UsageError("--setup must be 1 or 2");
  std::vector<Method> methods;
  for (const auto& n : method_names) {
    try {
      methods.push_back(parse_method(n));
    } catch (const PreconditionError& e) {
      throw UsageError(e.what());
    }
  }
  const BenchReport report = run_benchmark(setup, methods, reps, opts);
  const std::string table = format_report(report);
  std::printf("%s", table.c_str());
  if (!out.empty()) {
    write_file(out / "report.txt", table);
    write_with(out / "bench.tsv", [&](std::ostream& os) { write_bench_report(os, report); });
    Manifest m = base_manifest("benchmark", opts.seed);
    std::string ms;
    for (const auto& n : method_names) ms += (ms.empty() ? "" : ",") + n;
    std::string ks;
    for (int K : opts.K_range) ks += (ks.empty() ? "" : ",") + std::to_string(K);
    m.config_lines = {"setup = " + std::to_string(setup), "methods = " + ms, "reps = " + std::to_string(reps),
                      "K = " + ks, "n_points = " + std::to_string(opts.n_points),
                      "folds = " + std::to_string(opts.folds)};
    write_with(out / "manifest.tsv", [&](std::ostream& os) { write_manifest(os, m); });
  }
  return 0;
}

int cmd_ari(const fs::path& a_path, const fs::path& b_path) {
  const SavedLabels a = load_labels(a_path);
  SavedLabels b = load_labels(b_path);
  if (a.sample_ids != b.sample_ids) {
    // Align b to a's sample order.
    if (a.sample_ids.size() != b.sample_ids.size()) throw DataError("label files cover different numbers of samples");
    std::vector<int> aligned;
    for (const auto& id : a.sample_ids) {
      const auto it = std::find(b.sample_ids.begin(), b.sample_ids.end(), id);
      if (it == b.sample_ids.end()) throw DataError("sample '" + id + "' missing from " + b_path.string());
      aligned.push_back(b.partition.labels[static_cast<std::size_t>(it - b.sample_ids.begin())]);
    }
    b.partition.labels = std::move(aligned);
  }
  std::printf("%s\n", number_text(adjusted_rand_index(a.partition, b.partition)).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse integrative clustering of multiple data blocks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", library_version());

  std::string config, out;
  int threads = 0;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the model with fixed penalties from a configuration file");
  fit_cmd->add_option("-c,--config", config, "Configuration file")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("-o,--out", out, "Output directory (overrides the configuration)");

  auto* tune_cmd = app.add_subcommand("tune", "Select K and penalties by reproducibility, then fit");
  tune_cmd->add_option("-c,--config", config, "Configuration file")->required()->check(CLI::ExistingFile);
  tune_cmd->add_option("-o,--out", out, "Output directory (overrides the configuration)");
  tune_cmd->add_option("-t,--threads", threads, "Worker threads (default: ICLUSTER_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  int setup = 1;
  std::uint64_t seed = 0;
  bool profile_demo = false;
  std::string delim = "tab";
  std::string sim_out = "simulated";
  auto* sim_cmd = app.add_subcommand("simulate", "Write a simulated data set");
  sim_cmd->add_option("-s,--setup", setup, "Simulation setup (1 or 2)")->required()->check(CLI::IsMember({1, 2}));
  sim_cmd->add_option("--seed", seed, "Random seed");
  sim_cmd->add_option("-o,--out", sim_out, "Output directory");
  sim_cmd->add_flag("--profile-demo", profile_demo, "Setup 1 variant: amplitude 1.5, second block signal on rows 101-120");
  sim_cmd->add_option("--delimiter", delim, "Matrix delimiter")->check(CLI::IsMember({"tab", "comma"}));

  std::vector<std::string> methods{"lasso", "enet", "fused"};
  int reps = 50;
  BenchOptions bench;
  std::string bench_out;
  std::uint64_t bench_seed = 0;
  int bench_threads = 0;
  auto* bench_cmd = app.add_subcommand("benchmark", "Run methods on simulated replicates and report the summary tables");
  bench_cmd->add_option("-s,--setup", setup, "Simulation setup (1 or 2)")->required()->check(CLI::IsMember({1, 2}));
  bench_cmd->add_option("-m,--methods", methods,
                        "Methods: lasso, enet, fused, kmeans-separate, kmeans-concat, svd-concat")
      ->delimiter(',');
  bench_cmd->add_option("-r,--reps", reps, "Number of replicates")->check(CLI::Range(2, 100000));
  bench_cmd->add_option("--seed", bench_seed, "Seed of the first replicate");
  bench_cmd->add_option("--n-points", bench.n_points, "Lattice points per K (prime >= 5)");
  bench_cmd->add_option("--folds", bench.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  bench_cmd->add_option("-t,--threads", bench_threads, "Worker threads")->check(CLI::PositiveNumber);
  bench_cmd->add_option("-o,--out", bench_out, "Directory for report files");

  std::string labels_a, labels_b;
  auto* ari_cmd = app.add_subcommand("ari", "Adjusted Rand index between two label files");
  ari_cmd->add_option("a", labels_a, "First label file")->required()->check(CLI::ExistingFile);
  ari_cmd->add_option("b", labels_b, "Second label file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit_cmd) return cmd_fit(config, out);
    if (*tune_cmd) return cmd_tune(config, out, threads);
    if (*sim_cmd) return cmd_simulate(setup, seed, sim_out, profile_demo, delim);
    if (*bench_cmd) {
      bench.seed = bench_seed;
      bench.threads = bench_threads > 0 ? bench_threads : default_thread_count();
      return cmd_benchmark(setup, methods, reps, bench, bench_out);
    }
    if (*ari_cmd) return cmd_ari(labels_a, labels_b);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
