#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icluster/bench.hpp"
#include "icluster/cluster.hpp"
#include "icluster/em.hpp"
#include "icluster/model.hpp"
#include "icluster/tuning.hpp"

namespace icluster {

// Matrix files: first row = sample IDs (after a corner cell), first column =
// feature IDs, numeric body features x samples. Tab or comma delimited; the
// delimiter is taken from the header line. LF or CRLF line endings.

OmicsBlock parse_matrix(std::istream& in, const std::string& source);
OmicsBlock load_matrix(const std::filesystem::path& path);
/// Writes the block's values with 17 significant digits.
void write_matrix(std::ostream& out, const OmicsBlock& block, char delimiter = '\t');
void save_matrix(const std::filesystem::path& path, const OmicsBlock& block, char delimiter = '\t');

/// Throws DataError unless every block carries the same sample ID sequence.
void check_sample_ids(std::span<const OmicsBlock> blocks);

// Analysis configuration: `key = value` lines, `#` comments, and one
// `[block]` section per data block. Relative block paths resolve against
// the configuration file's directory.

struct BlockConfig {
  std::filesystem::path path;
  std::string name;
  bool ordered = false;
  PenaltyKind kind = PenaltyKind::lasso;
  /// One entry per penalty parameter; nullopt means "tune".
  std::vector<std::optional<double>> params;
  /// Optional search-range override per parameter.
  std::vector<std::optional<ParamRange>> ranges;
};

struct AnalysisConfig {
  std::vector<BlockConfig> blocks;
  std::vector<int> K_values{2, 3, 4, 5};
  int n_points = 13;
  int folds = 5;
  int threads = 0;  // 0 = default_thread_count()
  FitOptions fit;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "icluster-out";

  bool any_tuned() const;
  /// Throws PreconditionError on inconsistent settings.
  void validate() const;
};

AnalysisConfig parse_config(std::istream& in, const std::string& source,
                            const std::filesystem::path& base_dir = {});
AnalysisConfig load_config(const std::filesystem::path& path);
/// Canonical text form; parse_config(write_config(c)) reproduces c.
std::string write_config(const AnalysisConfig& config);

/// Loads every block, checks sample IDs and penalty/ordering compatibility.
std::vector<OmicsBlock> load_blocks(const AnalysisConfig& config);

/// Search domain for the tuned parameters; ranges not overridden use the
/// default domain computed from the (centered) blocks.
SearchDomain config_domain(const AnalysisConfig& config, std::span<const OmicsBlock> centered_blocks);

/// Penalties when nothing is tuned.
std::vector<PenaltySpec> config_penalties(const AnalysisConfig& config);

// Result files. Each starts with a `schema` line and is read back by the
// matching loader.

struct SavedModel {
  FactorModel model;
  std::vector<std::string> block_names;
  std::vector<std::vector<std::string>> feature_ids;
};

void write_model(std::ostream& out, const FactorModel& model, std::span<const OmicsBlock> blocks);
SavedModel read_model(std::istream& in, const std::string& source);

struct SavedLabels {
  std::vector<std::string> sample_ids;
  Partition partition;
};

void write_labels(std::ostream& out, const Partition& labels, std::span<const std::string> sample_ids);
SavedLabels read_labels(std::istream& in, const std::string& source);
SavedLabels load_labels(const std::filesystem::path& path);

/// Names of the tuned parameters in design order, e.g. "data1.lambda1".
std::vector<std::string> tuned_parameter_names(const SearchDomain& domain, std::span<const std::string> block_names);

void write_tune_result(std::ostream& out, const TuneResult& result, std::span<const std::string> param_names);
/// best_penalties is left empty: penalty kinds live in the configuration.
TuneResult read_tune_result(std::istream& in, const std::string& source);
/// Human-readable reproducibility by K.
std::string format_ri_by_k(const TuneResult& result);

void write_bench_report(std::ostream& out, const BenchReport& report);
/// Restores the replicate records and recomputes the summaries. Benchmark
/// options other than the seed are not stored.
BenchReport read_bench_report(std::istream& in, const std::string& source);

struct Manifest {
  std::string command;
  std::string version;
  std::uint64_t seed = 0;
  std::vector<std::string> config_lines;  // echo of the effective settings
  std::vector<std::pair<std::string, std::vector<double>>> row_means;  // per block
  std::vector<std::pair<std::string, std::string>> entries;            // extra key/value facts
};

void write_manifest(std::ostream& out, const Manifest& manifest);
Manifest read_manifest(std::istream& in, const std::string& source);

/// Coefficient profiles (one file per block) and the latent scatter table.
/// Returns the written paths.
std::vector<std::filesystem::path> export_plotdata(const FitResult& result, std::span<const OmicsBlock> blocks,
                                                   const std::filesystem::path& out_dir);

/// Writes text to a file, creating parent directories; throws IoError.
void write_file(const std::filesystem::path& path, const std::string& text);

std::string library_version();

}  // namespace icluster
