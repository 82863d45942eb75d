#include "icluster/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "icluster/core.hpp"
#include "icluster/errors.hpp"
#include "icluster/tuning.hpp"

#ifndef ICLUSTER_VERSION
#define ICLUSTER_VERSION "0.0.0"
#endif

namespace icluster {

namespace fs = std::filesystem;

namespace {

constexpr const char* kModelSchema = "icluster-model/1";
constexpr const char* kLabelsSchema = "icluster-labels/1";
constexpr const char* kTuneSchema = "icluster-tune/1";
constexpr const char* kBenchSchema = "icluster-bench/1";
constexpr const char* kManifestSchema = "icluster-manifest/1";

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

bool getline_lf(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::optional<double> to_double(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<long long> to_integer(const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Line-oriented reader for the tab-separated result files.
class TableReader {
 public:
  TableReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (getline_lf(in_, line)) {
      ++line_no_;
      if (trim(line).empty()) continue;
      fields = split(line, '\t');
      return true;
    }
    return false;
  }

  std::vector<std::string> expect(const std::string& key, std::size_t min_fields = 2) {
    std::vector<std::string> f;
    if (!next(f)) fail("unexpected end of file, expected '" + key + "'");
    if (f[0] != key) fail("expected '" + key + "', found '" + f[0] + "'");
    if (f.size() < min_fields) fail("'" + key + "' needs " + std::to_string(min_fields - 1) + " value(s)");
    return f;
  }

  void schema(const char* expected) {
    const auto f = expect("schema");
    if (f[1] != expected) fail("unsupported schema '" + f[1] + "', expected '" + expected + "'");
  }

  double number(const std::string& text, int column = 0) {
    const auto v = to_double(text);
    if (!v) fail("'" + text + "' is not a finite number", column);
    return *v;
  }

  long long integer(const std::string& text, int column = 0) {
    const auto v = to_integer(text);
    if (!v) fail("'" + text + "' is not an integer", column);
    return *v;
  }

  [[noreturn]] void fail(const std::string& what, int column = 0) const {
    std::string where = source_ + ": line " + std::to_string(line_no_);
    if (column > 0) where += ", column " + std::to_string(column);
    throw ParseError(where + ": " + what, line_no_, column);
  }

  int line() const { return line_no_; }

 private:
  std::istream& in_;
  std::string source_;
  int line_no_ = 0;
};

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "yes" || v == "1") {
    out = true;
    return true;
  }
  if (v == "false" || v == "no" || v == "0") {
    out = false;
    return true;
  }
  return false;
}

std::string tuned_or_value(const std::optional<double>& v) { return v ? fmt(*v) : "tune"; }

std::string range_text(const ParamRange& r) {
  return fmt(r.lo) + " " + fmt(r.hi) + (r.scale == Scale::log ? " log" : " linear");
}

std::vector<std::string> param_keys(PenaltyKind kind) {
  if (kind == PenaltyKind::lasso) return {"lambda"};
  return {"lambda1", "lambda2"};
}

}  // namespace

// ---------------------------------------------------------------- matrices

OmicsBlock parse_matrix(std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what, int column = 0) {
    std::string where = source + ": line " + std::to_string(line_no);
    if (column > 0) where += ", column " + std::to_string(column);
    throw ParseError(where + ": " + what, line_no, column);
  };

  bool have_header = false;
  while (!have_header && getline_lf(in, line)) {
    ++line_no;
    have_header = !trim(line).empty();
  }
  if (!have_header) fail("empty matrix file");
  char delim = 0;
  if (line.find('\t') != std::string::npos) {
    delim = '\t';
  } else if (line.find(',') != std::string::npos) {
    delim = ',';
  } else {
    fail("header must list sample IDs separated by tabs or commas");
  }

  OmicsBlock block;
  block.name = fs::path(source).stem().string();
  const auto header = split(line, delim);
  std::set<std::string> seen_samples;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string id = trim(header[c]);
    if (id.empty()) fail("empty sample ID", static_cast<int>(c + 1));
    if (!seen_samples.insert(id).second) fail("duplicate sample ID '" + id + "'", static_cast<int>(c + 1));
    block.sample_ids.push_back(id);
  }
  const std::size_t n = block.sample_ids.size();
  if (n == 0) fail("no sample columns");

  std::vector<double> values;
  std::set<std::string> seen_features;
  int data_row = 0;
  while (getline_lf(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++data_row;
    const auto fields = split(line, delim);
    if (fields.size() != n + 1) {
      fail("data row " + std::to_string(data_row) + " has " + std::to_string(fields.size()) +
           " fields, expected " + std::to_string(n + 1));
    }
    const std::string id = trim(fields[0]);
    if (id.empty()) fail("empty feature ID", 1);
    if (!seen_features.insert(id).second) fail("duplicate feature ID '" + id + "'", 1);
    block.feature_ids.push_back(id);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const auto v = to_double(fields[c]);
      if (!v) {
        fail("data row " + std::to_string(data_row) + ": '" + trim(fields[c]) + "' is not a finite number",
             static_cast<int>(c + 1));
      }
      values.push_back(*v);
    }
  }
  if (block.feature_ids.empty()) fail("no feature rows");
  block.values = Eigen::Map<const RowMatrix>(values.data(), static_cast<Eigen::Index>(block.feature_ids.size()),
                                             static_cast<Eigen::Index>(n));
  return block;
}

OmicsBlock load_matrix(const fs::path& path) {
  auto in = open_input(path);
  return parse_matrix(in, path.string());
}

void write_matrix(std::ostream& out, const OmicsBlock& block, char delimiter) {
  if (static_cast<int>(block.feature_ids.size()) != block.features() ||
      static_cast<int>(block.sample_ids.size()) != block.samples()) {
    throw PreconditionError("block '" + block.name + "' needs one ID per feature and per sample");
  }
  out << "feature";
  for (const auto& s : block.sample_ids) out << delimiter << s;
  out << '\n';
  for (Eigen::Index i = 0; i < block.values.rows(); ++i) {
    out << block.feature_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < block.values.cols(); ++j) out << delimiter << fmt(block.values(i, j));
    out << '\n';
  }
}

void save_matrix(const fs::path& path, const OmicsBlock& block, char delimiter) {
  std::ostringstream os;
  write_matrix(os, block, delimiter);
  write_file(path, os.str());
}

void check_sample_ids(std::span<const OmicsBlock> blocks) {
  for (std::size_t t = 1; t < blocks.size(); ++t) {
    const auto& a = blocks.front().sample_ids;
    const auto& b = blocks[t].sample_ids;
    if (a.size() != b.size()) {
      throw DataError("block '" + blocks[t].name + "' has " + std::to_string(b.size()) + " samples, block '" +
                      blocks.front().name + "' has " + std::to_string(a.size()));
    }
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (a[j] != b[j]) {
        throw DataError("sample ID mismatch at column " + std::to_string(j + 1) + ": '" + a[j] + "' in block '" +
                        blocks.front().name + "' but '" + b[j] + "' in block '" + blocks[t].name + "'");
      }
    }
  }
}

// ------------------------------------------------------------------ config

bool AnalysisConfig::any_tuned() const {
  for (const auto& b : blocks) {
    for (const auto& p : b.params) {
      if (!p) return true;
    }
  }
  return false;
}

void AnalysisConfig::validate() const {
  if (blocks.empty()) throw PreconditionError("configuration lists no [block] section");
  std::set<std::string> names;
  for (const auto& b : blocks) {
    if (b.path.empty()) throw PreconditionError("block '" + b.name + "' has no path");
    if (!names.insert(b.name).second) throw PreconditionError("duplicate block name '" + b.name + "'");
    if (b.kind == PenaltyKind::fused_lasso && !b.ordered) {
      throw PreconditionError("block '" + b.name + "': fused penalty requires ordered = true");
    }
    if (static_cast<int>(b.params.size()) != parameter_count(b.kind) || b.ranges.size() != b.params.size()) {
      throw PreconditionError("block '" + b.name + "': wrong number of penalty parameters");
    }
    for (const auto& p : b.params) {
      if (p && !(*p >= 0.0)) throw PreconditionError("block '" + b.name + "': penalty parameters must be >= 0");
    }
  }
  if (K_values.empty()) throw PreconditionError("K is empty");
  for (int K : K_values) {
    if (K < 2) throw PreconditionError("every K must be at least 2");
  }
  if (folds < 2) throw PreconditionError("folds must be at least 2");
  if (any_tuned() && (n_points < 5 || !is_prime(n_points))) {
    throw PreconditionError("n_points must be a prime >= 5, got " + std::to_string(n_points));
  }
  if (threads < 0) throw PreconditionError("threads must be >= 0");
  fit.validate();
}

AnalysisConfig parse_config(std::istream& in, const std::string& source, const fs::path& base_dir) {
  AnalysisConfig cfg;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(source + ": line " + std::to_string(line_no) + ": " + what, line_no);
  };

  struct RawBlock {
    std::map<std::string, std::pair<std::string, int>> kv;  // key -> (value, line)
    int line = 0;
  };
  std::vector<RawBlock> raw;
  bool in_block = false;

  while (getline_lf(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text != "[block]") fail("unknown section '" + text + "'");
      raw.push_back({{}, line_no});
      in_block = true;
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) fail("missing key");
    if (in_block) {
      if (!raw.back().kv.emplace(key, std::make_pair(value, line_no)).second) fail("duplicate key '" + key + "'");
      continue;
    }
    auto integer = [&](long long lo) {
      const auto v = to_integer(value);
      if (!v || *v < lo) fail("'" + key + "' needs an integer >= " + std::to_string(lo));
      return *v;
    };
    auto positive = [&] {
      const auto v = to_double(value);
      if (!v || *v <= 0.0) fail("'" + key + "' needs a positive number");
      return *v;
    };
    if (key == "seed") {
      const auto v = to_integer(value);
      if (!v || *v < 0) fail("'seed' needs a nonnegative integer");
      cfg.seed = static_cast<std::uint64_t>(*v);
    } else if (key == "K") {
      cfg.K_values.clear();
      const auto dash = value.find('-');
      if (dash != std::string::npos) {
        const auto lo = to_integer(value.substr(0, dash));
        const auto hi = to_integer(value.substr(dash + 1));
        if (!lo || !hi || *lo > *hi) fail("K range must look like '2-5'");
        for (long long k = *lo; k <= *hi; ++k) cfg.K_values.push_back(static_cast<int>(k));
      } else {
        for (const auto& part : split(value, ',')) {
          const auto k = to_integer(part);
          if (!k) fail("K must be an integer, a range 'a-b' or a comma list");
          cfg.K_values.push_back(static_cast<int>(*k));
        }
      }
    } else if (key == "n_points") {
      cfg.n_points = static_cast<int>(integer(5));
    } else if (key == "folds") {
      cfg.folds = static_cast<int>(integer(2));
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(integer(0));
    } else if (key == "max_iter") {
      cfg.fit.max_iter = static_cast<int>(integer(1));
    } else if (key == "tol") {
      cfg.fit.tol = positive();
    } else if (key == "lqa_floor") {
      cfg.fit.lqa_floor = positive();
    } else if (key == "zero_threshold") {
      cfg.fit.zero_threshold = positive();
    } else if (key == "kmeans_restarts") {
      cfg.fit.kmeans_restarts = static_cast<int>(integer(1));
    } else if (key == "noise") {
      if (value == "diagonal") {
        cfg.fit.noise = NoiseModel::diagonal;
      } else if (value == "isotropic") {
        cfg.fit.noise = NoiseModel::isotropic;
      } else {
        fail("noise must be 'diagonal' or 'isotropic'");
      }
    } else if (key == "output") {
      cfg.output_dir = value;
    } else {
      fail("unknown setting '" + key + "'");
    }
  }

  for (auto& rb : raw) {
    BlockConfig b;
    auto take = [&](const std::string& key) -> std::optional<std::pair<std::string, int>> {
      auto it = rb.kv.find(key);
      if (it == rb.kv.end()) return std::nullopt;
      auto v = it->second;
      rb.kv.erase(it);
      return v;
    };
    auto block_fail = [&](int at, const std::string& what) {
      line_no = at;
      fail(what);
    };
    if (auto v = take("penalty")) {
      try {
        b.kind = parse_penalty_kind(v->first);
      } catch (const PreconditionError& e) {
        block_fail(v->second, e.what());
      }
    }
    if (auto v = take("path")) {
      b.path = v->first;
      if (b.path.is_relative() && !base_dir.empty()) b.path = base_dir / b.path;
    } else {
      block_fail(rb.line, "[block] needs a 'path'");
    }
    if (auto v = take("name")) {
      b.name = v->first;
    } else {
      b.name = fs::path(b.path).stem().string();
    }
    if (auto v = take("ordered")) {
      if (!parse_bool(v->first, b.ordered)) block_fail(v->second, "'ordered' must be true or false");
    }
    const auto keys = param_keys(b.kind);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      auto v = take(keys[k]);
      if (!v && b.kind == PenaltyKind::lasso) v = take("lambda1");
      if (!v || v->first == "tune") {
        b.params.emplace_back(std::nullopt);
      } else {
        const auto x = to_double(v->first);
        if (!x || *x < 0.0) block_fail(v->second, "'" + keys[k] + "' must be 'tune' or a number >= 0");
        b.params.emplace_back(*x);
      }
      auto r = take(keys[k] + "_range");
      if (!r) {
        b.ranges.emplace_back(std::nullopt);
        continue;
      }
      std::istringstream rs(r->first);
      std::string lo, hi, scale = "log";
      rs >> lo >> hi;
      if (!(rs >> scale)) scale = "log";
      const auto l = to_double(lo);
      const auto h = to_double(hi);
      if (!l || !h || (scale != "log" && scale != "linear")) {
        block_fail(r->second, "'" + keys[k] + "_range' must be 'lo hi [log|linear]'");
      }
      if (!(*l >= 0.0 && *l < *h) || (scale == "log" && *l <= 0.0)) {
        block_fail(r->second, "'" + keys[k] + "_range' needs 0 <= lo < hi (lo > 0 on a log scale)");
      }
      b.ranges.emplace_back(ParamRange{*l, *h, scale == "log" ? Scale::log : Scale::linear});
    }
    if (!rb.kv.empty()) {
      const auto& [key, v] = *rb.kv.begin();
      block_fail(v.second, "unknown or inapplicable block setting '" + key + "' for penalty " + to_string(b.kind));
    }
    cfg.blocks.push_back(std::move(b));
  }
  try {
    cfg.validate();
  } catch (const PreconditionError& e) {
    throw ParseError(source + ": " + e.what(), 0);
  }
  return cfg;
}

AnalysisConfig load_config(const fs::path& path) {
  auto in = open_input(path);
  return parse_config(in, path.string(), path.parent_path());
}

std::string write_config(const AnalysisConfig& c) {
  std::ostringstream os;
  os << "seed = " << c.seed << "\n";
  os << "K = ";
  for (std::size_t i = 0; i < c.K_values.size(); ++i) os << (i ? "," : "") << c.K_values[i];
  os << "\n";
  os << "n_points = " << c.n_points << "\n";
  os << "folds = " << c.folds << "\n";
  os << "threads = " << c.threads << "\n";
  os << "max_iter = " << c.fit.max_iter << "\n";
  os << "tol = " << fmt(c.fit.tol) << "\n";
  os << "lqa_floor = " << fmt(c.fit.lqa_floor) << "\n";
  os << "zero_threshold = " << fmt(c.fit.zero_threshold) << "\n";
  os << "kmeans_restarts = " << c.fit.kmeans_restarts << "\n";
  os << "noise = " << (c.fit.noise == NoiseModel::diagonal ? "diagonal" : "isotropic") << "\n";
  os << "output = " << c.output_dir.string() << "\n";
  for (const auto& b : c.blocks) {
    os << "\n[block]\n";
    os << "path = " << b.path.string() << "\n";
    os << "name = " << b.name << "\n";
    os << "ordered = " << (b.ordered ? "true" : "false") << "\n";
    os << "penalty = " << to_string(b.kind) << "\n";
    const auto keys = param_keys(b.kind);
    for (std::size_t k = 0; k < keys.size() && k < b.params.size(); ++k) {
      os << keys[k] << " = " << tuned_or_value(b.params[k]) << "\n";
      if (k < b.ranges.size() && b.ranges[k]) os << keys[k] << "_range = " << range_text(*b.ranges[k]) << "\n";
    }
  }
  return os.str();
}

std::vector<OmicsBlock> load_blocks(const AnalysisConfig& config) {
  config.validate();
  std::vector<OmicsBlock> blocks;
  for (const auto& bc : config.blocks) {
    OmicsBlock b = load_matrix(bc.path);
    b.name = bc.name;
    b.ordered = bc.ordered;
    blocks.push_back(std::move(b));
  }
  check_sample_ids(blocks);
  validate_blocks(blocks);
  return blocks;
}

SearchDomain config_domain(const AnalysisConfig& config, std::span<const OmicsBlock> centered_blocks) {
  std::vector<PenaltyKind> kinds;
  for (const auto& b : config.blocks) kinds.push_back(b.kind);
  SearchDomain domain = default_search_domain(centered_blocks, kinds, config.K_values);
  for (std::size_t t = 0; t < config.blocks.size(); ++t) {
    const auto& bc = config.blocks[t];
    for (std::size_t k = 0; k < bc.params.size(); ++k) {
      auto& slot = domain.blocks[t].params[k];
      if (bc.params[k]) {
        slot.tuned = false;
        slot.value = *bc.params[k];
      } else if (bc.ranges[k]) {
        slot.range = *bc.ranges[k];
      }
    }
  }
  domain.validate();
  return domain;
}

std::vector<PenaltySpec> config_penalties(const AnalysisConfig& config) {
  std::vector<PenaltySpec> out;
  for (const auto& b : config.blocks) {
    std::vector<double> params;
    for (const auto& p : b.params) {
      if (!p) throw PreconditionError("block '" + b.name + "' has tuned penalty parameters; run 'tune' first");
      params.push_back(*p);
    }
    out.push_back(make_penalty(b.kind, params));
  }
  return out;
}

// ----------------------------------------------------------------- results

void write_model(std::ostream& out, const FactorModel& model, std::span<const OmicsBlock> blocks) {
  model.validate();
  if (blocks.size() != model.W.size()) throw PreconditionError("model and blocks disagree on the block count");
  out << "schema\t" << kModelSchema << "\n";
  out << "K\t" << model.K << "\n";
  out << "blocks\t" << model.W.size() << "\n";
  for (std::size_t t = 0; t < model.W.size(); ++t) {
    const auto& W = model.W[t];
    out << "block\t" << blocks[t].name << "\t" << W.rows() << "\n";
    out << "feature\tpsi";
    for (Eigen::Index k = 0; k < W.cols(); ++k) out << "\tw" << k + 1;
    out << "\n";
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      const std::string id = static_cast<std::size_t>(i) < blocks[t].feature_ids.size()
                                 ? blocks[t].feature_ids[static_cast<std::size_t>(i)]
                                 : "f" + std::to_string(i + 1);
      out << id << "\t" << fmt(model.psi[t](i));
      for (Eigen::Index k = 0; k < W.cols(); ++k) out << "\t" << fmt(W(i, k));
      out << "\n";
    }
  }
}

SavedModel read_model(std::istream& in, const std::string& source) {
  TableReader r(in, source);
  r.schema(kModelSchema);
  SavedModel saved;
  saved.model.K = static_cast<int>(r.integer(r.expect("K")[1], 2));
  if (saved.model.K < 2) r.fail("K must be at least 2");
  const auto n_blocks = r.integer(r.expect("blocks")[1], 2);
  const int q = saved.model.K - 1;
  for (long long t = 0; t < n_blocks; ++t) {
    const auto head = r.expect("block", 3);
    const auto p = r.integer(head[2], 3);
    if (p < 1) r.fail("block needs at least one feature");
    saved.block_names.push_back(head[1]);
    r.expect("feature", static_cast<std::size_t>(q + 2));
    Matrix W(p, q);
    Vector psi(p);
    std::vector<std::string> ids;
    std::vector<std::string> f;
    for (long long i = 0; i < p; ++i) {
      if (!r.next(f)) r.fail("unexpected end of file inside block '" + head[1] + "'");
      if (f.size() != static_cast<std::size_t>(q + 2)) r.fail("expected " + std::to_string(q + 2) + " fields");
      ids.push_back(f[0]);
      psi(i) = r.number(f[1], 2);
      for (int k = 0; k < q; ++k) W(i, k) = r.number(f[static_cast<std::size_t>(k + 2)], k + 3);
    }
    saved.model.W.push_back(std::move(W));
    saved.model.psi.push_back(std::move(psi));
    saved.feature_ids.push_back(std::move(ids));
  }
  try {
    saved.model.validate();
  } catch (const PreconditionError& e) {
    r.fail(e.what());
  }
  return saved;
}

void write_labels(std::ostream& out, const Partition& labels, std::span<const std::string> sample_ids) {
  labels.validate();
  if (sample_ids.size() != labels.labels.size()) throw PreconditionError("one sample ID per label is required");
  out << "schema\t" << kLabelsSchema << "\n";
  out << "K\t" << labels.K << "\n";
  out << "sample\tcluster\n";
  for (std::size_t j = 0; j < sample_ids.size(); ++j) out << sample_ids[j] << "\t" << labels.labels[j] << "\n";
}

SavedLabels read_labels(std::istream& in, const std::string& source) {
  TableReader r(in, source);
  r.schema(kLabelsSchema);
  SavedLabels saved;
  saved.partition.K = static_cast<int>(r.integer(r.expect("K")[1], 2));
  r.expect("sample", 2);
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 2) r.fail("expected 'sample<TAB>cluster'");
    const auto label = r.integer(f[1], 2);
    if (label < 1 || label > saved.partition.K) r.fail("label outside 1.." + std::to_string(saved.partition.K), 2);
    saved.sample_ids.push_back(f[0]);
    saved.partition.labels.push_back(static_cast<int>(label));
  }
  if (saved.sample_ids.empty()) r.fail("no labels");
  return saved;
}

SavedLabels load_labels(const fs::path& path) {
  auto in = open_input(path);
  return read_labels(in, path.string());
}

std::vector<std::string> tuned_parameter_names(const SearchDomain& domain, std::span<const std::string> block_names) {
  std::vector<std::string> out;
  for (std::size_t t = 0; t < domain.blocks.size(); ++t) {
    const auto keys = param_keys(domain.blocks[t].kind);
    const std::string prefix = t < block_names.size() ? block_names[t] : "block" + std::to_string(t + 1);
    for (std::size_t k = 0; k < domain.blocks[t].params.size(); ++k) {
      if (domain.blocks[t].params[k].tuned) out.push_back(prefix + "." + keys[k]);
    }
  }
  return out;
}

void write_tune_result(std::ostream& out, const TuneResult& result, std::span<const std::string> param_names) {
  out << "schema\t" << kTuneSchema << "\n";
  out << "params";
  for (const auto& n : param_names) out << "\t" << n;
  out << "\n";
  out << "best_K\t" << result.best_K << "\n";
  out << "best_ri\t" << fmt(result.best_ri) << "\n";
  out << "best_params";
  for (double v : result.best_params) out << "\t" << fmt(v);
  out << "\n";
  out << "K\tri\tstability\tmean_selected";
  for (const auto& n : param_names) out << "\t" << n;
  out << "\n";
  for (const auto& pt : result.evaluated) {
    out << pt.K << "\t" << fmt(pt.ri) << "\t" << fmt(pt.stability) << "\t" << fmt(pt.mean_selected);
    for (double v : pt.params) out << "\t" << fmt(v);
    out << "\n";
  }
}

TuneResult read_tune_result(std::istream& in, const std::string& source) {
  TableReader r(in, source);
  r.schema(kTuneSchema);
  const auto names = r.expect("params", 1);
  const std::size_t d = names.size() - 1;
  TuneResult result;
  result.best_K = static_cast<int>(r.integer(r.expect("best_K")[1], 2));
  result.best_ri = r.number(r.expect("best_ri")[1], 2);
  const auto bp = r.expect("best_params", 1);
  if (bp.size() != d + 1) r.fail("best_params needs " + std::to_string(d) + " values");
  for (std::size_t k = 1; k < bp.size(); ++k) result.best_params.push_back(r.number(bp[k], static_cast<int>(k + 1)));
  r.expect("K", 4);
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != d + 4) r.fail("expected " + std::to_string(d + 4) + " fields");
    TunePoint pt;
    pt.K = static_cast<int>(r.integer(f[0], 1));
    pt.ri = r.number(f[1], 2);
    pt.stability = r.number(f[2], 3);
    pt.mean_selected = r.number(f[3], 4);
    for (std::size_t k = 0; k < d; ++k) pt.params.push_back(r.number(f[k + 4], static_cast<int>(k + 5)));
    result.evaluated.push_back(std::move(pt));
  }
  for (const auto& pt : result.evaluated) {
    auto it = std::find_if(result.ri_by_K.begin(), result.ri_by_K.end(), [&](const auto& e) { return e.first == pt.K; });
    if (it == result.ri_by_K.end()) {
      result.ri_by_K.emplace_back(pt.K, pt.ri);
    } else {
      it->second = std::max(it->second, pt.ri);
    }
  }
  std::sort(result.ri_by_K.begin(), result.ri_by_K.end());
  return result;
}

std::string format_ri_by_k(const TuneResult& result) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%4s %8s\n", "K", "RI");
  os << line;
  for (const auto& [K, ri] : result.ri_by_K) {
    std::snprintf(line, sizeof line, "%4d %8.3f%s\n", K, ri, K == result.best_K ? "  *" : "");
    os << line;
  }
  return os.str();
}

void write_bench_report(std::ostream& out, const BenchReport& report) {
  out << "schema\t" << kBenchSchema << "\n";
  out << "setup\t" << report.setup << "\n";
  out << "replicates\t" << report.replicates << "\n";
  out << "true_K\t" << report.true_K << "\n";
  out << "seed\t" << report.options.seed << "\n";
  for (const auto& row : report.rows) {
    out << "row\t" << to_string(row.method) << "\t" << row.block << "\t" << fmt(row.percent_correct_K) << "\t"
        << fmt(row.error_rate.mean) << "\t" << fmt(row.error_rate.sd) << "\t" << fmt(row.ri.mean) << "\t"
        << fmt(row.ri.sd) << "\t" << row.failures;
    for (std::size_t t = 0; t < row.true_positives.size(); ++t) {
      out << "\t" << fmt(row.true_positives[t].mean) << "\t" << fmt(row.true_positives[t].sd) << "\t"
          << fmt(row.false_positives[t].mean) << "\t" << fmt(row.false_positives[t].sd);
    }
    out << "\n";
  }
  for (const auto& row : report.rows) {
    for (const auto& rec : row.replicates) {
      out << "replicate\t" << to_string(row.method) << "\t" << row.block << "\t" << rec.replicate << "\t"
          << (rec.failed ? 1 : 0) << "\t" << rec.chosen_K << "\t" << fmt(rec.error_rate) << "\t" << fmt(rec.ri)
          << "\t" << rec.true_positives.size();
      for (std::size_t t = 0; t < rec.true_positives.size(); ++t) {
        out << "\t" << rec.true_positives[t] << "\t" << rec.false_positives[t];
      }
      out << "\t" << rec.params.size();
      for (double v : rec.params) out << "\t" << fmt(v);
      std::string msg = rec.error;
      std::replace(msg.begin(), msg.end(), '\t', ' ');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << "\t" << msg << "\n";
    }
  }
}

BenchReport read_bench_report(std::istream& in, const std::string& source) {
  TableReader r(in, source);
  r.schema(kBenchSchema);
  BenchReport report;
  report.setup = static_cast<int>(r.integer(r.expect("setup")[1], 2));
  report.replicates = static_cast<int>(r.integer(r.expect("replicates")[1], 2));
  report.true_K = static_cast<int>(r.integer(r.expect("true_K")[1], 2));
  report.options.seed = static_cast<std::uint64_t>(r.integer(r.expect("seed")[1], 2));
  std::vector<std::string> f;
  auto row_for = [&](Method m, int block) -> BenchRow& {
    for (auto& row : report.rows) {
      if (row.method == m && row.block == block) return row;
    }
    BenchRow row;
    row.method = m;
    row.block = block;
    report.rows.push_back(std::move(row));
    return report.rows.back();
  };
  while (r.next(f)) {
    if (f.size() < 3) r.fail("truncated record");
    Method m{};
    try {
      m = parse_method(f[1]);
    } catch (const PreconditionError& e) {
      r.fail(e.what(), 2);
    }
    const int block = static_cast<int>(r.integer(f[2], 3));
    if (f[0] == "row") {
      row_for(m, block);
      continue;
    }
    if (f[0] != "replicate") r.fail("unknown record '" + f[0] + "'", 1);
    if (f.size() < 10) r.fail("truncated replicate record");
    ReplicateRecord rec;
    rec.replicate = static_cast<int>(r.integer(f[3], 4));
    rec.failed = r.integer(f[4], 5) != 0;
    rec.chosen_K = static_cast<int>(r.integer(f[5], 6));
    rec.error_rate = r.number(f[6], 7);
    rec.ri = r.number(f[7], 8);
    std::size_t at = 8;
    const auto nb = static_cast<std::size_t>(r.integer(f[at], static_cast<int>(at + 1)));
    ++at;
    if (f.size() < at + 2 * nb + 2) r.fail("truncated replicate record");
    for (std::size_t t = 0; t < nb; ++t) {
      rec.true_positives.push_back(static_cast<int>(r.integer(f[at], static_cast<int>(at + 1))));
      rec.false_positives.push_back(static_cast<int>(r.integer(f[at + 1], static_cast<int>(at + 2))));
      at += 2;
    }
    const auto np = static_cast<std::size_t>(r.integer(f[at], static_cast<int>(at + 1)));
    ++at;
    if (f.size() < at + np + 1) r.fail("truncated replicate record");
    for (std::size_t k = 0; k < np; ++k, ++at) rec.params.push_back(r.number(f[at], static_cast<int>(at + 1)));
    rec.error = f[at];
    row_for(m, block).replicates.push_back(std::move(rec));
  }
  summarize_report(report);
  return report;
}

void write_manifest(std::ostream& out, const Manifest& m) {
  out << "schema\t" << kManifestSchema << "\n";
  out << "command\t" << m.command << "\n";
  out << "version\t" << m.version << "\n";
  out << "seed\t" << m.seed << "\n";
  for (const auto& line : m.config_lines) out << "config\t" << line << "\n";
  for (const auto& [name, means] : m.row_means) {
    out << "row_means\t" << name;
    for (double v : means) out << "\t" << fmt(v);
    out << "\n";
  }
  for (const auto& [k, v] : m.entries) out << "entry\t" << k << "\t" << v << "\n";
}

Manifest read_manifest(std::istream& in, const std::string& source) {
  TableReader r(in, source);
  r.schema(kManifestSchema);
  Manifest m;
  m.command = r.expect("command")[1];
  m.version = r.expect("version")[1];
  m.seed = static_cast<std::uint64_t>(r.integer(r.expect("seed")[1], 2));
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f[0] == "config") {
      std::string line;
      for (std::size_t k = 1; k < f.size(); ++k) line += (k > 1 ? "\t" : "") + f[k];
      m.config_lines.push_back(line);
    } else if (f[0] == "row_means") {
      if (f.size() < 2) r.fail("row_means needs a block name");
      std::vector<double> means;
      for (std::size_t k = 2; k < f.size(); ++k) means.push_back(r.number(f[k], static_cast<int>(k + 1)));
      m.row_means.emplace_back(f[1], std::move(means));
    } else if (f[0] == "entry") {
      if (f.size() != 3) r.fail("entry needs a key and a value");
      m.entries.emplace_back(f[1], f[2]);
    } else {
      r.fail("unknown record '" + f[0] + "'", 1);
    }
  }
  return m;
}

std::vector<fs::path> export_plotdata(const FitResult& result, std::span<const OmicsBlock> blocks,
                                      const fs::path& out_dir) {
  const auto& model = result.model;
  if (blocks.size() != model.W.size()) throw PreconditionError("model and blocks disagree on the block count");
  std::vector<fs::path> written;
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    std::ostringstream os;
    const Matrix& W = model.W[t];
    os << "index\tfeature";
    for (Eigen::Index k = 0; k < W.cols(); ++k) os << "\tw" << k + 1;
    os << "\n";
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      os << i + 1 << "\t"
         << (static_cast<std::size_t>(i) < blocks[t].feature_ids.size() ? blocks[t].feature_ids[static_cast<std::size_t>(i)]
                                                                         : "f" + std::to_string(i + 1));
      for (Eigen::Index k = 0; k < W.cols(); ++k) os << "\t" << fmt(W(i, k));
      os << "\n";
    }
    const fs::path path = out_dir / ("coefficients_" + blocks[t].name + ".tsv");
    write_file(path, os.str());
    written.push_back(path);
  }
  std::ostringstream os;
  const Matrix& EZ = result.stats.EZ;
  os << "sample";
  for (Eigen::Index k = 0; k < EZ.rows(); ++k) os << "\tz" << k + 1;
  os << "\tcluster\n";
  for (Eigen::Index j = 0; j < EZ.cols(); ++j) {
    const auto& ids = blocks.front().sample_ids;
    os << (static_cast<std::size_t>(j) < ids.size() ? ids[static_cast<std::size_t>(j)] : "s" + std::to_string(j + 1));
    for (Eigen::Index k = 0; k < EZ.rows(); ++k) os << "\t" << fmt(EZ(k, j));
    os << "\t" << result.labels.labels[static_cast<std::size_t>(j)] << "\n";
  }
  const fs::path path = out_dir / "latent.tsv";
  write_file(path, os.str());
  written.push_back(path);
  return written;
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string library_version() { return ICLUSTER_VERSION; }

}  // namespace icluster
