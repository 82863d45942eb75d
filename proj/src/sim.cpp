#include "icluster/sim.hpp"

#include <random>

#include "icluster/errors.hpp"
#include "icluster/random.hpp"

namespace icluster {

namespace {

OmicsBlock named_block(const std::string& name, int p, int n) {
  OmicsBlock b;
  b.name = name;
  b.values = RowMatrix::Zero(p, n);
  b.ordered = true;
  for (int i = 0; i < p; ++i) b.feature_ids.push_back("f" + std::to_string(i + 1));
  for (int j = 0; j < n; ++j) b.sample_ids.push_back("s" + std::to_string(j + 1));
  return b;
}

std::vector<int> range(int first, int count) {
  std::vector<int> out;
  for (int i = 0; i < count; ++i) out.push_back(first + i);
  return out;
}

}  // namespace

SimData simulate_setup1(std::uint64_t seed, const Setup1Options& opts) {
  if (opts.n < 2 || opts.p < opts.signal_rows || opts.signal_rows < 0 ||
      opts.second_block_offset < 0 || opts.second_block_offset + opts.signal_rows > opts.p) {
    throw PreconditionError("simulate_setup1: inconsistent dimensions");
  }
  Rng rng(derive_seed(seed, {1}));
  std::normal_distribution<double> normal(0.0, 1.0);

  Vector z(opts.n);
  for (int j = 0; j < opts.n; ++j) z(j) = normal(rng);

  SimData data;
  const int offsets[2] = {0, opts.second_block_offset};
  for (int t = 0; t < 2; ++t) {
    OmicsBlock b = named_block("data" + std::to_string(t + 1), opts.p, opts.n);
    for (int i = 0; i < opts.p; ++i) {
      const bool signal = i >= offsets[t] && i < offsets[t] + opts.signal_rows;
      const double w = signal ? opts.amplitude : 0.0;
      for (int j = 0; j < opts.n; ++j) b.values(i, j) = w * z(j) + normal(rng);
    }
    data.blocks.push_back(std::move(b));
    data.truth.true_features.push_back(range(offsets[t], opts.signal_rows));
  }
  data.truth.labels.K = 2;
  for (int j = 0; j < opts.n; ++j) data.truth.labels.labels.push_back(z(j) > 0.0 ? 1 : 2);
  return data;
}

SimData simulate_setup1_profile_demo(std::uint64_t seed) {
  Setup1Options opts;
  opts.amplitude = 1.5;
  opts.second_block_offset = 100;
  return simulate_setup1(seed, opts);
}

SimData simulate_setup2(std::uint64_t seed) {
  constexpr int n = 150;
  constexpr int p = 500;
  Rng rng(derive_seed(seed, {2}));
  std::normal_distribution<double> normal(0.0, 1.0);

  OmicsBlock x1 = named_block("data1", p, n);
  OmicsBlock x2 = named_block("data2", p, n);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < n; ++j) {
      double mean = 0.0;
      if (i < 10 && j < 50) mean = 2.0;
      if (i >= 490 && j >= 50 && j < 100) mean = 1.5;
      x1.values(i, j) = mean + normal(rng);
    }
  }
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i < 10 && j < 50) {
        x2.values(i, j) = 0.5 * x1.values(i, j) + normal(rng);
      } else {
        const double mean = (i >= 490 && j >= 100) ? 2.0 : 0.0;
        x2.values(i, j) = mean + normal(rng);
      }
    }
  }

  SimData data;
  data.blocks.push_back(std::move(x1));
  data.blocks.push_back(std::move(x2));
  std::vector<int> features = range(0, 10);
  for (int i = 490; i < 500; ++i) features.push_back(i);
  data.truth.true_features = {features, features};
  data.truth.labels.K = 3;
  for (int j = 0; j < n; ++j) data.truth.labels.labels.push_back(j / 50 + 1);
  return data;
}

SimData simulate_setup(int setup, std::uint64_t seed) {
  if (setup == 1) return simulate_setup1(seed);
  if (setup == 2) return simulate_setup2(seed);
  throw PreconditionError("unknown simulation setup " + std::to_string(setup) + " (expected 1 or 2)");
}

}  // namespace icluster
