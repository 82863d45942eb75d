#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icluster/cluster.hpp"
#include "icluster/model.hpp"

namespace icluster {

struct SimTruth {
  Partition labels;
  std::vector<std::vector<int>> true_features;  // 0-based rows carrying signal, per block
};

struct SimData {
  std::vector<OmicsBlock> blocks;  // uncentered, ordered
  SimTruth truth;
};

struct Setup1Options {
  int n = 100;
  int p = 200;
  double amplitude = 3.0;
  int signal_rows = 20;
  /// Second block's signal starts at this 0-based row (0 = same rows as block 1).
  int second_block_offset = 0;
};

/// One N(0,1) latent variable z; X_t = w_t z' + E_t with standard normal noise,
/// w_t = amplitude on the signal rows and 0 elsewhere. Cluster 1 iff z_j > 0.
SimData simulate_setup1(std::uint64_t seed, const Setup1Options& opts = {});

/// The two-block coefficient-profile demonstration variant: amplitude 1.5,
/// second block's signal on rows 101-120.
SimData simulate_setup1_profile_demo(std::uint64_t seed);

/// 150 samples in three clusters of 50, two 500-feature blocks. Cluster mean
/// shifts sit on rows 1-10 and 491-500; rows 1-10 are correlated across blocks.
SimData simulate_setup2(std::uint64_t seed);

SimData simulate_setup(int setup, std::uint64_t seed);

}  // namespace icluster
