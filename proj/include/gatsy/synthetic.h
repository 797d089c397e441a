#pragma once

#include <cstddef>
#include <cstdint>

#include "gatsy/dataset.h"

namespace gatsy {

/// Stochastic block model with genre-like clusters. Every block gets a
/// Gaussian mean vector (scaled by `separation`); node features are the
/// block mean plus i.i.d. Gaussian noise of scale `noise`. Labels are the
/// block index, with vocabulary "block_0", "block_1", ...
struct SyntheticConfig {
  std::size_t blocks = 4;
  std::size_t nodes_per_block = 100;
  double p_in = 0.1;
  double p_out = 0.005;
  std::size_t feature_dim = 32;
  double separation = 1.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

/// Nodes left without any edge are pruned, so the result may hold fewer
/// than blocks * nodes_per_block artists. Throws std::invalid_argument
/// unless 0 <= p_out < p_in <= 1.
Dataset generate_synthetic(const SyntheticConfig& config);

}  // namespace gatsy
