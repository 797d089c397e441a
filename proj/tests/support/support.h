#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gatsy/autodiff.h"
#include "gatsy/graph.h"
#include "gatsy/tensor.h"

namespace gatsy::testing {

/// Builds a scalar loss from named tape inputs.
using LossFn = std::function<ad::Var(ad::Tape&, const std::map<std::string, ad::Var>&)>;

struct GradCheck {
  double max_rel_error = 0;
  std::string worst;  // "name[index]" of the worst element
};

/// Compares reverse-mode gradients of `loss` against central differences
/// (f(x+eps) - f(x-eps)) / 2eps, element by element. The relative error of
/// an element is |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheck check_gradients(const LossFn& loss, const std::map<std::string, Tensor>& inputs,
                          double eps = 1e-6, double floor = 1e-6);

/// Finite-difference checks of every differentiable tape op, grouped into
/// small composite losses on inputs drawn from `seed`. Each entry names the
/// ops it covers.
std::vector<std::pair<std::string, GradCheck>> op_gradient_checks(std::uint64_t seed);

Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0);

/// Erdos-Renyi graph plus a ring through all nodes, so no node is isolated.
ArtistGraph random_connected_graph(std::size_t n, double p, std::uint64_t seed);

/// Graph with `perm[i]` as the new index of node i.
ArtistGraph permute_graph(const ArtistGraph& graph, const std::vector<NodeId>& perm);

/// Fresh empty directory under the system temp dir, unique per call.
std::string temp_dir(const std::string& tag);

}  // namespace gatsy::testing
