#pragma once

#include <cstddef>
#include <vector>

namespace latnr {

// Gauss-Hermite rule with the standard-normal density absorbed into the
// weights: integral of f(t) phi(t) dt ~= sum_g weights[g] * f(nodes[g]).
// Weights are positive and sum to one.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

// Builds a rule with `points` >= 2 nodes. Throws ValidationError otherwise.
QuadratureRule gauss_hermite_normal(std::size_t points);

}  // namespace latnr
