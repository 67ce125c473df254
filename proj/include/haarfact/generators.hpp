#pragma once

#include <cstdint>

#include "haarfact/opalg.hpp"
#include "haarfact/randblocks.hpp"
#include "haarfact/romega.hpp"

namespace haarfact {

// Off-diagonal entries are drawn in the normalized basis, t_JI = u |J|^{-1/p} |I|^{1/p} with u uniform,
// and scaled so that the entrywise off-diagonal bound equals offdiag_budget.
struct RandomOperatorSpec {
  double diag_lo = -1.0;
  double diag_hi = 1.0;
  double offdiag_budget = 1.0;
  double norm_upper = 0.0;  // when positive, the whole operator is scaled so opnorm_upper <= norm_upper
  bool nonnegative = false;  // off-diagonal u drawn from [0, 1] instead of [-1, 1]
};

OperatorMatrix random_operator(const BasisRegistry& reg, const Exponent& e, std::uint64_t seed,
                               const RandomOperatorSpec& spec);
OperatorMatrix random_diagonal(const BasisRegistry& reg, const Exponent& e, std::uint64_t seed, double lo, double hi);
// I + eta N with N zero on the diagonal and entrywise bound 1.
OperatorMatrix perturbed_identity(const BasisRegistry& reg, const Exponent& e, std::uint64_t seed, double eta);

GridFunction random_grid_function(const GridPtr& grid, std::uint64_t seed);
// `count` distinct intervals of `level`, chosen uniformly.
RandomBlockSpec random_block_spec(int host_copy, int level, int count, std::uint64_t seed);

}  // namespace haarfact
