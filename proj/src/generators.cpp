#include "haarfact/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "haarfact/random.hpp"

namespace haarfact {

namespace {

Eigen::MatrixXd normalized_offdiag(const BasisRegistry& reg, const Exponent& e, Rng& rng, double budget,
                                   bool nonnegative = false) {
  const int n = reg.dim();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  if (n < 2 || budget == 0.0) return m;
  Eigen::MatrixXd u(n, n);
  double total = 0.0;
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) {
      u(r, c) = r == c ? 0.0 : uniform(rng, nonnegative ? 0.0 : -1.0, 1.0);
      total += std::abs(u(r, c));
    }
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = std::pow(reg.measure(i), 1.0 / e.p);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) m(r, c) = budget * u(r, c) / total * w[c] / w[r];
  return m;
}

}  // namespace

OperatorMatrix random_operator(const BasisRegistry& reg, const Exponent& e, std::uint64_t seed,
                               const RandomOperatorSpec& spec) {
  auto rng = make_rng(seed, 1);
  Eigen::MatrixXd m = normalized_offdiag(reg, e, rng, spec.offdiag_budget, spec.nonnegative);
  auto drng = make_rng(seed, 2);
  for (int i = 0; i < reg.dim(); ++i) m(i, i) = uniform(drng, spec.diag_lo, spec.diag_hi);
  OperatorMatrix t(e, reg.basis(), m);
  if (spec.norm_upper > 0.0) {
    double u = opnorm_upper(t);
    if (u > spec.norm_upper) {
      // Shrink a little past the target so the recomputed bound cannot round above it.
      m *= spec.norm_upper / u * (1.0 - 1e-12);
      t = OperatorMatrix(e, reg.basis(), m);
    }
  }
  return t;
}

OperatorMatrix random_diagonal(const BasisRegistry& reg, const Exponent& e, std::uint64_t seed, double lo, double hi) {
  auto rng = make_rng(seed, 2);
  Eigen::VectorXd d(reg.dim());
  for (int i = 0; i < reg.dim(); ++i) d[i] = uniform(rng, lo, hi);
  return OperatorMatrix::diagonal(e, reg.basis(), d);
}

OperatorMatrix perturbed_identity(const BasisRegistry& reg, const Exponent& e, std::uint64_t seed, double eta) {
  auto rng = make_rng(seed, 1);
  Eigen::MatrixXd m = eta * normalized_offdiag(reg, e, rng, 1.0);
  m.diagonal().setOnes();
  return OperatorMatrix(e, reg.basis(), m);
}

GridFunction random_grid_function(const GridPtr& grid, std::uint64_t seed) {
  auto rng = make_rng(seed, 3);
  std::vector<double> v(grid->cells());
  for (auto& x : v) x = gaussian(rng);
  return GridFunction::dense(grid, std::move(v));
}

RandomBlockSpec random_block_spec(int host_copy, int level, int count, std::uint64_t seed) {
  std::int64_t total = std::int64_t{1} << level;
  if (count < 1 || count > total) throw std::invalid_argument("block count out of range for the level");
  auto rng = make_rng(seed, 4);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), 1);
  for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[uniform_index(rng, i + 1)]);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  RandomBlockSpec s;
  s.host_copy = host_copy;
  s.level = level;
  for (auto i : idx) s.intervals.emplace_back(level, i);
  return s;
}

}  // namespace haarfact
