#include "haarfact/prodspace.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "haarfact/errors.hpp"

namespace haarfact {

Exponent::Exponent(double p_) : p(p_) {
  if (!(p_ > 1.0) || !std::isfinite(p_)) throw std::invalid_argument("exponent p must be a finite real > 1");
  q = p_ / (p_ - 1.0);
  pstar = std::max(p, q);
}

ProductGrid::ProductGrid(std::vector<int> resolutions, std::int64_t cap) : res_(std::move(resolutions)) {
  shift_.assign(res_.size(), 0);
  for (int r : res_) {
    if (r < 0) throw std::invalid_argument("negative grid resolution");
    bits_ += r;
    if (bits_ > 62) throw ResourceError("product grid too large");
  }
  if ((std::int64_t{1} << bits_) > cap)
    throw ResourceError("product grid has 2^" + std::to_string(bits_) + " cells, cap is " + std::to_string(cap));
  int s = bits_;
  for (std::size_t c = 0; c < res_.size(); ++c) {
    s -= res_[c];
    shift_[c] = s;
  }
}

double ProductGrid::cell_measure_double() const { return std::ldexp(1.0, -bits_); }

GridFunction GridFunction::dense(GridPtr grid, std::vector<double> values) {
  if (!grid) throw std::invalid_argument("null grid");
  if (values.size() != grid->cells()) throw std::invalid_argument("dense values do not match grid size");
  for (double v : values)
    if (!std::isfinite(v)) throw std::domain_error("non-finite grid value");
  GridFunction f;
  f.grid_ = std::move(grid);
  f.dense_ = true;
  f.values_ = std::move(values);
  return f;
}

GridFunction GridFunction::factored(GridPtr grid, std::vector<Summand> summands) {
  if (!grid) throw std::invalid_argument("null grid");
  for (const auto& s : summands) {
    if (s.coord < 0 || s.coord >= grid->coords()) throw std::invalid_argument("summand coordinate out of range");
    if (s.values.size() != (std::size_t{1} << grid->resolution(s.coord)))
      throw std::invalid_argument("summand length does not match coordinate resolution");
    for (double v : s.values)
      if (!std::isfinite(v)) throw std::domain_error("non-finite grid value");
  }
  GridFunction f;
  f.grid_ = std::move(grid);
  f.dense_ = false;
  f.summands_ = std::move(summands);
  return f;
}

GridFunction GridFunction::constant(GridPtr grid, double c) {
  std::size_t n = grid->cells();
  return dense(std::move(grid), std::vector<double>(n, c));
}

std::vector<double> GridFunction::expand() const {
  if (dense_) return values_;
  std::vector<double> out(grid_->cells(), 0.0);
  for (const auto& s : summands_) {
    int sh = grid_->shift(s.coord);
    std::size_t mask = s.values.size() - 1;
    for (std::size_t cell = 0; cell < out.size(); ++cell) out[cell] += s.values[(cell >> sh) & mask];
  }
  return out;
}

double GridFunction::at(std::size_t cell) const {
  if (dense_) return values_.at(cell);
  double v = 0.0;
  for (const auto& s : summands_) v += s.values[grid_->digit(cell, s.coord)];
  return v;
}

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 64) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  std::size_t h = xs.size() / 2;
  return pairwise_sum(xs.subspan(0, h)) + pairwise_sum(xs.subspan(h));
}

double stable_mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty set");
  double base = xs[0];
  std::vector<double> d(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) d[i] = xs[i] - base;
  return base + pairwise_sum(d) / static_cast<double>(xs.size());
}

bool is_ternary(std::span<const double> xs) {
  for (double x : xs)
    if (x != 0.0 && x != 1.0 && x != -1.0) return false;
  return true;
}

namespace {

void require_same_grid(const GridFunction& a, const GridFunction& b) {
  if (!(*a.grid() == *b.grid())) throw std::invalid_argument("grid mismatch");
}

double mean_of(const std::vector<double>& v) { return pairwise_sum(v) / static_cast<double>(v.size()); }

double dot_mean(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> prod(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * b[i];
  return mean_of(prod);
}

}  // namespace

double lp_norm_power(const GridFunction& f, double r, double power) {
  auto v = f.expand();
  for (auto& x : v) x = std::pow(std::abs(x), r);
  double s = pairwise_sum(v) * f.grid()->cell_measure_double();
  return std::pow(s, power / r);
}

double lp_norm(const GridFunction& f, const Exponent& e) { return lp_norm_power(f, e.p, 1.0); }

double integral(const GridFunction& f) {
  if (!f.is_dense()) {
    double s = 0.0;
    for (const auto& sm : f.summands()) s += mean_of(sm.values);
    return s;
  }
  return pairwise_sum(f.dense_values()) * f.grid()->cell_measure_double();
}

std::optional<Dyadic> exact_pairing(const GridFunction& g, const GridFunction& f) {
  require_same_grid(g, f);
  auto a = g.expand();
  auto b = f.expand();
  if (!is_ternary(a) || !is_ternary(b)) return std::nullopt;
  std::int64_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) count += static_cast<std::int64_t>(a[i] * b[i]);
  return Dyadic(count, g.grid()->total_bits());
}

double pairing(const GridFunction& g, const GridFunction& f) {
  require_same_grid(g, f);
  if (!g.is_dense() && !f.is_dense()) {
    std::vector<double> terms;
    for (const auto& s : g.summands())
      for (const auto& t : f.summands()) {
        if (s.coord == t.coord)
          terms.push_back(dot_mean(s.values, t.values));
        else
          terms.push_back(mean_of(s.values) * mean_of(t.values));
      }
    return pairwise_sum(terms);
  }
  if (auto ex = exact_pairing(g, f)) return ex->to_double();
  auto a = g.expand();
  auto b = f.expand();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  return pairwise_sum(a) * g.grid()->cell_measure_double();
}

GridFunction conditional_expectation(const GridFunction& f, const std::vector<GridFunction>& family) {
  std::vector<std::vector<double>> members;
  members.reserve(family.size());
  for (const auto& m : family) {
    require_same_grid(f, m);
    members.push_back(m.expand());
    if (!is_ternary(members.back())) throw std::invalid_argument("conditioning family must be {-1,0,1}-valued");
  }
  std::size_t n = f.grid()->cells();
  std::vector<int> atom(n);
  std::unordered_map<std::string, int> ids;
  std::string key(members.size(), '\0');
  for (std::size_t cell = 0; cell < n; ++cell) {
    for (std::size_t j = 0; j < members.size(); ++j) key[j] = static_cast<char>(members[j][cell] + 1.0);
    auto [it, fresh] = ids.try_emplace(key, static_cast<int>(ids.size()));
    atom[cell] = it->second;
  }
  auto v = f.expand();
  std::vector<std::vector<double>> per_atom(ids.size());
  for (std::size_t cell = 0; cell < n; ++cell) per_atom[atom[cell]].push_back(v[cell]);
  std::vector<double> avg(ids.size());
  // stable_mean keeps a second application exact: constant atoms average to themselves.
  for (std::size_t a = 0; a < per_atom.size(); ++a) avg[a] = stable_mean(per_atom[a]);
  std::vector<double> out(n);
  for (std::size_t cell = 0; cell < n; ++cell) out[cell] = avg[atom[cell]];
  return GridFunction::dense(f.grid(), std::move(out));
}

}  // namespace haarfact
