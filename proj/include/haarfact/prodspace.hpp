#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "haarfact/dyadic.hpp"

namespace haarfact {

struct Exponent {
  double p = 2.0;
  double q = 2.0;
  double pstar = 2.0;

  Exponent() = default;
  explicit Exponent(double p_);
  double burkholder() const { return pstar - 1.0; }
};

inline constexpr std::int64_t kDefaultCellCap = std::int64_t{1} << 22;

class ProductGrid {
 public:
  explicit ProductGrid(std::vector<int> resolutions, std::int64_t cap = kDefaultCellCap);

  int coords() const { return static_cast<int>(res_.size()); }
  int resolution(int c) const { return res_.at(c); }
  const std::vector<int>& resolutions() const { return res_; }
  int total_bits() const { return bits_; }
  std::size_t cells() const { return std::size_t{1} << bits_; }
  // Every cell has measure 2^{-total_bits}.
  Dyadic cell_measure() const { return Dyadic::pow2_neg(bits_); }
  double cell_measure_double() const;
  // Coordinate 0 occupies the most significant bits.
  std::size_t digit(std::size_t cell, int c) const { return (cell >> shift_[c]) & ((std::size_t{1} << res_[c]) - 1); }
  int shift(int c) const { return shift_[c]; }

  bool operator==(const ProductGrid& o) const { return res_ == o.res_; }

 private:
  std::vector<int> res_;
  std::vector<int> shift_;
  int bits_ = 0;
};

using GridPtr = std::shared_ptr<const ProductGrid>;

struct Summand {
  int coord = 0;
  std::vector<double> values;  // length 2^{resolution(coord)}
};

class GridFunction {
 public:
  static GridFunction dense(GridPtr grid, std::vector<double> values);
  static GridFunction factored(GridPtr grid, std::vector<Summand> summands);
  static GridFunction constant(GridPtr grid, double c);

  const GridPtr& grid() const { return grid_; }
  bool is_dense() const { return dense_; }
  const std::vector<double>& dense_values() const { return values_; }
  const std::vector<Summand>& summands() const { return summands_; }

  std::vector<double> expand() const;
  double at(std::size_t cell) const;
  GridFunction to_dense() const { return dense(grid_, expand()); }

 private:
  GridPtr grid_;
  bool dense_ = true;
  std::vector<double> values_;
  std::vector<Summand> summands_;
};

// Fixed-order pairwise summation; the result does not depend on how callers chunk work.
double pairwise_sum(std::span<const double> xs);

// Arithmetic mean that returns x exactly when all entries equal x.
double stable_mean(std::span<const double> xs);

bool is_ternary(std::span<const double> xs);

double lp_norm(const GridFunction& f, const Exponent& e);
// (sum mu |f|^r)^{power/r} evaluated with a single pow, used where bounds must not lose an ulp.
double lp_norm_power(const GridFunction& f, double r, double power);
double integral(const GridFunction& f);

double pairing(const GridFunction& g, const GridFunction& f);
// Exact value when both functions are {-1,0,1}-valued; nullopt otherwise.
std::optional<Dyadic> exact_pairing(const GridFunction& g, const GridFunction& f);

GridFunction conditional_expectation(const GridFunction& f, const std::vector<GridFunction>& family);

}  // namespace haarfact
