#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "haarfact/dyadic.hpp"
#include "haarfact/prodspace.hpp"

namespace haarfact {

struct CopySpec {
  int copy = 1;
  int depth = 0;
  bool operator==(const CopySpec&) const = default;
};

// A truncation of the independent Haar copies: one grid coordinate per copy, in increasing copy order.
class BasisRegistry {
 public:
  BasisRegistry() = default;
  explicit BasisRegistry(std::vector<CopySpec> copies, std::int64_t index_cap = kDefaultIndexCap);
  static BasisRegistry standard(int copies);
  // Rebuilds the registry of a basis list; each copy must carry a complete D_d in order.
  static BasisRegistry from_basis(const std::vector<OmegaIndex>& basis);

  const std::vector<CopySpec>& copies() const { return copies_; }
  const std::vector<OmegaIndex>& basis() const { return basis_; }
  int dim() const { return static_cast<int>(basis_.size()); }
  int position(const OmegaIndex& idx) const;  // -1 when absent
  int coord_of_copy(int copy) const;          // -1 when absent
  int depth_of(int copy) const;               // -1 when absent
  double measure(int pos) const { return basis_[pos].interval.measure_double(); }

  GridPtr grid(std::int64_t cell_cap = kDefaultCellCap) const;
  GridFunction basis_function(int pos, std::int64_t cell_cap = kDefaultCellCap) const;

  bool operator==(const BasisRegistry& o) const { return copies_ == o.copies_; }

 private:
  std::vector<CopySpec> copies_;
  std::vector<OmegaIndex> basis_;
  std::map<OmegaIndex, int, OmegaLess> pos_;
  std::map<int, int> coord_;
};

GridFunction realize(const Eigen::VectorXd& coeffs, const BasisRegistry& reg, std::int64_t cell_cap = kDefaultCellCap);
// Values of sum_I a_I h_I over one copy's coordinate, at resolution depth+1.
std::vector<double> realize_copy(const BasisRegistry& reg, int copy, const Eigen::VectorXd& coeffs);

// Coefficients |I|^{-1} <h_I^n, f> against the registry basis.
Eigen::VectorXd project(const GridFunction& f, const BasisRegistry& reg);

double burkholder_check(const Eigen::VectorXd& coeffs, const std::vector<int>& signs, const Exponent& e,
                        const BasisRegistry& reg);

struct BlockTerm {
  DyadicInterval interval;
  int sign = 1;
  bool operator==(const BlockTerm&) const = default;
};

// b = sum_K sign_K h_K in one host copy, standing in for the basis element at `target`.
struct Block {
  OmegaIndex target;
  int host_copy = 1;
  std::vector<BlockTerm> terms;
  bool operator==(const Block&) const = default;
};

struct BlockFamily {
  std::vector<Block> blocks;  // in target order
  bool operator==(const BlockFamily&) const = default;

  std::vector<OmegaIndex> targets() const;
  const Block* find(const OmegaIndex& target) const;
};

// Host-copy values of a block at the given resolution.
std::vector<double> block_values(const Block& b, int resolution);

// Gram matrix of the family in exact arithmetic; checks <b_I, b_J> = |I| delta_IJ.
struct GramReport {
  bool ok = true;
  std::string message;
};
GramReport gram_check(const BlockFamily& family);

// Realizes each block on `reg`'s grid (the host copies must be present with enough depth).
std::vector<GridFunction> realize_family(const BlockFamily& family, const BasisRegistry& reg,
                                         std::int64_t cell_cap = kDefaultCellCap);
// Coefficients |I|^{-1} <b_I, f>; throws when the Gram check fails.
Eigen::VectorXd project(const GridFunction& f, const BlockFamily& family, const BasisRegistry& reg);

// Smallest registry carrying every host copy of the family at the depth its terms need.
BasisRegistry host_registry(const BlockFamily& family);

struct DistributionCheck {
  bool pass = false;
  bool exact = true;        // false when only sampled sub-families were compared
  int members = 0;
  int subsets_checked = 1;
  std::string pattern;      // first distinguishing value pattern, e.g. "+0-"
  Dyadic family_mass;
  Dyadic reference_mass;
  std::string message;
};

inline constexpr int kExactDistributionCap = 16;

DistributionCheck check_distributional_copy(const BlockFamily& family, const BasisRegistry& reference,
                                            std::uint64_t seed = 0, int sampled_subsets = 64);

}  // namespace haarfact
