#include "haarfact/romega.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "haarfact/errors.hpp"
#include "haarfact/random.hpp"

namespace haarfact {

BasisRegistry::BasisRegistry(std::vector<CopySpec> copies, std::int64_t index_cap) : copies_(std::move(copies)) {
  std::int64_t total = 0;
  for (std::size_t c = 0; c < copies_.size(); ++c) {
    const auto& cs = copies_[c];
    if (c > 0 && cs.copy <= copies_[c - 1].copy) throw std::invalid_argument("registry copies must increase");
    if (cs.depth < 0 || cs.depth > cs.copy - 1)
      throw std::invalid_argument("copy " + std::to_string(cs.copy) + " cannot carry depth " + std::to_string(cs.depth));
    if (cs.depth > 40) throw ResourceError("copy depth too large");
    total += (std::int64_t{2} << cs.depth) - 1;
    if (total > index_cap) throw ResourceError("registry exceeds index cap of " + std::to_string(index_cap));
    coord_[cs.copy] = static_cast<int>(c);
  }
  basis_.reserve(static_cast<std::size_t>(total));
  for (const auto& cs : copies_)
    for (const auto& iv : truncated_intervals(cs.depth)) basis_.push_back({cs.copy, iv});
  for (std::size_t i = 0; i < basis_.size(); ++i) pos_[basis_[i]] = static_cast<int>(i);
}

BasisRegistry BasisRegistry::standard(int copies) {
  std::vector<CopySpec> cs;
  for (int n = 1; n <= copies; ++n) cs.push_back({n, n - 1});
  return BasisRegistry(cs);
}

BasisRegistry BasisRegistry::from_basis(const std::vector<OmegaIndex>& basis) {
  std::vector<CopySpec> cs;
  std::size_t i = 0;
  while (i < basis.size()) {
    int copy = basis[i].copy;
    std::size_t j = i;
    while (j < basis.size() && basis[j].copy == copy) ++j;
    std::size_t count = j - i;
    int depth = -1;
    while ((std::size_t{2} << (depth + 1)) - 1 <= count && depth < 40) ++depth;
    if (depth < 0 || (std::size_t{2} << depth) - 1 != count)
      throw std::invalid_argument("copy " + std::to_string(copy) + " does not carry a complete truncated Haar family");
    if (!cs.empty() && copy <= cs.back().copy) throw std::invalid_argument("basis copies out of order");
    cs.push_back({copy, depth});
    i = j;
  }
  BasisRegistry reg(cs);
  if (reg.basis() != basis) throw std::invalid_argument("basis list is not in canonical order");
  return reg;
}

int BasisRegistry::position(const OmegaIndex& idx) const {
  auto it = pos_.find(idx);
  return it == pos_.end() ? -1 : it->second;
}

int BasisRegistry::coord_of_copy(int copy) const {
  auto it = coord_.find(copy);
  return it == coord_.end() ? -1 : it->second;
}

int BasisRegistry::depth_of(int copy) const {
  int c = coord_of_copy(copy);
  return c < 0 ? -1 : copies_[c].depth;
}

GridPtr BasisRegistry::grid(std::int64_t cell_cap) const {
  std::vector<int> res;
  for (const auto& cs : copies_) res.push_back(cs.depth + 1);
  return std::make_shared<const ProductGrid>(res, cell_cap);
}

GridFunction BasisRegistry::basis_function(int pos, std::int64_t cell_cap) const {
  const auto& idx = basis_.at(pos);
  int c = coord_of_copy(idx.copy);
  auto hv = haar_values(idx.interval, copies_[c].depth + 1);
  return GridFunction::factored(grid(cell_cap), {{c, std::vector<double>(hv.begin(), hv.end())}});
}

std::vector<double> realize_copy(const BasisRegistry& reg, int copy, const Eigen::VectorXd& coeffs) {
  int d = reg.depth_of(copy);
  if (d < 0) throw std::invalid_argument("copy not in registry");
  int base = reg.position({copy, DyadicInterval(0, 1)});
  int res = d + 1;
  std::vector<double> v(std::size_t{1} << res, 0.0);
  for (std::size_t x = 0; x < v.size(); ++x) {
    double s = 0.0;
    for (int k = 0; k <= d; ++k) {
      std::size_t idx = x >> (res - k);
      double a = coeffs[base + static_cast<int>((std::size_t{1} << k) - 1 + idx)];
      s += ((x >> (res - k - 1)) & 1) ? -a : a;
    }
    v[x] = s;
  }
  return v;
}

GridFunction realize(const Eigen::VectorXd& coeffs, const BasisRegistry& reg, std::int64_t cell_cap) {
  if (coeffs.size() != reg.dim()) throw std::invalid_argument("coefficient vector does not match registry dimension");
  std::vector<Summand> parts;
  for (std::size_t c = 0; c < reg.copies().size(); ++c)
    parts.push_back({static_cast<int>(c), realize_copy(reg, reg.copies()[c].copy, coeffs)});
  return GridFunction::factored(reg.grid(cell_cap), std::move(parts));
}

namespace {

// Haar coefficients of a single-coordinate function u at resolution depth+1.
void haar_coefficients(const std::vector<double>& u, int depth, double* out) {
  int res = depth + 1;
  double cell = std::ldexp(1.0, -res);
  std::size_t k_pos = 0;
  for (int k = 0; k <= depth; ++k) {
    std::size_t width = std::size_t{1} << (res - k);
    for (std::size_t i = 0; i < (std::size_t{1} << k); ++i, ++k_pos) {
      std::vector<double> prod(width);
      for (std::size_t c = 0; c < width; ++c) prod[c] = c < width / 2 ? u[i * width + c] : -u[i * width + c];
      out[k_pos] = pairwise_sum(prod) * cell / std::ldexp(1.0, -k);
    }
  }
}

}  // namespace

Eigen::VectorXd project(const GridFunction& f, const BasisRegistry& reg) {
  auto g = reg.grid();
  if (!(*f.grid() == *g)) throw std::invalid_argument("function grid does not match registry grid");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(reg.dim());
  std::vector<std::vector<double>> marginals(reg.copies().size());
  if (!f.is_dense()) {
    for (std::size_t c = 0; c < marginals.size(); ++c) marginals[c].assign(std::size_t{1} << g->resolution(c), 0.0);
    for (const auto& s : f.summands())
      for (std::size_t x = 0; x < s.values.size(); ++x) marginals[s.coord][x] += s.values[x];
  } else {
    const auto& v = f.dense_values();
    for (std::size_t c = 0; c < marginals.size(); ++c) {
      std::size_t n = std::size_t{1} << g->resolution(c);
      std::vector<std::vector<double>> buckets(n);
      for (std::size_t cell = 0; cell < v.size(); ++cell) buckets[g->digit(cell, static_cast<int>(c))].push_back(v[cell]);
      marginals[c].resize(n);
      for (std::size_t x = 0; x < n; ++x) marginals[c][x] = pairwise_sum(buckets[x]) / static_cast<double>(buckets[x].size());
    }
  }
  for (std::size_t c = 0; c < marginals.size(); ++c) {
    const auto& cs = reg.copies()[c];
    int base = reg.position({cs.copy, DyadicInterval(0, 1)});
    haar_coefficients(marginals[c], cs.depth, out.data() + base);
  }
  return out;
}

double burkholder_check(const Eigen::VectorXd& coeffs, const std::vector<int>& signs, const Exponent& e,
                        const BasisRegistry& reg) {
  if (static_cast<Eigen::Index>(signs.size()) != coeffs.size()) throw std::invalid_argument("sign vector length mismatch");
  Eigen::VectorXd flipped = coeffs;
  for (std::size_t i = 0; i < signs.size(); ++i) {
    if (signs[i] != 1 && signs[i] != -1) throw std::invalid_argument("signs must be +1 or -1");
    flipped[static_cast<Eigen::Index>(i)] *= signs[i];
  }
  double den = lp_norm(realize(coeffs, reg), e);
  if (den == 0.0) throw std::domain_error("zero function in Burkholder ratio");
  return lp_norm(realize(flipped, reg), e) / den;
}

std::vector<OmegaIndex> BlockFamily::targets() const {
  std::vector<OmegaIndex> t;
  for (const auto& b : blocks) t.push_back(b.target);
  return t;
}

const Block* BlockFamily::find(const OmegaIndex& target) const {
  for (const auto& b : blocks)
    if (b.target == target) return &b;
  return nullptr;
}

std::vector<double> block_values(const Block& b, int resolution) {
  std::vector<double> v(std::size_t{1} << resolution, 0.0);
  for (const auto& t : b.terms) {
    auto h = haar_values(t.interval, resolution);
    for (std::size_t x = 0; x < v.size(); ++x) v[x] += t.sign * h[x];
  }
  return v;
}

GramReport gram_check(const BlockFamily& family) {
  GramReport rep;
  auto fail = [&](std::string m) {
    rep.ok = false;
    rep.message = std::move(m);
    return rep;
  };
  std::map<std::pair<int, DyadicInterval>, std::vector<std::pair<std::size_t, int>>> owners;
  for (std::size_t b = 0; b < family.blocks.size(); ++b) {
    const auto& blk = family.blocks[b];
    if (blk.terms.empty()) return fail("block " + blk.target.str() + " is empty");
    Dyadic mass;
    for (std::size_t i = 0; i < blk.terms.size(); ++i) {
      const auto& t = blk.terms[i];
      if (t.sign != 1 && t.sign != -1) return fail("block " + blk.target.str() + " has a sign outside {-1,1}");
      for (std::size_t j = 0; j < i; ++j)
        if (!t.interval.disjoint(blk.terms[j].interval))
          return fail("block " + blk.target.str() + " has overlapping intervals");
      mass = mass + t.interval.measure();
      owners[{blk.host_copy, t.interval}].push_back({b, t.sign});
    }
    if (!(mass == blk.target.interval.measure()))
      return fail("block " + blk.target.str() + " has <b,b> = " + mass.str() + ", expected " +
                  blk.target.interval.measure().str());
  }
  std::map<std::pair<std::size_t, std::size_t>, Dyadic> cross;
  for (const auto& [key, list] : owners)
    for (std::size_t a = 0; a < list.size(); ++a)
      for (std::size_t c = a + 1; c < list.size(); ++c) {
        auto pr = std::minmax(list[a].first, list[c].first);
        if (pr.first == pr.second) continue;
        cross[pr] = cross[pr] + Dyadic(list[a].second * list[c].second, 0) * key.second.measure();
      }
  for (const auto& [pr, v] : cross)
    if (!(v == Dyadic()))
      return fail("blocks " + family.blocks[pr.first].target.str() + " and " + family.blocks[pr.second].target.str() +
                  " are not orthogonal");
  return rep;
}

std::vector<GridFunction> realize_family(const BlockFamily& family, const BasisRegistry& reg, std::int64_t cell_cap) {
  auto g = reg.grid(cell_cap);
  std::vector<GridFunction> out;
  for (const auto& b : family.blocks) {
    int c = reg.coord_of_copy(b.host_copy);
    if (c < 0) throw std::invalid_argument("host copy " + std::to_string(b.host_copy) + " missing from registry");
    out.push_back(GridFunction::factored(g, {{c, block_values(b, g->resolution(c))}}));
  }
  return out;
}

Eigen::VectorXd project(const GridFunction& f, const BlockFamily& family, const BasisRegistry& reg) {
  auto gram = gram_check(family);
  if (!gram.ok) throw std::invalid_argument("Gram check failed: " + gram.message);
  auto fam = realize_family(family, reg);
  Eigen::VectorXd out(static_cast<Eigen::Index>(fam.size()));
  for (std::size_t i = 0; i < fam.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = pairing(fam[i], f) / family.blocks[i].target.interval.measure_double();
  return out;
}

BasisRegistry host_registry(const BlockFamily& family) {
  std::map<int, int> depth;
  for (const auto& b : family.blocks)
    for (const auto& t : b.terms) {
      auto [it, fresh] = depth.try_emplace(b.host_copy, t.interval.level);
      if (!fresh) it->second = std::max(it->second, t.interval.level);
    }
  std::vector<CopySpec> cs;
  for (const auto& [c, d] : depth) cs.push_back({c, d});
  return BasisRegistry(cs);
}

namespace {

using PatternCounts = std::map<std::uint64_t, std::int64_t>;

// Joint value counts of single-coordinate ternary functions over the product grid.
PatternCounts joint_counts(const ProductGrid& g, const std::vector<int>& coords,
                           const std::vector<std::vector<double>>& values) {
  PatternCounts counts;
  std::vector<std::uint64_t> pow3(values.size(), 1);
  for (std::size_t j = 1; j < values.size(); ++j) pow3[j] = pow3[j - 1] * 3;
  for (std::size_t cell = 0; cell < g.cells(); ++cell) {
    std::uint64_t code = 0;
    for (std::size_t j = 0; j < values.size(); ++j)
      code += pow3[j] * static_cast<std::uint64_t>(values[j][g.digit(cell, coords[j])] + 1.0);
    ++counts[code];
  }
  return counts;
}

std::string pattern_string(std::uint64_t code, std::size_t members) {
  std::string s;
  for (std::size_t j = 0; j < members; ++j, code /= 3) s += "-0+"[code % 3];
  return s;
}

DistributionCheck compare_subset(const BlockFamily& family, const BasisRegistry& reference,
                                 const std::vector<std::size_t>& subset) {
  DistributionCheck out;
  out.members = static_cast<int>(subset.size());
  BlockFamily sub;
  std::set<int> ref_copies;
  for (auto i : subset) {
    sub.blocks.push_back(family.blocks[i]);
    ref_copies.insert(family.blocks[i].target.copy);
  }
  auto hreg = host_registry(sub);
  auto hg = hreg.grid();
  std::vector<int> hcoords;
  std::vector<std::vector<double>> hvals;
  for (const auto& b : sub.blocks) {
    int c = hreg.coord_of_copy(b.host_copy);
    hcoords.push_back(c);
    hvals.push_back(block_values(b, hg->resolution(c)));
    if (!is_ternary(hvals.back())) {
      out.pass = false;
      out.message = "block " + b.target.str() + " is not {-1,0,1}-valued";
      return out;
    }
  }
  std::vector<CopySpec> rc;
  for (int c : ref_copies) rc.push_back({c, reference.depth_of(c)});
  BasisRegistry rreg(rc);
  auto rg = rreg.grid();
  std::vector<int> rcoords;
  std::vector<std::vector<double>> rvals;
  for (const auto& b : sub.blocks) {
    int c = rreg.coord_of_copy(b.target.copy);
    rcoords.push_back(c);
    auto h = haar_values(b.target.interval, rg->resolution(c));
    rvals.emplace_back(h.begin(), h.end());
  }
  auto fc = joint_counts(*hg, hcoords, hvals);
  auto rcnt = joint_counts(*rg, rcoords, rvals);
  std::set<std::uint64_t> keys;
  for (const auto& [k, v] : fc) keys.insert(k);
  for (const auto& [k, v] : rcnt) keys.insert(k);
  for (auto k : keys) {
    Dyadic pf(fc.count(k) ? fc[k] : 0, hg->total_bits());
    Dyadic pr(rcnt.count(k) ? rcnt[k] : 0, rg->total_bits());
    if (!(pf == pr)) {
      out.pass = false;
      out.pattern = pattern_string(k, subset.size());
      out.family_mass = pf;
      out.reference_mass = pr;
      out.message = "pattern " + out.pattern + " has mass " + pf.str() + " in the family and " + pr.str() +
                    " in the reference";
      return out;
    }
  }
  out.pass = true;
  return out;
}

}  // namespace

DistributionCheck check_distributional_copy(const BlockFamily& family, const BasisRegistry& reference,
                                            std::uint64_t seed, int sampled_subsets) {
  DistributionCheck out;
  out.members = static_cast<int>(family.blocks.size());
  if (family.targets() != reference.basis()) {
    out.pass = false;
    out.message = "family targets do not match the reference basis";
    return out;
  }
  std::vector<std::size_t> all(family.blocks.size());
  std::iota(all.begin(), all.end(), 0);
  if (all.size() <= static_cast<std::size_t>(kExactDistributionCap)) {
    auto r = compare_subset(family, reference, all);
    r.members = out.members;
    return r;
  }
  auto rng = make_rng(seed, 0x5eed);
  for (int s = 0; s < sampled_subsets; ++s) {
    std::vector<std::size_t> perm = all;
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
    perm.resize(kExactDistributionCap);
    std::sort(perm.begin(), perm.end());
    auto r = compare_subset(family, reference, perm);
    if (!r.pass) {
      r.exact = false;
      r.members = out.members;
      r.subsets_checked = s + 1;
      return r;
    }
  }
  out.pass = true;
  out.exact = false;
  out.subsets_checked = sampled_subsets;
  return out;
}

}  // namespace haarfact
