#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace haarfact {

// Exact value num * 2^{-exp}. Kept normalized: num odd, or num == 0 with exp == 0.
class Dyadic {
 public:
  Dyadic() = default;
  Dyadic(std::int64_t num, int exp);
  static Dyadic pow2_neg(int k) { return Dyadic(1, k); }

  std::int64_t num() const { return num_; }
  int exp() const { return exp_; }
  double to_double() const;
  std::string str() const;

  Dyadic operator+(const Dyadic& o) const;
  Dyadic operator-(const Dyadic& o) const;
  Dyadic operator*(const Dyadic& o) const;
  Dyadic operator-() const { return Dyadic(-num_, exp_); }
  bool operator==(const Dyadic& o) const = default;
  std::strong_ordering operator<=>(const Dyadic& o) const;

 private:
  void normalize();
  std::int64_t num_ = 0;
  int exp_ = 0;
};

struct DyadicInterval {
  int level = 0;
  std::int64_t index = 1;  // 1-based, 1 <= index <= 2^level

  DyadicInterval() = default;
  DyadicInterval(int level, std::int64_t index);

  Dyadic measure() const { return Dyadic::pow2_neg(level); }
  double measure_double() const;
  Dyadic left() const { return Dyadic(index - 1, level); }
  Dyadic right() const { return Dyadic(index, level); }

  DyadicInterval plus() const { return {level + 1, 2 * index - 1}; }
  DyadicInterval minus() const { return {level + 1, 2 * index}; }
  DyadicInterval parent() const;
  bool is_plus_child() const { return level > 0 && index % 2 == 1; }
  bool contains(const DyadicInterval& j) const;
  bool disjoint(const DyadicInterval& j) const;

  // Position in D_n order (level-major, then left to right), 0-based.
  std::int64_t order_key() const { return (std::int64_t{1} << level) - 1 + (index - 1); }

  std::string str() const;  // "k:i"
  static DyadicInterval parse(const std::string& s);

  bool operator==(const DyadicInterval&) const = default;
  std::strong_ordering operator<=>(const DyadicInterval& o) const {
    return order_key() <=> o.order_key();
  }
};

std::pair<DyadicInterval, DyadicInterval> children(const DyadicInterval& i);

// All intervals of level k, left to right.
std::vector<DyadicInterval> level_intervals(int k);
// D_d: all intervals of level <= d in order.
std::vector<DyadicInterval> truncated_intervals(int d);
// Descendants of i at an absolute level >= i.level.
std::vector<DyadicInterval> descendants_at(const DyadicInterval& i, int level);

struct OmegaIndex {
  int copy = 1;
  DyadicInterval interval;

  bool valid() const { return copy >= 1 && interval.level < copy; }
  std::string str() const;  // "n/k:i"
  static OmegaIndex parse(const std::string& s);

  bool operator==(const OmegaIndex&) const = default;
};

// Total order on valid indices: copy-major, then D_{n-1} order. Throws on invalid input.
std::strong_ordering compare_omega(const OmegaIndex& a, const OmegaIndex& b);
// Same order without the validity check (deep host copies).
std::strong_ordering compare_index(const OmegaIndex& a, const OmegaIndex& b);

struct OmegaLess {
  bool operator()(const OmegaIndex& a, const OmegaIndex& b) const { return compare_index(a, b) < 0; }
};

inline constexpr std::int64_t kDefaultIndexCap = std::int64_t{1} << 22;

// depths[n-1] is the depth of copy n; a negative depth omits the copy.
std::vector<OmegaIndex> enumerate_truncated(int copies, const std::vector<int>& depths,
                                            std::int64_t cap = kDefaultIndexCap);
// Standard truncation: copy n carries depth n-1.
std::vector<OmegaIndex> enumerate_standard(int copies, std::int64_t cap = kDefaultIndexCap);

std::vector<int> haar_values(const DyadicInterval& i, int resolution);

}  // namespace haarfact
