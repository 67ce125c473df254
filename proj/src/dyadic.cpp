#include "haarfact/dyadic.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "haarfact/errors.hpp"

namespace haarfact {

namespace {

std::int64_t shifted(std::int64_t v, int s) {
  if (s == 0 || v == 0) return v;
  if (s >= 62 || std::abs(v) > (std::int64_t{1} << (62 - s))) throw std::overflow_error("dyadic overflow");
  return v * (std::int64_t{1} << s);
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  if (s.empty()) throw FormatError("empty " + what);
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw FormatError("bad " + what + " '" + s + "'");
  }
  if (pos != s.size()) throw FormatError("bad " + what + " '" + s + "'");
  return v;
}

}  // namespace

Dyadic::Dyadic(std::int64_t num, int exp) : num_(num), exp_(exp) { normalize(); }

void Dyadic::normalize() {
  if (num_ == 0) {
    exp_ = 0;
    return;
  }
  int tz = std::countr_zero(static_cast<std::uint64_t>(num_ < 0 ? -num_ : num_));
  int drop = exp_ > 0 ? std::min(tz, exp_) : 0;
  num_ >>= drop;
  exp_ -= drop;
  while (exp_ < 0) {
    num_ = shifted(num_, 1);
    ++exp_;
  }
}

double Dyadic::to_double() const { return std::ldexp(static_cast<double>(num_), -exp_); }

std::string Dyadic::str() const {
  if (exp_ == 0) return std::to_string(num_);
  return std::to_string(num_) + "/2^" + std::to_string(exp_);
}

Dyadic Dyadic::operator+(const Dyadic& o) const {
  int e = std::max(exp_, o.exp_);
  return Dyadic(shifted(num_, e - exp_) + shifted(o.num_, e - o.exp_), e);
}

Dyadic Dyadic::operator-(const Dyadic& o) const { return *this + (-o); }

Dyadic Dyadic::operator*(const Dyadic& o) const {
  std::int64_t r = 0;
  if (__builtin_mul_overflow(num_, o.num_, &r)) throw std::overflow_error("dyadic overflow");
  return Dyadic(r, exp_ + o.exp_);
}

std::strong_ordering Dyadic::operator<=>(const Dyadic& o) const {
  int e = std::max(exp_, o.exp_);
  return shifted(num_, e - exp_) <=> shifted(o.num_, e - o.exp_);
}

DyadicInterval::DyadicInterval(int lvl, std::int64_t idx) : level(lvl), index(idx) {
  if (lvl < 0 || lvl > 61) throw std::invalid_argument("dyadic level out of range");
  if (idx < 1 || idx > (std::int64_t{1} << lvl)) throw std::invalid_argument("dyadic index out of range");
}

double DyadicInterval::measure_double() const { return std::ldexp(1.0, -level); }

DyadicInterval DyadicInterval::parent() const {
  if (level == 0) throw std::invalid_argument("[0,1) has no parent");
  return {level - 1, (index + 1) / 2};
}

bool DyadicInterval::contains(const DyadicInterval& j) const {
  if (j.level < level) return false;
  return ((j.index - 1) >> (j.level - level)) + 1 == index;
}

bool DyadicInterval::disjoint(const DyadicInterval& j) const { return !contains(j) && !j.contains(*this); }

std::string DyadicInterval::str() const { return std::to_string(level) + ":" + std::to_string(index); }

DyadicInterval DyadicInterval::parse(const std::string& s) {
  auto colon = s.find(':');
  if (colon == std::string::npos) throw FormatError("interval '" + s + "' is not of the form k:i");
  auto k = parse_int(s.substr(0, colon), "interval level");
  auto i = parse_int(s.substr(colon + 1), "interval index");
  if (k < 0 || k > 61 || i < 1 || i > (std::int64_t{1} << k)) throw FormatError("interval '" + s + "' out of range");
  return {static_cast<int>(k), i};
}

std::pair<DyadicInterval, DyadicInterval> children(const DyadicInterval& i) { return {i.plus(), i.minus()}; }

std::vector<DyadicInterval> level_intervals(int k) {
  std::vector<DyadicInterval> out;
  out.reserve(std::size_t{1} << k);
  for (std::int64_t i = 1; i <= (std::int64_t{1} << k); ++i) out.emplace_back(k, i);
  return out;
}

std::vector<DyadicInterval> truncated_intervals(int d) {
  std::vector<DyadicInterval> out;
  for (int k = 0; k <= d; ++k)
    for (std::int64_t i = 1; i <= (std::int64_t{1} << k); ++i) out.emplace_back(k, i);
  return out;
}

std::vector<DyadicInterval> descendants_at(const DyadicInterval& i, int level) {
  if (level < i.level) throw std::invalid_argument("descendant level above interval");
  int s = level - i.level;
  std::vector<DyadicInterval> out;
  out.reserve(std::size_t{1} << s);
  std::int64_t first = ((i.index - 1) << s) + 1;
  for (std::int64_t j = 0; j < (std::int64_t{1} << s); ++j) out.emplace_back(level, first + j);
  return out;
}

std::string OmegaIndex::str() const { return std::to_string(copy) + "/" + interval.str(); }

OmegaIndex OmegaIndex::parse(const std::string& s) {
  auto slash = s.find('/');
  if (slash == std::string::npos) throw FormatError("index '" + s + "' is not of the form n/k:i");
  auto n = parse_int(s.substr(0, slash), "copy");
  if (n < 1 || n > 4096) throw FormatError("copy out of range in '" + s + "'");
  OmegaIndex o{static_cast<int>(n), DyadicInterval::parse(s.substr(slash + 1))};
  return o;
}

std::strong_ordering compare_index(const OmegaIndex& a, const OmegaIndex& b) {
  if (a.copy != b.copy) return a.copy <=> b.copy;
  return a.interval <=> b.interval;
}

std::strong_ordering compare_omega(const OmegaIndex& a, const OmegaIndex& b) {
  if (!a.valid()) throw std::invalid_argument("invalid omega index " + a.str());
  if (!b.valid()) throw std::invalid_argument("invalid omega index " + b.str());
  return compare_index(a, b);
}

std::vector<OmegaIndex> enumerate_truncated(int copies, const std::vector<int>& depths, std::int64_t cap) {
  if (copies < 0 || static_cast<int>(depths.size()) != copies)
    throw std::invalid_argument("need one depth per copy");
  std::int64_t total = 0;
  for (int d : depths) {
    if (d > 40) throw ResourceError("copy depth " + std::to_string(d) + " exceeds index cap");
    if (d >= 0) total += (std::int64_t{2} << d) - 1;
  }
  if (total > cap)
    throw ResourceError("truncation has " + std::to_string(total) + " indices, cap is " + std::to_string(cap));
  std::vector<OmegaIndex> out;
  out.reserve(static_cast<std::size_t>(total));
  for (int n = 1; n <= copies; ++n) {
    int d = depths[n - 1];
    for (int k = 0; k <= d; ++k)
      for (std::int64_t i = 1; i <= (std::int64_t{1} << k); ++i) out.push_back({n, DyadicInterval(k, i)});
  }
  return out;
}

std::vector<OmegaIndex> enumerate_standard(int copies, std::int64_t cap) {
  std::vector<int> depths(copies);
  for (int n = 1; n <= copies; ++n) depths[n - 1] = n - 1;
  return enumerate_truncated(copies, depths, cap);
}

std::vector<int> haar_values(const DyadicInterval& i, int resolution) {
  if (resolution < i.level + 1) throw std::invalid_argument("resolution too coarse for " + i.str());
  if (resolution > 30) throw ResourceError("resolution too fine");
  std::vector<int> v(std::size_t{1} << resolution, 0);
  int s = resolution - i.level;
  std::size_t half = std::size_t{1} << (s - 1);
  std::size_t start = static_cast<std::size_t>(i.index - 1) << s;
  for (std::size_t c = 0; c < half; ++c) {
    v[start + c] = 1;
    v[start + half + c] = -1;
  }
  return v;
}

}  // namespace haarfact
