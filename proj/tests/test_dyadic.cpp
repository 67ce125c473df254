#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "haarfact/dyadic.hpp"

using namespace haarfact;

TEST_CASE("dyadic arithmetic is exact") {
  Dyadic half(1, 1), quarter(1, 2);
  CHECK(half + quarter == Dyadic(3, 2));
  CHECK(half - half == Dyadic());
  CHECK(half * half == quarter);
  CHECK(Dyadic(4, 3) == half);  // normalized
  CHECK(Dyadic(4, 3).num() == 1);
  CHECK(Dyadic(4, 3).exp() == 1);
  CHECK(quarter < half);
  CHECK((-half) < Dyadic());
  CHECK(Dyadic(3, 2).to_double() == 0.75);
}

TEST_CASE("children halve the interval") {
  DyadicInterval root(0, 1);
  auto [a, b] = children(root);
  CHECK(a == DyadicInterval(1, 1));
  CHECK(b == DyadicInterval(1, 2));
  CHECK(a.left() == Dyadic());
  CHECK(a.right() == Dyadic(1, 1));

  auto [c, d] = children(DyadicInterval(1, 2));
  CHECK(c.left() == Dyadic(1, 1));
  CHECK(c.right() == Dyadic(3, 2));
  CHECK(d.left() == Dyadic(3, 2));
  CHECK(d.right() == Dyadic(1, 0));

  DyadicInterval deep(30, 12345);
  auto [e, f] = children(deep);
  CHECK(e.level == 31);
  CHECK(e.index == 2 * 12345 - 1);
  CHECK(f.index == 2 * 12345);
  CHECK(e.parent() == deep);
  CHECK(f.parent() == deep);
}

TEST_CASE("child measures are exactly half") {
  for (int k = 0; k <= 6; ++k)
    for (auto& i : level_intervals(k)) {
      auto [a, b] = children(i);
      CHECK(a.measure() + a.measure() == i.measure());
      CHECK(b.measure() == a.measure());
      CHECK(i.contains(a));
      CHECK(a.disjoint(b));
    }
}

TEST_CASE("interval validation and parsing") {
  CHECK_THROWS(DyadicInterval(1, 3));
  CHECK_THROWS(DyadicInterval(2, 0));
  CHECK_THROWS(DyadicInterval(-1, 1));
  CHECK(DyadicInterval::parse("3:5") == DyadicInterval(3, 5));
  CHECK(DyadicInterval(3, 5).str() == "3:5");
  CHECK(OmegaIndex::parse("2/1:2") == OmegaIndex{2, DyadicInterval(1, 2)});
  CHECK(OmegaIndex{2, DyadicInterval(1, 2)}.str() == "2/1:2");
  CHECK_THROWS(OmegaIndex::parse("2:1"));
  CHECK(OmegaIndex{2, DyadicInterval(1, 1)}.valid());
  CHECK_FALSE(OmegaIndex{1, DyadicInterval(1, 1)}.valid());
  CHECK_THROWS(compare_omega({1, DyadicInterval(1, 1)}, {2, DyadicInterval(0, 1)}));
}

TEST_CASE("omega order examples") {
  OmegaIndex a{1, DyadicInterval(0, 1)}, b{2, DyadicInterval(0, 1)}, c{2, DyadicInterval(1, 1)},
      d{2, DyadicInterval(1, 2)};
  CHECK(compare_omega(a, b) < 0);
  CHECK(compare_omega(b, c) < 0);
  CHECK(compare_omega(c, d) < 0);
  CHECK(compare_omega(d, a) > 0);
  CHECK(compare_omega(c, c) == 0);
}

TEST_CASE("enumeration lengths") {
  CHECK(enumerate_truncated(1, {0}).size() == 1);
  CHECK(enumerate_truncated(2, {0, 1}).size() == 4);
  CHECK(enumerate_standard(3).size() == 11);
  CHECK(enumerate_truncated(3, {-1, 1, 2}).size() == 10);
  CHECK(enumerate_truncated(2, {0, 2}).size() == 8);  // deep host copy
  CHECK_THROWS(enumerate_standard(30, 1000));
}

TEST_CASE("standard enumeration against an independent oracle") {
  // Oracle: all (n, k, i) with k < n, sorted by (n, k, i).
  for (int copies = 1; copies <= 6; ++copies) {
    std::vector<std::tuple<int, int, std::int64_t>> oracle;
    for (int n = 1; n <= copies; ++n)
      for (int k = 0; k < n; ++k)
        for (std::int64_t i = 1; i <= (std::int64_t{1} << k); ++i) oracle.emplace_back(n, k, i);
    std::sort(oracle.begin(), oracle.end());
    auto got = enumerate_standard(copies);
    REQUIRE(got.size() == oracle.size());
    for (std::size_t j = 0; j < got.size(); ++j) {
      CHECK(got[j].copy == std::get<0>(oracle[j]));
      CHECK(got[j].interval.level == std::get<1>(oracle[j]));
      CHECK(got[j].interval.index == std::get<2>(oracle[j]));
    }
    CHECK(got.size() == (std::size_t{1} << (copies + 1)) - 2 - copies);
  }
}

TEST_CASE("enumeration is strictly increasing") {
  auto e = enumerate_truncated(4, {0, 1, 2, 2});
  for (std::size_t j = 1; j < e.size(); ++j) CHECK(compare_omega(e[j - 1], e[j]) < 0);
  auto deep = enumerate_truncated(3, {0, 4, 1});
  for (std::size_t j = 1; j < deep.size(); ++j) CHECK(compare_index(deep[j - 1], deep[j]) < 0);
}

TEST_CASE("haar value examples") {
  CHECK(haar_values(DyadicInterval(0, 1), 1) == std::vector<int>{1, -1});
  CHECK(haar_values(DyadicInterval(1, 1), 2) == std::vector<int>{1, -1, 0, 0});
  CHECK(haar_values(DyadicInterval(1, 2), 3) == std::vector<int>{0, 0, 0, 0, 1, 1, -1, -1});
  CHECK_THROWS(haar_values(DyadicInterval(2, 1), 2));
}

TEST_CASE("haar refinement, mean zero and square integral") {
  for (int k = 0; k <= 4; ++k)
    for (auto& i : level_intervals(k))
      for (int l = k + 1; l <= 7; ++l) {
        auto v = haar_values(i, l);
        auto fine = haar_values(i, l + 1);
        for (std::size_t c = 0; c < v.size(); ++c) {
          CHECK(fine[2 * c] == v[c]);
          CHECK(fine[2 * c + 1] == v[c]);
        }
        // Integer counts times the cell measure 2^{-l}: sum h = 0, sum h^2 = 2^{l-k}.
        long s = std::accumulate(v.begin(), v.end(), 0L);
        long s2 = 0;
        for (int x : v) s2 += x * x;
        CHECK(s == 0);
        CHECK(Dyadic(s2, l) == i.measure());
      }
}

TEST_CASE("descendants and truncated intervals") {
  auto d = descendants_at(DyadicInterval(1, 2), 3);
  REQUIRE(d.size() == 4);
  CHECK(d.front() == DyadicInterval(3, 5));
  CHECK(d.back() == DyadicInterval(3, 8));
  auto t = truncated_intervals(2);
  CHECK(t.size() == 7);
  CHECK(std::is_sorted(t.begin(), t.end()));
  CHECK(DyadicInterval(2, 3).order_key() == 5);
}
