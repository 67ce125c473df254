#include <cmath>

#include "doctest.h"
#include "haarfact/factorize.hpp"
#include "haarfact/generators.hpp"
#include "haarfact/random.hpp"

using namespace haarfact;

namespace {

OperatorMatrix scalar_operator(const BasisRegistry& reg, const Exponent& e, double lam) {
  return OperatorMatrix::diagonal(e, reg.basis(), Eigen::VectorXd::Constant(reg.dim(), lam));
}

DichotomyOptions small_dichotomy() {
  DichotomyOptions o;
  o.stage_copies = 3;
  o.final_copies = 2;
  return o;
}

}  // namespace

TEST_CASE("factorization constants") {
  auto k4 = paper_constants(4.0, 1.0, 0.25);
  CHECK(k4.pstar == 4.0);
  CHECK(k4.burkholder == 3.0);
  CHECK(k4.complementation == doctest::Approx(9.0 * std::pow(2.0, 1.5)));
  CHECK(k4.complementation == doctest::Approx(25.456).epsilon(1e-4));
  CHECK(k4.projection == doctest::Approx(50.912).epsilon(1e-4));
  CHECK(k4.large_diagonal == doctest::Approx(2.0 * 81.0 / 0.75 * std::pow(2.0, 1.5)));
  CHECK(k4.large_diagonal == doctest::Approx(610.94).epsilon(1e-4));
  CHECK(k4.rosenthal == doctest::Approx(21.208).epsilon(1e-4));
  auto k2 = paper_constants(2.0, 1.0, 0.25);
  CHECK(k2.burkholder == 1.0);
  CHECK(k2.complementation == 1.0);
  CHECK(k2.large_diagonal == doctest::Approx(2.0 / 0.75));
  // p and its conjugate share p*.
  CHECK(paper_constants(1.5, 1.0, 0.5).complementation == doctest::Approx(paper_constants(3.0, 1.0, 0.5).complementation));
}

TEST_CASE("large diagonal factorization of multiples of the identity") {
  Exponent e(2.0);
  auto src = BasisRegistry::standard(5);
  LargeDiagonalOptions o;
  auto w = factor_large_diagonal(OperatorMatrix::identity(e, src.basis()), BasisRegistry::standard(2), o);
  CHECK(w.reduction_bound == 0.0);
  CHECK(w.residual == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(w.norm_product <= w.paper_constant);
  CHECK(validate_witness(w, 200).ok);

  o.delta = 2.0;
  auto w2 = factor_large_diagonal(scalar_operator(src, e, 2.0), BasisRegistry::standard(2), o);
  CHECK(w2.residual <= 1e-14);
  CHECK(validate_witness(w2, 200).ok);
}

TEST_CASE("large diagonal factorization of a perturbed identity") {
  for (double p : {1.5, 2.0, 4.0}) {
    Exponent e(p);
    auto t = perturbed_identity(BasisRegistry::standard(6), e, 7, 0.05);
    LargeDiagonalOptions o;
    o.reduction.eps = 0.25;
    o.reduction.seed = 7;
    auto w = factor_large_diagonal(t, BasisRegistry::standard(2), o);
    CHECK(w.residual <= 0.15);
    CHECK(w.norm_product <= w.paper_constant);
    CHECK(w.paper_constant == doctest::Approx(paper_constants(p, 1.0, 0.25).large_diagonal));
    auto chk = validate_witness(w, 1000, 1);
    CHECK(chk.ok);
    CHECK(chk.max_ratio <= w.residual + 1e-9);
    // Norm-product accounting with ||j|| = ||j^{-1}|| = 1 and ||E|| at the projection constant.
    CHECK(w.a_bound == doctest::Approx(w.inverse_bound * projection_constant(e) / w.scale));
  }
}

TEST_CASE("witness validation catches tampering") {
  Exponent e(4.0);
  auto t = perturbed_identity(BasisRegistry::standard(6), e, 3, 0.05);
  auto w = factor_large_diagonal(t, BasisRegistry::standard(2), {});
  REQUIRE(validate_witness(w, 100).ok);
  auto bad = w;
  bad.a(0, 0) += 0.5;
  CHECK_FALSE(validate_witness(bad, 100).ok);
  auto cheap = w;
  cheap.norm_product = w.paper_constant * 2.0;
  CHECK_FALSE(validate_witness(cheap, 100).ok);
}

TEST_CASE("dichotomy boundary cases") {
  Exponent e(2.0);
  auto src = BasisRegistry::standard(6);
  auto zero = primary_dichotomy(scalar_operator(src, e, 0.0), small_dichotomy());
  CHECK(zero.branch == "I-T");
  CHECK(zero.lambda0 == 0.0);
  CHECK(zero.residual <= 1e-14);
  CHECK(validate_witness(zero, 200).ok);

  auto one = primary_dichotomy(scalar_operator(src, e, 1.0), small_dichotomy());
  CHECK(one.branch == "T");
  CHECK(one.lambda0 == 1.0);
  CHECK(one.residual <= 1e-14);

  auto half = primary_dichotomy(scalar_operator(src, e, 0.5), small_dichotomy());
  CHECK(half.branch == "T");
  CHECK(half.lambda0 == 0.5);
  CHECK(half.scale == 0.5);
  CHECK(validate_witness(half, 200).ok);
}

TEST_CASE("dichotomy on seeded operators with entries in [0, 1]") {
  Exponent e(2.0);
  for (std::uint64_t s = 0; s < 3; ++s) {
    RandomOperatorSpec spec;
    spec.diag_lo = 0.0;
    spec.diag_hi = 1.0;
    spec.offdiag_budget = 0.05;
    spec.nonnegative = true;
    auto t = random_operator(BasisRegistry::standard(7), e, 100 + s, spec);
    DichotomyOptions o;
    o.stage_copies = 5;
    o.diagonal.seed = o.scalar.seed = s;
    auto w = primary_dichotomy(t, o);
    CHECK((w.branch == "T" || w.branch == "I-T"));
    CHECK((w.branch == "T") == (std::abs(w.lambda0) >= 0.5));
    CHECK(w.has_lambda0);
    CHECK(w.lambda0_witness.validate(t));
    CHECK(w.norm_product <= w.paper_constant);
    CHECK(validate_witness(w, 300, s).ok);
  }
}
