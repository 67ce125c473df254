#include <cmath>

#include "doctest.h"
#include "haarfact/opalg.hpp"
#include "haarfact/generators.hpp"
#include "haarfact/random.hpp"
#include "haarfact/reduction.hpp"

using namespace haarfact;

namespace {

// Two level-0 copies: a 2-dimensional truncation with equal measures.
BasisRegistry two_roots() { return BasisRegistry({{1, 0}, {2, 0}}); }

Eigen::VectorXd random_vector(int n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = gaussian(rng);
  return v;
}

}  // namespace

TEST_CASE("apply examples") {
  Exponent e(2.0);
  auto reg = two_roots();
  Eigen::VectorXd v(2);
  v << 3.0, -1.5;
  CHECK(apply(OperatorMatrix::identity(e, reg.basis()), v) == v);
  CHECK(apply(OperatorMatrix::diagonal(e, reg.basis(), Eigen::Vector2d(2.0, 2.0)), v) == 2.0 * v);
  Eigen::Matrix2d m;
  m << 0, 1, 0, 0;
  Eigen::VectorXd e2 = Eigen::Vector2d(0, 1);
  CHECK(apply(OperatorMatrix(e, reg.basis(), m), e2) == Eigen::VectorXd(Eigen::Vector2d(1, 0)));
}

TEST_CASE("compose agrees with repeated apply") {
  auto reg = BasisRegistry::standard(3);
  Exponent e(4.0);
  auto s = random_operator(reg, e, 1, {});
  auto t = random_operator(reg, e, 2, {});
  auto st = compose(s, t);
  for (std::uint64_t k = 0; k < 10; ++k) {
    auto v = random_vector(reg.dim(), k);
    Eigen::VectorXd a = apply(st, v), b = apply(s, apply(t, v));
    CHECK((a - b).norm() <= 1e-10 * std::max(1.0, b.norm()));
  }
}

TEST_CASE("opnorm lower examples") {
  auto reg = BasisRegistry::standard(3);
  for (double p : {1.5, 2.0, 4.0}) {
    Exponent e(p);
    CHECK(opnorm_lower(OperatorMatrix::identity(e, reg.basis()), 4, 1) == 1.0);
    CHECK(opnorm_lower(OperatorMatrix(e, reg.basis(), Eigen::MatrixXd::Zero(reg.dim(), reg.dim())), 4, 1) == 0.0);
    Eigen::Matrix2d d = Eigen::Vector2d(2.0, -3.0).asDiagonal();
    CHECK(weighted_lp_opnorm_lower(d, Eigen::Vector2d(0.5, 0.5), p, 8, 3) == doctest::Approx(3.0).epsilon(1e-9));
  }
}

TEST_CASE("unconditional upper bound examples") {
  auto reg = two_roots();
  CHECK(opnorm_upper_unconditional(OperatorMatrix::diagonal(Exponent(2.0), reg.basis(), Eigen::Vector2d(-0.7, -0.7))) ==
        doctest::Approx(0.7));
  CHECK(opnorm_upper_unconditional(OperatorMatrix::diagonal(Exponent(4.0), reg.basis(), Eigen::Vector2d(1.0, -2.0))) ==
        doctest::Approx(18.0));
  CHECK(opnorm_upper_unconditional(OperatorMatrix::diagonal(Exponent(4.0), reg.basis(), Eigen::Vector2d::Zero())) == 0.0);
}

TEST_CASE("lower bound never exceeds the sound upper bounds") {
  auto reg = BasisRegistry::standard(3);
  for (double p : {1.5, 2.0, 4.0}) {
    Exponent e(p);
    for (std::uint64_t s = 0; s < 4; ++s) {
      auto d = random_diagonal(reg, e, s, -1.0, 1.0);
      CHECK(opnorm_lower(d, 3, s) <= opnorm_upper_unconditional(d) + 1e-9);
      auto t = random_operator(reg, e, s, {});
      CHECK(opnorm_lower(t, 3, s) <= opnorm_upper(t) + 1e-9);
    }
  }
}

TEST_CASE("entrywise bound of a permutation") {
  // T h_{2/0:1} = h_{1/0:1}: one entry, |I|^{-1/p}|J|^{1/p} = 1.
  auto reg = two_roots();
  Eigen::Matrix2d m;
  m << 0, 1, 0, 0;
  CHECK(opnorm_upper_entrywise(OperatorMatrix(Exponent(4.0), reg.basis(), m)) == 1.0);
  // T h_I = h_J with |I| = 1/2, |J| = 1: ratio of norms |J|^{1/p} / |I|^{1/p} = sqrt 2 at p = 2.
  auto reg3 = BasisRegistry({{2, 1}});
  Eigen::Matrix3d n = Eigen::Matrix3d::Zero();
  n(0, 1) = 1.0;  // column 2/1:1 into row 2/0:1
  CHECK(opnorm_upper_entrywise(OperatorMatrix(Exponent(2.0), reg3.basis(), n)) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("neumann inverse examples") {
  Exponent e(2.0);
  auto reg = two_roots();
  auto inv = neumann_invert(OperatorMatrix::identity(e, reg.basis()), 0.0);
  CHECK(inv.inverse.dense() == Eigen::MatrixXd::Identity(2, 2));
  CHECK(inv.inverse_norm_bound == 1.0);

  auto a = OperatorMatrix::diagonal(e, reg.basis(), Eigen::Vector2d(1.1, 0.9));
  auto r = neumann_invert(a, 0.1);
  CHECK(r.inverse.entry(0, 0) == doctest::Approx(1.0 / 1.1));
  CHECK(r.inverse.entry(1, 1) == doctest::Approx(1.0 / 0.9));
  CHECK(r.inverse_norm_bound == doctest::Approx(1.0 / 0.9));
  CHECK(std::abs(r.inverse.entry(1, 1)) == doctest::Approx(r.inverse_norm_bound));  // attained

  CHECK_THROWS(neumann_invert(a, 1.0));
}

TEST_CASE("neumann inverse is certified close to an inverse") {
  auto reg = BasisRegistry::standard(3);
  for (double p : {1.5, 2.0, 4.0}) {
    Exponent e(p);
    auto a = perturbed_identity(reg, e, 11, 0.1);
    auto r = neumann_invert(a, opnorm_upper_entrywise(a, true));
    Eigen::MatrixXd d = a.dense() * r.inverse.dense() - Eigen::MatrixXd::Identity(reg.dim(), reg.dim());
    CHECK(certify_residual(d, reg, e).certified <= 1e-8);
  }
}

TEST_CASE("diagonal average examples") {
  Exponent e(2.0);
  auto reg = BasisRegistry::standard(2);
  Eigen::VectorXd d(4);
  d << 1.0, 2.0, 6.0, 0.0;
  auto t = OperatorMatrix::diagonal(e, reg.basis(), d);
  auto b = reg.basis();
  CHECK(diagonal_average(t, {b[0], b[1], b[2]}).value == 3.0);
  CHECK(diagonal_average(t, {b[0], b[3]}).value == 0.5);
  CHECK(diagonal_average(t, {b[2]}).value == 6.0);
  auto w = diagonal_average(t, {b[1], b[2]});
  CHECK(w.validate(t));
  w.value += 1e-6;
  CHECK_FALSE(w.validate(t));
  auto lam = OperatorMatrix::diagonal(e, reg.basis(), Eigen::VectorXd::Constant(4, 0.3));
  CHECK(diagonal_average(lam, b).value == 0.3);
}

TEST_CASE("diagonal entries match the pairing definition") {
  auto reg = BasisRegistry::standard(3);
  auto t = random_operator(reg, Exponent(4.0), 5, {});
  CHECK(t.verify_diagonal() <= 1e-12);
}
