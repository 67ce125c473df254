#include "haarfact/factorize.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

#include "haarfact/errors.hpp"
#include "haarfact/random.hpp"
#include "haarfact/xpw.hpp"

namespace haarfact {

Constants paper_constants(double p, double delta, double eps) {
  Exponent e(p);
  Constants c;
  c.p = p;
  c.pstar = e.pstar;
  c.delta = delta;
  c.eps = eps;
  c.burkholder = e.burkholder();
  double b2 = c.burkholder * c.burkholder;
  double tail = std::pow(e.pstar / 2.0, 1.5);
  c.complementation = b2 * tail;
  c.projection = 2.0 * b2 * tail;
  c.large_diagonal = 2.0 * b2 * b2 / (delta * (1.0 - eps)) * tail;
  c.dichotomy = 4.0 / (1.0 - eps) * b2 * tail;
  c.rosenthal = p > 2.0 ? rosenthal_projection_constant(p) : 0.0;
  return c;
}

namespace {

// j: target coefficients to source coefficients.
Eigen::MatrixXd embedding(const BlockFamily& fam, const OperatorMatrix& src) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(src.dim(), static_cast<Eigen::Index>(fam.blocks.size()));
  for (std::size_t s = 0; s < fam.blocks.size(); ++s) {
    const auto& b = fam.blocks[s];
    for (const auto& k : b.terms) j(src.position({b.host_copy, k.interval}), static_cast<Eigen::Index>(s)) = k.sign;
  }
  return j;
}

// j^{-1} E: source coefficients to target coefficients.
Eigen::MatrixXd coembedding(const BlockFamily& fam, const OperatorMatrix& src) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fam.blocks.size()), src.dim());
  for (std::size_t s = 0; s < fam.blocks.size(); ++s) {
    const auto& b = fam.blocks[s];
    double mi = b.target.interval.measure_double();
    for (const auto& k : b.terms)
      m(static_cast<Eigen::Index>(s), src.position({b.host_copy, k.interval})) =
          k.sign * k.interval.measure_double() / mi;
  }
  return m;
}

// The identity family on the whole source: E is the identity.
bool identity_family(const BlockFamily& fam, const OperatorMatrix& src) {
  if (static_cast<int>(fam.blocks.size()) != src.dim()) return false;
  for (const auto& b : fam.blocks)
    if (b.terms.size() != 1 || b.host_copy != b.target.copy || b.terms[0].interval != b.target.interval ||
        b.terms[0].sign != 1)
      return false;
  return true;
}

Eigen::MatrixXd apply_dense(const OperatorMatrix& x, const Eigen::MatrixXd& m) {
  if (x.diagonal_storage()) return x.diagonal().asDiagonal() * m;
  return x.dense() * m;
}

void certify_product(FactorizationWitness& w, const BasisRegistry& target) {
  Eigen::MatrixXd prod = w.a * apply_dense(w.factored, w.b);
  prod -= Eigen::MatrixXd::Identity(prod.rows(), prod.cols());
  auto cr = certify_residual(prod, target, w.factored.exponent());
  w.residual = cr.certified;
  w.residual_method = cr.method;
}

}  // namespace

FactorizationWitness factor_large_diagonal(const OperatorMatrix& t, const BasisRegistry& target,
                                           const LargeDiagonalOptions& opts) {
  const double eps = opts.reduction.eps;
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0, 1)");
  if (!(opts.delta > 0.0)) throw std::invalid_argument("delta must be positive");
  const Exponent& e = t.exponent();
  Eigen::VectorXd d = t.diagonal();
  for (int i = 0; i < t.dim(); ++i)
    if (!(std::abs(d[i]) >= opts.delta))
      throw std::invalid_argument("diagonal entry " + std::to_string(d[i]) + " at " + t.basis()[i].str() +
                                  " is below delta");
  Eigen::VectorXd sdiag = d.cwiseInverse();
  OperatorMatrix ts = t.diagonal_storage()
                          ? OperatorMatrix::diagonal(e, t.basis(), d.cwiseProduct(sdiag))
                          : OperatorMatrix(e, t.basis(), t.dense() * sdiag.asDiagonal());

  FactorizationWitness w;
  w.kind = "large-diagonal";
  w.branch = "T";
  w.delta = opts.delta;
  w.eps = eps;
  w.factored = t;
  w.target_basis = target.basis();
  w.certificate = reduce_to_diagonal(ts, target, opts.reduction);
  const auto& cert = w.certificate;

  double dev = 0.0;
  for (double r : cert.target_diagonal) dev = std::max(dev, std::abs(r - 1.0));
  w.reduction_bound = cert.certified() + e.burkholder() * dev;
  auto inv = neumann_invert(OperatorMatrix(e, target.basis(), cert.compressed), w.reduction_bound);
  w.inverse_bound = inv.inverse_norm_bound;

  Eigen::MatrixXd jm = embedding(cert.family, ts);
  w.a = inv.inverse.dense() * coembedding(cert.family, ts);
  w.b = sdiag.asDiagonal() * jm;

  const double pc = projection_constant(e);
  bool trivial = identity_family(cert.family, ts);
  double e_bound = trivial ? 1.0 : pc;
  bool scalar_s = (sdiag.array() == sdiag[0]).all();
  double s_bound = scalar_s ? std::abs(sdiag[0]) : e.burkholder() * e.burkholder() * sdiag.cwiseAbs().maxCoeff();
  w.a_bound = w.inverse_bound * e_bound;
  w.b_bound = s_bound;
  w.norm_product = w.a_bound * w.b_bound;
  w.paper_constant = paper_constants(e.p, opts.delta, eps).large_diagonal;
  if (trivial) w.notes.push_back("identity family: ||E|| = 1");
  if (scalar_s) w.notes.push_back("S is scalar: ||S|| = |s|");
  certify_product(w, target);
  return w;
}

FactorizationWitness primary_dichotomy(const OperatorMatrix& t, const DichotomyOptions& opts) {
  if (!(opts.eps > 0.0 && opts.eps < 1.0)) throw std::invalid_argument("eps must lie in (0, 1)");
  const Exponent& e = t.exponent();
  const double pc = projection_constant(e);
  auto stage = BasisRegistry::standard(opts.stage_copies);
  auto final_reg = BasisRegistry::standard(opts.final_copies);

  // The first split relies on the directly recomputed composite bound; the second makes D eps1 + eps2 < eps/2.
  const std::vector<std::pair<double, double>> splits = {{opts.eps / 10.0, 0.4 * opts.eps},
                                                         {opts.eps / (4.0 * pc), opts.eps / 4.0}};
  std::optional<ReductionCertificate> found;
  std::vector<std::string> attempts;
  for (const auto& [e1, e2] : splits) {
    std::string tag = "eps1 " + std::to_string(e1) + ", eps2 " + std::to_string(e2);
    try {
      DiagonalOptions dopt = opts.diagonal;
      dopt.eps = e1;
      auto c1 = reduce_to_diagonal(t, stage, dopt);
      ScalarOptions sopt = opts.scalar;
      sopt.eps = e2;
      auto c2 = reduce_to_scalar_stitched(c1.target_operator(), opts.final_copies, sopt);
      auto comp = compose_certificates(c1, c2, pc);
      if (comp.certified() < opts.eps / 2.0) {
        comp.attempts.insert(comp.attempts.begin(), attempts.begin(), attempts.end());
        found = std::move(comp);
        break;
      }
      attempts.push_back(tag + ": composite bound " + std::to_string(comp.certified()) + " is not below eps/2");
    } catch (const InfeasibleError& ex) {
      attempts.push_back(tag + ": " + ex.what());
    }
  }
  if (!found) {
    std::string msg = "composite reduction failed";
    for (const auto& a : attempts) msg += "\n  " + a;
    throw InfeasibleError(msg);
  }
  auto& comp = *found;

  FactorizationWitness w;
  w.kind = "dichotomy";
  w.eps = opts.eps;
  w.target_basis = final_reg.basis();
  w.has_lambda0 = true;
  w.lambda0 = comp.lambda0;
  w.lambda0_witness = comp.lambda0_witness;
  if (std::abs(w.lambda0) >= 0.5) {
    w.branch = "T";
    w.factored = t;
    w.scale = w.lambda0;
  } else {
    w.branch = "I-T";
    w.factored = t.diagonal_storage()
                     ? OperatorMatrix::diagonal(e, t.basis(), Eigen::VectorXd::Ones(t.dim()) - t.diagonal())
                     : OperatorMatrix(e, t.basis(), Eigen::MatrixXd::Identity(t.dim(), t.dim()) - t.dense());
    w.scale = 1.0 - w.lambda0;
  }
  w.reduction_bound = comp.certified() / std::abs(w.scale);
  auto cx = compress(w.factored, comp.family);
  auto inv = neumann_invert(OperatorMatrix(e, final_reg.basis(), cx.matrix / w.scale), w.reduction_bound);
  w.inverse_bound = inv.inverse_norm_bound;
  w.a = inv.inverse.dense() * coembedding(comp.family, t) / w.scale;
  w.b = embedding(comp.family, t);
  bool trivial = identity_family(comp.family, t);
  w.a_bound = w.inverse_bound * (trivial ? 1.0 : pc) / std::abs(w.scale);
  w.b_bound = 1.0;
  w.norm_product = w.a_bound * w.b_bound;
  w.paper_constant = paper_constants(e.p, 1.0, opts.eps).dichotomy;
  w.certificate = std::move(comp);
  w.notes.push_back(std::string("branch ") + w.branch + " (rule |lambda_0| >= 1/2 takes T)");
  certify_product(w, final_reg);
  return w;
}

WitnessCheck validate_witness(const FactorizationWitness& w, int samples, std::uint64_t seed) {
  WitnessCheck c;
  auto fail = [&](const std::string& m) {
    c.ok = false;
    c.failures.push_back(m);
  };
  BasisRegistry target = BasisRegistry::from_basis(w.target_basis);
  const Exponent& e = w.factored.exponent();
  const auto n = static_cast<Eigen::Index>(w.target_basis.size());
  if (w.a.rows() != n || w.b.cols() != n || w.a.cols() != w.factored.dim() || w.b.rows() != w.factored.dim()) {
    fail("factor shapes do not match");
    return c;
  }
  Eigen::MatrixXd atb = w.a * apply_dense(w.factored, w.b);
  for (int s = 0; s < samples; ++s) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(s));
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = gaussian(rng);
    Eigen::VectorXd u = atb * v - v;
    double den = lp_norm(realize(v, target), e);
    if (den == 0.0) continue;
    double num = u.isZero(0.0) ? 0.0 : lp_norm(realize(u, target), e);
    c.max_ratio = std::max(c.max_ratio, num / den);
  }
  if (!(c.max_ratio <= w.residual + 1e-9)) fail("sampled residual exceeds the certified residual");
  if (!(w.norm_product <= w.paper_constant)) fail("norm product exceeds the constant");
  if (!(w.reduction_bound < 1.0)) fail("reduction bound not below 1");
  if (w.has_lambda0) {
    if (!w.lambda0_witness.validate(w.certificate.source) || w.lambda0_witness.value != w.lambda0)
      fail("lambda_0 witness does not validate");
    bool big = std::abs(w.lambda0) >= 0.5;
    if ((w.branch == "T") != big) fail("branch does not follow the |lambda_0| >= 1/2 rule");
  }
  return c;
}

}  // namespace haarfact
