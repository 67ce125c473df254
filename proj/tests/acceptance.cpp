// Acceptance run: one PASS/FAIL line per criterion A1-A10. Exits 1 if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "haarfact/errors.hpp"
#include "haarfact/factorize.hpp"
#include "haarfact/generators.hpp"
#include "haarfact/random.hpp"
#include "haarfact/serialize.hpp"

using namespace haarfact;

namespace {

// Pinned tolerances.
constexpr double kMeanTol = 1e-12;
constexpr double kClosedFormTol = 1e-10;
constexpr double kWitnessTol = 1e-12;
constexpr double kSampleSlack = 1e-9;
constexpr double kBurkholderSlack = 1e-9;
constexpr double kA6Residual = 0.15;
constexpr double kA8Slack = 1e-9;

const std::vector<double> kExponents{1.5, 2.0, 4.0};

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;     // failures first, then figures
  std::vector<std::string> payloads;  // canonical artifacts, compared by A10

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.insert(notes.begin(), "failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

std::string pstr(double p) { return "p=" + fmt(p); }

// ---------------------------------------------------------------- A1

Outcome a1() {
  Outcome o;
  auto reg = BasisRegistry::standard(5);
  const int host = 5, depth = 4;
  int cases = 0;
  double worst_mean = 0.0, worst_closed = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Exponent e(kExponents[s % 3]);
    int level = 1 + static_cast<int>(s % depth);
    int count = 1 + static_cast<int>(derive_seed(7, s) % static_cast<std::uint64_t>(std::min(10, 1 << level)));
    auto spec = random_block_spec(host, level, count, derive_seed(1, s));
    auto f = random_grid_function(reg.grid(), derive_seed(2, s));
    auto t = random_operator(reg, e, derive_seed(3, s), {});
    for (const auto& r : {exact_moments_Y(spec, f, reg, e), exact_moments_W(spec, f, reg, e),
                          exact_moments_Z(spec, t, opnorm_upper(t))}) {
      ++cases;
      worst_mean = std::max(worst_mean, std::abs(r.mean));
      worst_closed = std::max(worst_closed, std::abs(r.variance - r.closed_form_variance));
      o.require(r.mode == "exact", "case " + std::to_string(s) + " not enumerated");
      o.require(r.variance <= r.bound, "case " + std::to_string(s) + " " + to_string(r.kind) + " variance " +
                                           fmt(r.variance) + " above bound " + fmt(r.bound));
    }
  }
  o.require(worst_mean <= kMeanTol, "mean " + fmt(worst_mean));
  o.require(worst_closed <= kClosedFormTol, "closed form gap " + fmt(worst_closed));
  o.note(std::to_string(cases) + " moments, max |mean| " + fmt(worst_mean) + ", max closed-form gap " + fmt(worst_closed));
  return o;
}

// ---------------------------------------------------------------- A2

Outcome a2() {
  Outcome o;
  int checked = 0;
  for (int m = 0; m <= 2; ++m) {
    auto level = level_intervals(m);
    const std::uint64_t subsets = std::uint64_t{1} << level.size();
    for (int k = m + 1; k <= m + 3; ++k)
      for (std::uint64_t mask = 1; mask < subsets; ++mask) {
        std::vector<DyadicInterval> b;
        for (std::size_t j = 0; j < level.size(); ++j)
          if (mask >> j & 1) b.push_back(level[j]);
        auto rng = make_rng(derive_seed(static_cast<std::uint64_t>(m * 16 + k), mask));
        std::vector<double> d(std::size_t{1} << k);
        double upper = 0.0;
        for (auto& x : d) upper = std::max(upper, std::abs(x = uniform(rng, -1.0, 1.0)));
        auto r = lambda_pm_moments(d, k, b, upper);
        ++checked;
        std::string id = "m=" + std::to_string(m) + " k=" + std::to_string(k) + " mask=" + std::to_string(mask);
        o.require(std::abs(r.mean_plus - r.expected_mean) <= kMeanTol &&
                      std::abs(r.mean_minus - r.expected_mean) <= kMeanTol,
                  id + " mean");
        o.require(r.var_plus <= r.bound && r.var_minus <= r.bound, id + " variance bound");
      }
  }
  o.note(std::to_string(checked) + " interval sets");
  return o;
}

// ---------------------------------------------------------------- A3

ReductionCertificate a3_certificate(double p) {
  Exponent e(p);
  RandomOperatorSpec spec;
  spec.norm_upper = 2.0;
  auto t = random_operator(BasisRegistry::standard(7), e, 3, spec);
  DiagonalOptions opts;
  opts.eps = 0.25;
  opts.seed = 3;
  return reduce_to_diagonal(t, BasisRegistry::standard(3), opts);
}

void check_witnesses(Outcome& o, const ReductionCertificate& c, const std::string& id) {
  double worst = 0.0;
  for (const auto& w : c.witnesses) worst = std::max(worst, w.deviation(c.source));
  for (std::size_t i = 0; i < c.witnesses.size(); ++i)
    worst = std::max(worst, std::abs(c.witnesses[i].value - c.target_diagonal[i]));
  o.require(c.witnesses.size() == c.target_diagonal.size() && worst <= kWitnessTol,
            id + " witness deviation " + fmt(worst));
}

Outcome a3() {
  Outcome o;
  for (double p : kExponents) {
    auto id = pstr(p);
    auto c = a3_certificate(p);
    o.require(opnorm_upper(c.source) <= 2.0, id + " ||T|| upper above 2");
    o.require(c.target_registry().dim() == 11, id + " target dimension");
    o.require(c.residual.column_sum < 0.25, id + " column sum " + fmt(c.residual.column_sum));
    auto d = check_distributional_copy(c.family, c.target_registry());
    o.require(d.pass && d.exact, id + " distributional copy: " + d.message);
    check_witnesses(o, c, id);
    auto v = validate_certificate(c);
    o.require(v.ok, id + " validation: " + (v.failures.empty() ? "" : v.failures.front()));
    o.note(id + " column sum " + fmt(c.residual.column_sum) + " schedule " + std::to_string(c.schedule.front()) +
           ".." + std::to_string(c.schedule.back()));
    o.payloads.push_back(payload(to_json(c)));
  }
  return o;
}

// ---------------------------------------------------------------- A4

ReductionCertificate a4_certificate(double p) {
  Exponent e(p);
  auto t = random_diagonal(BasisRegistry({{12, 11}}), e, 4, 0.0, 1.0);
  ScalarOptions opts;
  opts.eps = 0.3;
  opts.seed = 4;
  return reduce_to_scalar_finite(t, 3, opts);
}

Outcome a4() {
  Outcome o;
  for (double p : kExponents) {
    auto id = pstr(p);
    Exponent e(p);
    auto c = a4_certificate(p);
    o.require(c.lambda0_witness.validate(c.source, kWitnessTol) && c.lambda0_witness.value == c.lambda0,
              id + " lambda_0 witness");
    double spread = 0.0;
    for (const auto& w : c.compressed_witnesses) spread = std::max(spread, std::abs(w.value - c.lambda0));
    o.require(!c.compressed_witnesses.empty() && spread < 0.3, id + " |lambda_I - lambda_0| " + fmt(spread));
    o.require(c.certified() <= (e.pstar - 1.0) * 0.3, id + " residual " + fmt(c.certified()));
    auto v = validate_certificate(c);
    o.require(v.ok, id + " validation: " + (v.failures.empty() ? "" : v.failures.front()));
    o.note(id + " lambda_0 " + fmt(c.lambda0) + " residual " + fmt(c.certified()));
    o.payloads.push_back(payload(to_json(c)));

    auto reg = BasisRegistry({{12, 11}});
    auto lam = OperatorMatrix::diagonal(e, reg.basis(), Eigen::VectorXd::Constant(reg.dim(), 0.7));
    auto s = reduce_to_scalar_finite(lam, 3, {});
    o.require(s.certified() == 0.0 && s.lambda0 == 0.7, id + " lambda I");
  }
  return o;
}

// ---------------------------------------------------------------- A5

Outcome a5() {
  Outcome o;
  for (double p : kExponents) {
    auto id = pstr(p);
    Exponent e(p);
    RandomOperatorSpec spec;
    spec.norm_upper = 2.0;
    auto t = random_operator(BasisRegistry::standard(7), e, 5, spec);
    DiagonalOptions dopts;
    dopts.eps = 0.05;
    dopts.seed = 5;
    auto c1 = reduce_to_diagonal(t, BasisRegistry::standard(5), dopts);
    ScalarOptions sopts;
    sopts.eps = 0.3;
    sopts.seed = 5;
    auto c2 = reduce_to_scalar_stitched(c1.target_operator(), 2, sopts);
    const double d = projection_constant(e);
    auto comp = compose_certificates(c1, c2, d);
    // Recompute the column sum from the composite compression, independent of the recorded value.
    Eigen::MatrixXd delta = comp.compressed - comp.target_operator().dense();
    auto direct = certify_residual(delta, comp.target_registry(), e);
    // eps1, eps2 are the stages' column-sum bounds, so both sides are the same kind of bound.
    const double bound = d * c1.residual.column_sum + c2.residual.column_sum;
    o.require(direct.column_sum <= bound, id + " direct " + fmt(direct.column_sum) + " > " + fmt(bound));
    o.require(comp.certified() <= comp.transitivity_bound, id + " certified above the recorded transitivity bound");
    o.require(validate_certificate(comp).ok, id + " composite validation");
    o.note(id + " direct " + fmt(direct.column_sum) + " <= D eps1 + eps2 = " + fmt(bound));
    o.payloads.push_back(payload(to_json(comp)));
  }
  return o;
}

// ---------------------------------------------------------------- A6

Outcome a6() {
  Outcome o;
  for (double p : kExponents) {
    auto id = pstr(p);
    Exponent e(p);
    auto t = perturbed_identity(BasisRegistry::standard(7), e, 6, 0.05);
    LargeDiagonalOptions opts;
    opts.delta = 1.0;
    opts.reduction.eps = 0.25;
    opts.reduction.seed = 6;
    auto w = factor_large_diagonal(t, BasisRegistry::standard(3), opts);
    auto chk = validate_witness(w, 1000, 6);
    const double constant = paper_constants(p, 1.0, 0.25).large_diagonal;
    o.require(chk.ok, id + " witness: " + (chk.failures.empty() ? "" : chk.failures.front()));
    o.require(chk.max_ratio <= kA6Residual, id + " sampled " + fmt(chk.max_ratio));
    o.require(w.norm_product <= constant, id + " norm product " + fmt(w.norm_product) + " > " + fmt(constant));
    o.note(id + " sampled " + fmt(chk.max_ratio) + " norm product " + fmt(w.norm_product) + " <= " + fmt(constant));
    o.payloads.push_back(payload(to_json(w)));
  }
  return o;
}

// ---------------------------------------------------------------- A7

DichotomyOptions a7_options(std::uint64_t seed) {
  DichotomyOptions opts;
  opts.eps = 0.5;
  opts.stage_copies = 5;
  opts.final_copies = 2;
  opts.diagonal.seed = seed;
  opts.scalar.seed = seed;
  return opts;
}

Outcome a7() {
  Outcome o;
  for (double p : kExponents) {
    auto id = pstr(p);
    Exponent e(p);
    auto src = BasisRegistry::standard(7);
    const double constant = paper_constants(p, 1.0, 0.5).dichotomy;

    auto zero = primary_dichotomy(OperatorMatrix::diagonal(e, src.basis(), Eigen::VectorXd::Zero(src.dim())), a7_options(0));
    o.require(zero.branch == "I-T" && zero.residual <= 1e-14, id + " T = 0");
    auto one = primary_dichotomy(OperatorMatrix::identity(e, src.basis()), a7_options(0));
    o.require(one.branch == "T" && one.residual <= 1e-14, id + " T = I");

    int t_branch = 0;
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      RandomOperatorSpec spec;
      spec.diag_lo = 0.0;
      spec.diag_hi = 1.0;
      spec.offdiag_budget = 0.05;
      spec.nonnegative = true;
      auto t = random_operator(src, e, 100 + s, spec);
      std::string sid = id + " seed " + std::to_string(100 + s);
      try {
        auto w = primary_dichotomy(t, a7_options(s));
        bool branch_ok = (w.branch == "T") == (std::abs(w.lambda0) >= 0.5) && (w.branch == "T" || w.branch == "I-T");
        o.require(branch_ok, sid + " branch");
        o.require(w.has_lambda0 && w.lambda0_witness.validate(t, kWitnessTol), sid + " lambda_0 witness");
        auto chk = validate_witness(w, 1000, s);
        o.require(chk.ok, sid + " witness: " + (chk.failures.empty() ? "" : chk.failures.front()));
        o.require(chk.max_ratio <= w.residual + kSampleSlack, sid + " sampled " + fmt(chk.max_ratio));
        o.require(w.norm_product <= constant, sid + " norm product " + fmt(w.norm_product));
        t_branch += w.branch == "T";
        worst = std::max(worst, w.norm_product);
        o.payloads.push_back(payload(to_json(w)));
      } catch (const InfeasibleError& ex) {
        o.require(false, sid + ": " + ex.what());
      }
    }
    o.note(id + " branches T/I-T " + std::to_string(t_branch) + "/" + std::to_string(10 - t_branch) +
           ", max norm product " + fmt(worst) + " <= " + fmt(constant));
  }
  return o;
}

// ---------------------------------------------------------------- A8

Outcome a8() {
  Outcome o;
  auto w = WeightSequence::power(0.25, 4.0);
  for (std::string name : {"fixed", "random", "greedy-max"}) {
    auto adv = make_adversary(name, 8);
    auto t = play_game(*adv, 8, w, 0.1);
    auto chk = check_transcript(t, w);
    o.require(chk.ok, name + ": " + (chk.failures.empty() ? "" : chk.failures.front()));
    o.require(chk.exact, name + ": beta windows not decided exactly");

    std::vector<XpwVector> blocks, units;
    std::vector<BlockData> data;
    for (const auto& r : t.rounds) {
      blocks.push_back(r.b_tilde);
      units.push_back({{r.k, 1.0}});
      data.push_back(block_data(r.e, w));
    }
    double fwd = impartial_equivalence(blocks, w, units, w, 1000, 8);
    double bwd = impartial_equivalence(units, w, blocks, w, 1000, 9);
    o.require(fwd <= 1.1 + kA8Slack && bwd <= 1.1 + kA8Slack, name + " impartial " + fmt(fwd) + "/" + fmt(bwd));

    // Block-span projection on vectors spread over the played range and a margin past it.
    const std::int64_t top = t.rounds.back().e.back();
    double excess = -1.0;
    for (int s = 0; s < 1000; ++s) {
      auto rng = make_rng(derive_seed(88, static_cast<std::uint64_t>(s)));
      XpwVector x;
      for (const auto& r : t.rounds)
        for (int j = 0; j < 4; ++j) x[r.e[uniform_index(rng, r.e.size())]] += gaussian(rng);
      for (int j = 0; j < 8; ++j) x[1 + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(top + 16)))] += gaussian(rng);
      if (s % 2 == 0)  // half the samples lie in the block span
        x = block_span_project(x, data);
      excess = std::max(excess, xpw_norm(block_span_project(x, data), w) - xpw_norm(x, w));
    }
    o.require(excess <= kA8Slack, name + " projection excess " + fmt(excess));
    o.note(name + ": last block ends at " + std::to_string(top) + ", impartial " + fmt(std::max(fwd, bwd)));
    o.payloads.push_back(payload(to_json(t)));
  }
  return o;
}

// ---------------------------------------------------------------- A9

Outcome a9() {
  Outcome o;
  {
    auto reg = BasisRegistry::standard(4);
    std::vector<GridFunction> before;
    bool exact_zero = true;
    for (int i = 0; i < reg.dim(); ++i) {
      auto h = reg.basis_function(i);
      for (double x : conditional_expectation(h, before).expand()) exact_zero = exact_zero && x == 0.0;
      before.push_back(h);
    }
    o.require(exact_zero, "martingale difference");
  }
  {
    auto reg = BasisRegistry::standard(5);
    bool same = true;
    for (std::uint64_t s = 0; s < 50; ++s) {
      auto rng = make_rng(derive_seed(9, s));
      Eigen::VectorXd v(reg.dim());
      for (int i = 0; i < reg.dim(); ++i) v[i] = static_cast<double>(static_cast<int>(uniform_index(rng, 65)) - 32) / 16.0;
      same = same && project(realize(v, reg), reg) == v;
    }
    o.require(same, "project after realize");
  }
  {
    auto reg = BasisRegistry::standard(4);
    for (double p : kExponents) {
      Exponent e(p);
      double worst = 0.0;
      for (std::uint64_t s = 0; s < 1000; ++s) {
        auto rng = make_rng(derive_seed(10, s));
        Eigen::VectorXd v(reg.dim());
        std::vector<int> signs(reg.dim());
        for (int i = 0; i < reg.dim(); ++i) v[i] = gaussian(rng), signs[i] = rademacher(rng);
        worst = std::max(worst, burkholder_check(v, signs, e, reg));
      }
      o.require(worst <= e.burkholder() + kBurkholderSlack, pstr(p) + " Burkholder ratio " + fmt(worst));
      o.note(pstr(p) + " Burkholder ratio " + fmt(worst) + " <= " + fmt(e.burkholder()));
    }
  }
  {
    auto reg = BasisRegistry::standard(5);
    int found = 0, total = 0;
    for (std::uint64_t s = 0; s < 60; ++s) {
      int count = 1 + static_cast<int>(s % 8);
      auto spec = random_block_spec(5, 3, count, derive_seed(11, s));
      Exponent e(kExponents[s % 3]);
      auto f = random_grid_function(reg.grid(), derive_seed(12, s));
      auto t = random_operator(reg, e, derive_seed(13, s), {});
      auto y = y_form(spec, f, reg);
      auto z = z_form(spec, t);
      // Tolerances near the standard deviations: some instances are solvable, some are not.
      const double scale = 0.3 + 0.1 * static_cast<double>(s % 7);
      std::vector<SignTarget> targets{{"Y", y, scale * std::sqrt(y.variance()) + 1e-12},
                                      {"Z", z, scale * std::sqrt(z.variance()) + 1e-12}};
      bool exists = false;
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << count) && !exists; ++mask) {
        SignVector th(count);
        for (int j = 0; j < count; ++j) th[j] = (mask >> j & 1) ? -1 : 1;
        exists = std::abs(eval_Y(spec, f, reg, th)) < targets[0].tolerance &&
                 std::abs(eval_Z(spec, t, th)) < targets[1].tolerance;
      }
      SignSearchOptions so;
      so.mode = SearchMode::exhaustive;
      auto r = sign_search(count, targets, so);
      o.require(r.found == exists, "sign search case " + std::to_string(s));
      found += exists;
      ++total;
    }
    o.note("sign search " + std::to_string(found) + "/" + std::to_string(total) + " solvable, all agree");
  }
  return o;
}

// ---------------------------------------------------------------- runner

struct Criterion {
  std::string id;
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

std::string join(const std::vector<std::string>& xs) {
  std::ostringstream s;
  for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? "; " : "") << xs[i];
  return s.str();
}

}  // namespace

int main() {
  std::vector<Criterion> criteria{
      {"A1", "moment identities", 10, a1},
      {"A2", "lambda +- moments", 10, a2},
      {"A3", "diagonal reduction", 60, a3},
      {"A4", "scalar reduction", 60, a4},
      {"A5", "transitivity", 30, a5},
      {"A6", "large-diagonal factorization", 60, a6},
      {"A7", "primary dichotomy", 120, a7},
      {"A8", "X_{p,w} game", 30, a8},
      {"A9", "structural suites", 60, a9},
  };
  bool all = true;
  std::vector<std::vector<std::string>> first_payloads;
  for (const auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o.require(false, std::string("exception: ") + ex.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs < c.limit_s, "runtime " + fmt(secs) + " s over " + fmt(c.limit_s) + " s");
    all = all && o.pass;
    first_payloads.push_back(o.payloads);
    std::printf("%s %s %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id.c_str(), c.name.c_str(),
                join(o.notes).c_str(), secs);
    std::fflush(stdout);
  }

  // A10: rerun A3-A8 and compare payloads byte for byte.
  auto start = std::chrono::steady_clock::now();
  Outcome det;
  std::size_t compared = 0;
  for (std::size_t i = 2; i <= 7; ++i) {
    std::vector<std::string> again;
    try {
      again = criteria[i].run().payloads;
    } catch (const std::exception& ex) {
      det.require(false, criteria[i].id + " rerun threw: " + ex.what());
      continue;
    }
    det.require(again == first_payloads[i], criteria[i].id + " payloads differ");
    compared += again.size();
  }
  det.require(compared > 0, "nothing to compare");
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  det.note(std::to_string(compared) + " payloads identical across runs");
  all = all && det.pass;
  std::printf("%s A10 determinism: %s (%.2f s)\n", det.pass ? "PASS" : "FAIL", join(det.notes).c_str(), secs);
  return all ? 0 : 1;
}
