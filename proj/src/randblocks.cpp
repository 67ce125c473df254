#include "haarfact/randblocks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <thread>

#include "haarfact/errors.hpp"
#include "haarfact/random.hpp"

namespace haarfact {

SignVector signs_from_mask(std::uint64_t mask, int n) {
  SignVector s(n);
  for (int j = 0; j < n; ++j) s[j] = ((mask >> j) & 1) ? -1 : 1;
  return s;
}

void RandomBlockSpec::validate() const {
  if (intervals.empty()) throw std::invalid_argument("random block needs a non-empty interval set");
  std::set<DyadicInterval> seen;
  for (const auto& k : intervals) {
    if (k.level != level) throw std::invalid_argument("interval " + k.str() + " is not at the common level");
    if (!seen.insert(k).second) throw std::invalid_argument("repeated interval " + k.str());
  }
  if (level > host_copy - 1) throw std::invalid_argument("host copy too shallow for the interval level");
}

double RandomBlockSpec::union_measure() const { return std::ldexp(static_cast<double>(intervals.size()), -level); }

Block RandomBlockSpec::block(const SignVector& theta, const OmegaIndex& target) const {
  if (theta.size() != intervals.size()) throw std::invalid_argument("sign vector length mismatch");
  Block b{target, host_copy, {}};
  for (std::size_t j = 0; j < intervals.size(); ++j) b.terms.push_back({intervals[j], theta[j]});
  return b;
}

double SignForm::eval(const SignVector& theta) const {
  double s = constant;
  for (std::size_t j = 0; j < linear.size(); ++j) s += linear[j] * theta[j];
  const Eigen::Index n = quadratic.rows();
  for (Eigen::Index a = 0; a < n; ++a) {
    double row = 0.0;
    for (Eigen::Index b = 0; b < n; ++b)
      if (a != b) row += quadratic(a, b) * theta[b];
    s += theta[a] * row;
  }
  return s;
}

double SignForm::variance() const {
  double v = 0.0;
  for (double c : linear) v += c * c;
  const Eigen::Index n = quadratic.rows();
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b) {
      double g = quadratic(a, b) + quadratic(b, a);
      v += g * g;
    }
  return v;
}

bool SignForm::identically_zero() const {
  if (constant != 0.0) return false;
  for (double c : linear)
    if (c != 0.0) return false;
  const Eigen::Index n = quadratic.rows();
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b)
      if (quadratic(a, b) + quadratic(b, a) != 0.0) return false;
  return true;
}

namespace {

std::vector<int> host_positions(const RandomBlockSpec& spec, const BasisRegistry& reg) {
  std::vector<int> pos;
  for (const auto& k : spec.intervals) {
    int i = reg.position({spec.host_copy, k});
    if (i < 0) throw std::invalid_argument("interval " + k.str() + " of host copy " + std::to_string(spec.host_copy) +
                                           " is not in the registry");
    pos.push_back(i);
  }
  return pos;
}

}  // namespace

SignForm y_form(const RandomBlockSpec& spec, const GridFunction& f, const BasisRegistry& reg) {
  spec.validate();
  SignForm form;
  for (int i : host_positions(spec, reg)) form.linear.push_back(pairing(f, reg.basis_function(i)));
  return form;
}

SignForm w_form(const RandomBlockSpec& spec, const GridFunction& x, const BasisRegistry& reg) {
  spec.validate();
  SignForm form;
  for (int i : host_positions(spec, reg)) form.linear.push_back(pairing(reg.basis_function(i), x));
  return form;
}

SignForm z_form(const RandomBlockSpec& spec, const OperatorMatrix& t) {
  spec.validate();
  auto pos = host_positions(spec, t.registry());
  const auto n = static_cast<Eigen::Index>(pos.size());
  SignForm form;
  form.quadratic = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      if (a != b) form.quadratic(a, b) = t.entry(pos[a], pos[b]) * t.measure(pos[a]);
  return form;
}

namespace {

GridFunction realized_block(const RandomBlockSpec& spec, const BasisRegistry& reg, const SignVector& theta) {
  BlockFamily fam{{spec.block(theta, {spec.host_copy, DyadicInterval(0, 1)})}};
  return realize_family(fam, reg).front();
}

}  // namespace

double eval_Y(const RandomBlockSpec& spec, const GridFunction& f, const BasisRegistry& reg, const SignVector& theta) {
  spec.validate();
  return pairing(f, realized_block(spec, reg, theta));
}

double eval_W(const RandomBlockSpec& spec, const GridFunction& x, const BasisRegistry& reg, const SignVector& theta) {
  spec.validate();
  return pairing(realized_block(spec, reg, theta), x);
}

double eval_Z(const RandomBlockSpec& spec, const OperatorMatrix& t, const SignVector& theta) {
  spec.validate();
  if (theta.size() != spec.intervals.size()) throw std::invalid_argument("sign vector length mismatch");
  auto pos = host_positions(spec, t.registry());
  double full = 0.0, diag = 0.0;
  for (std::size_t a = 0; a < pos.size(); ++a) {
    for (std::size_t b = 0; b < pos.size(); ++b)
      full += theta[a] * theta[b] * t.entry(pos[a], pos[b]) * t.measure(pos[a]);
    diag += t.entry(pos[a], pos[a]) * t.measure(pos[a]);
  }
  return full - diag;
}

std::string to_string(MomentKind k) {
  switch (k) {
    case MomentKind::Y: return "Y";
    case MomentKind::W: return "W";
    case MomentKind::Z: return "Z";
  }
  return "?";
}

void enumerate_moments(const SignForm& form, double& mean, double& variance) {
  int n = static_cast<int>(std::max<std::size_t>(form.linear.size(), static_cast<std::size_t>(form.quadratic.rows())));
  if (n > kEnumerationCap)
    throw ResourceError("cannot enumerate 2^" + std::to_string(n) + " sign vectors; use Monte Carlo moments");
  std::vector<double> vals(std::size_t{1} << n);
  for (std::uint64_t m = 0; m < vals.size(); ++m) vals[m] = form.eval(signs_from_mask(m, n));
  mean = pairwise_sum(vals) / static_cast<double>(vals.size());
  for (auto& v : vals) v = (v - mean) * (v - mean);
  variance = pairwise_sum(vals) / static_cast<double>(vals.size());
}

double variance_bound_Y(const RandomBlockSpec& spec, const GridFunction& f, const Exponent& e) {
  return lp_norm_power(f, e.q, 2.0) * std::pow(spec.union_measure() * std::ldexp(1.0, -spec.level), 1.0 / e.p);
}

double variance_bound_W(const RandomBlockSpec& spec, const GridFunction& x, const Exponent& e) {
  return lp_norm_power(x, e.p, 2.0) * std::pow(spec.union_measure() * std::ldexp(1.0, -spec.level), 1.0 / e.q);
}

double variance_bound_Z(const RandomBlockSpec& spec, double t_norm_upper, const Exponent& e) {
  double u = spec.union_measure();
  return 2.0 * t_norm_upper * t_norm_upper * u * std::pow(u, 1.0 / e.p) * std::pow(2.0, -spec.level / e.q);
}

namespace {

MomentReport linear_report(MomentKind kind, const SignForm& form, double bound) {
  MomentReport r;
  r.kind = kind;
  r.samples = std::uint64_t{1} << form.linear.size();
  enumerate_moments(form, r.mean, r.variance);
  double cf = 0.0;
  for (double c : form.linear) cf += c * c;
  r.closed_form_variance = cf;
  r.bound = bound;
  r.mean_ok = std::abs(r.mean) <= 1e-12;
  r.closed_form_ok = std::abs(r.variance - cf) <= 1e-10;
  r.bound_ok = r.variance <= bound;
  return r;
}

}  // namespace

MomentReport exact_moments_Y(const RandomBlockSpec& spec, const GridFunction& f, const BasisRegistry& reg,
                             const Exponent& e) {
  return linear_report(MomentKind::Y, y_form(spec, f, reg), variance_bound_Y(spec, f, e));
}

MomentReport exact_moments_W(const RandomBlockSpec& spec, const GridFunction& x, const BasisRegistry& reg,
                             const Exponent& e) {
  return linear_report(MomentKind::W, w_form(spec, x, reg), variance_bound_W(spec, x, e));
}

MomentReport exact_moments_Z(const RandomBlockSpec& spec, const OperatorMatrix& t, double t_norm_upper) {
  auto form = z_form(spec, t);
  MomentReport r;
  r.kind = MomentKind::Z;
  r.samples = std::uint64_t{1} << spec.intervals.size();
  enumerate_moments(form, r.mean, r.variance);
  const auto& g = form.quadratic;
  double a = 0.0, b = 0.0;
  for (Eigen::Index k = 0; k < g.rows(); ++k)
    for (Eigen::Index l = 0; l < g.cols(); ++l)
      if (k != l) {
        a += g(k, l) * g(l, k);
        b += g(k, l) * g(k, l);
      }
  r.closed_form_variance = a + b;
  r.bound = variance_bound_Z(spec, t_norm_upper, t.exponent());
  r.mean_ok = std::abs(r.mean) <= 1e-12;
  r.closed_form_ok = std::abs(r.variance - r.closed_form_variance) <= 1e-10;
  r.bound_ok = r.variance <= r.bound;
  return r;
}

MomentReport monte_carlo_moments(MomentKind kind, const SignForm& form, std::uint64_t samples, std::uint64_t seed) {
  if (samples < 2) throw std::invalid_argument("need at least two samples");
  int n = static_cast<int>(std::max<std::size_t>(form.linear.size(), static_cast<std::size_t>(form.quadratic.rows())));
  std::vector<double> vals(samples);
  for (std::uint64_t s = 0; s < samples; ++s) {
    auto rng = make_rng(seed, s);
    SignVector th(n);
    for (auto& t : th) t = rademacher(rng);
    vals[s] = form.eval(th);
  }
  MomentReport r;
  r.kind = kind;
  r.mode = "monte-carlo";
  r.samples = samples;
  r.mean = pairwise_sum(vals) / static_cast<double>(samples);
  std::vector<double> d2(samples), d4(samples);
  for (std::uint64_t s = 0; s < samples; ++s) {
    double d = vals[s] - r.mean;
    d2[s] = d * d;
    d4[s] = d2[s] * d2[s];
  }
  double m2 = pairwise_sum(d2) / static_cast<double>(samples);
  double m4 = pairwise_sum(d4) / static_cast<double>(samples);
  r.variance = m2 * static_cast<double>(samples) / static_cast<double>(samples - 1);
  r.mean_stderr = std::sqrt(r.variance / static_cast<double>(samples));
  r.variance_stderr = std::sqrt(std::max(0.0, m4 - m2 * m2) / static_cast<double>(samples));
  r.closed_form_variance = form.variance();
  r.mean_ok = std::abs(r.mean) <= 4.0 * r.mean_stderr + 1e-15;
  r.closed_form_ok = std::abs(r.variance - r.closed_form_variance) <= 3.0 * r.variance_stderr + 1e-15;
  r.bound_ok = true;
  return r;
}

StarBound condition_star(int n, double t_norm_upper, double eta, const std::vector<double>& eta_list, double p) {
  if (!(eta > 0.0) || !(t_norm_upper > 0.0)) throw std::invalid_argument("tolerances and norm bound must be positive");
  double s = std::ldexp(1.0, 2 * n + 3) / (eta * eta);
  for (double e : eta_list) {
    if (!(e > 0.0)) throw std::invalid_argument("tolerances must be positive");
    s += 1.0 / (e * e);
  }
  Exponent ex(p);
  StarBound out;
  out.rhs = ex.pstar * (2.0 * std::log2(t_norm_upper) + std::log2(s));
  out.n_min = static_cast<int>(std::floor(out.rhs)) + 1;
  return out;
}

std::string to_string(SearchMode m) {
  switch (m) {
    case SearchMode::exhaustive: return "exhaustive";
    case SearchMode::sampled: return "sampled";
    case SearchMode::automatic: return "automatic";
  }
  return "?";
}

SearchMode parse_search_mode(const std::string& s) {
  if (s == "exhaustive") return SearchMode::exhaustive;
  if (s == "sampled") return SearchMode::sampled;
  if (s == "automatic" || s == "auto") return SearchMode::automatic;
  throw std::invalid_argument("unknown search mode '" + s + "'");
}

double chebyshev_failure_bound(const std::vector<SignTarget>& targets) {
  double s = 0.0;
  for (const auto& t : targets) s += t.form.variance() / (t.tolerance * t.tolerance);
  return s;
}

std::uint64_t default_sample_budget(const std::vector<SignTarget>& targets) {
  double pf = chebyshev_failure_bound(targets);
  if (pf < 1.0) return static_cast<std::uint64_t>(std::ceil(64.0 / (1.0 - pf)));
  return std::uint64_t{1} << 16;
}

namespace {

struct Eval {
  bool ok = true;
  double score = 0.0;
};

Eval evaluate(const std::vector<SignTarget>& targets, const SignVector& theta) {
  Eval e;
  for (const auto& t : targets) {
    double v = std::abs(t.form.eval(theta));
    if (!(v < t.tolerance)) e.ok = false;
    e.score = std::max(e.score, v / t.tolerance);
  }
  return e;
}

void fill_outcomes(SignSearchResult& r, const std::vector<SignTarget>& targets) {
  r.outcomes.clear();
  r.score = 0.0;
  for (const auto& t : targets) {
    double v = t.form.eval(r.theta);
    r.outcomes.push_back({t.label, v, t.tolerance});
    r.score = std::max(r.score, std::abs(v) / t.tolerance);
  }
}

}  // namespace

SignSearchResult sign_search(int n, const std::vector<SignTarget>& targets, const SignSearchOptions& opts) {
  for (const auto& t : targets)
    if (!(t.tolerance > 0.0)) throw std::invalid_argument("tolerance for " + t.label + " must be positive");
  SearchMode mode = opts.mode;
  if (mode == SearchMode::automatic) mode = n <= opts.exhaustive_cap ? SearchMode::exhaustive : SearchMode::sampled;
  SignSearchResult res;
  res.mode = to_string(mode);
  if (mode == SearchMode::exhaustive) {
    if (n > opts.exhaustive_cap) throw ResourceError("exhaustive sign search over 2^" + std::to_string(n) + " vectors exceeds cap");
    const std::uint64_t total = std::uint64_t{1} << n;
    int threads = opts.threads > 0 ? opts.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(threads), std::max<std::uint64_t>(1, total / 4096)));
    std::atomic<std::uint64_t> found{std::numeric_limits<std::uint64_t>::max()};
    struct Chunk {
      std::uint64_t winner = std::numeric_limits<std::uint64_t>::max();
      std::uint64_t best = 0;
      double best_score = std::numeric_limits<double>::infinity();
      std::uint64_t tried = 0;
    };
    std::vector<Chunk> chunks(threads);
    auto work = [&](int t) {
      std::uint64_t lo = total / threads * t, hi = t + 1 == threads ? total : total / threads * (t + 1);
      Chunk& c = chunks[t];
      for (std::uint64_t m = lo; m < hi; ++m) {
        if (m > found.load(std::memory_order_relaxed)) break;
        ++c.tried;
        auto ev = evaluate(targets, signs_from_mask(m, n));
        if (ev.score < c.best_score) {
          c.best_score = ev.score;
          c.best = m;
        }
        if (ev.ok) {
          c.winner = m;
          std::uint64_t cur = found.load();
          while (m < cur && !found.compare_exchange_weak(cur, m)) {
          }
          break;
        }
      }
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
      for (auto& th : pool) th.join();
    }
    std::uint64_t winner = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (const auto& c : chunks) {
      res.tried += c.tried;
      winner = std::min(winner, c.winner);
      if (c.best_score < best_score) {
        best_score = c.best_score;
        best = c.best;
      }
    }
    res.found = winner != std::numeric_limits<std::uint64_t>::max();
    res.winner_index = res.found ? winner : best;
    res.theta = signs_from_mask(res.winner_index, n);
    fill_outcomes(res, targets);
    return res;
  }
  std::uint64_t budget = opts.budget ? opts.budget : default_sample_budget(targets);
  double best_score = std::numeric_limits<double>::infinity();
  for (std::uint64_t d = 0; d < budget; ++d) {
    auto rng = make_rng(opts.seed, d);
    SignVector th(n);
    for (auto& t : th) t = rademacher(rng);
    ++res.tried;
    auto ev = evaluate(targets, th);
    if (ev.score < best_score) {
      best_score = ev.score;
      res.theta = th;
      res.winner_index = d;
    }
    if (ev.ok) {
      res.found = true;
      res.theta = th;
      res.winner_index = d;
      break;
    }
  }
  fill_outcomes(res, targets);
  return res;
}

std::pair<double, double> lambda_pm(const std::vector<double>& d, int k, const std::vector<DyadicInterval>& b,
                                    const SignVector& theta) {
  if (d.size() != (std::size_t{1} << k)) throw std::invalid_argument("diagonal must list all level-k entries");
  if (theta.size() != b.size()) throw std::invalid_argument("sign vector length mismatch");
  std::vector<double> plus, minus;
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (b[j].level >= k) throw std::invalid_argument("intervals must lie above level k");
    auto up = theta[j] == 1 ? b[j].plus() : b[j].minus();
    auto down = theta[j] == 1 ? b[j].minus() : b[j].plus();
    for (const auto& l : descendants_at(up, k)) plus.push_back(d[l.index - 1]);
    for (const auto& l : descendants_at(down, k)) minus.push_back(d[l.index - 1]);
  }
  return {stable_mean(plus), stable_mean(minus)};
}

LambdaMoments lambda_pm_moments(const std::vector<double>& d, int k, const std::vector<DyadicInterval>& b,
                                double diag_upper) {
  if (b.empty()) throw std::invalid_argument("interval set must be non-empty");
  int m = b.front().level;
  std::set<DyadicInterval> seen;
  for (const auto& j : b) {
    if (j.level != m) throw std::invalid_argument("intervals must share one level");
    if (!seen.insert(j).second) throw std::invalid_argument("repeated interval");
  }
  if (m >= k) throw std::invalid_argument("need m < k");
  int n = static_cast<int>(b.size());
  if (n > kEnumerationCap) throw ResourceError("interval set too large to enumerate");
  std::vector<double> lp(std::size_t{1} << n), lm(std::size_t{1} << n);
  for (std::uint64_t mask = 0; mask < lp.size(); ++mask) {
    auto [a, c] = lambda_pm(d, k, b, signs_from_mask(mask, n));
    lp[mask] = a;
    lm[mask] = c;
  }
  LambdaMoments r;
  r.patterns = lp.size();
  auto moments = [](std::vector<double> v, double& mean, double& var) {
    mean = pairwise_sum(v) / static_cast<double>(v.size());
    for (auto& x : v) x = (x - mean) * (x - mean);
    var = pairwise_sum(v) / static_cast<double>(v.size());
  };
  moments(lp, r.mean_plus, r.var_plus);
  moments(lm, r.mean_minus, r.var_minus);
  std::vector<double> inside;
  for (const auto& j : b)
    for (const auto& l : descendants_at(j, k)) inside.push_back(d[l.index - 1]);
  r.expected_mean = stable_mean(inside);
  double u = std::ldexp(static_cast<double>(n), -m);
  r.bound = std::ldexp(1.0, -m) / u * diag_upper * diag_upper;
  r.mean_ok = std::abs(r.mean_plus - r.expected_mean) <= 1e-12 && std::abs(r.mean_minus - r.expected_mean) <= 1e-12;
  r.bound_ok = r.var_plus <= r.bound && r.var_minus <= r.bound;
  return r;
}

}  // namespace haarfact
