#include "haarfact/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "haarfact/errors.hpp"
#include "haarfact/random.hpp"

namespace haarfact {

std::string to_string(Mode m) { return m == Mode::paper ? "paper" : "adaptive"; }

Mode parse_mode(const std::string& s) {
  if (s == "paper") return Mode::paper;
  if (s == "adaptive") return Mode::adaptive;
  throw std::invalid_argument("unknown mode '" + s + "' (expected paper|adaptive)");
}

double projection_constant(const Exponent& e) {
  double b = e.burkholder();
  return 2.0 * b * b * std::pow(e.pstar / 2.0, 1.5);
}

namespace {

std::string fmt(double x) {
  std::ostringstream o;
  o.precision(6);
  o << x;
  return o.str();
}

double weight_p(const OmegaIndex& i, double p) { return std::pow(i.interval.measure_double(), -1.0 / p); }

}  // namespace

CertifiedResidual certify_residual(const Eigen::MatrixXd& delta, const BasisRegistry& target, const Exponent& e) {
  const int n = target.dim();
  if (delta.rows() != n || delta.cols() != n) throw std::invalid_argument("residual matrix does not match target");
  CertifiedResidual out;
  out.residuals.resize(n);
  out.offdiag_residuals.resize(n);
  double maxdiag = 0.0;
  std::vector<double> full(n), off(n);
  for (int s = 0; s < n; ++s) {
    Eigen::VectorXd col = delta.col(s);
    double w = weight_p(target.basis()[s], e.p);
    out.residuals[s] = col.isZero(0.0) ? 0.0 : lp_norm(realize(col, target), e);
    maxdiag = std::max(maxdiag, std::abs(col[s]));
    col[s] = 0.0;
    out.offdiag_residuals[s] = col.isZero(0.0) ? 0.0 : lp_norm(realize(col, target), e);
    full[s] = w * out.residuals[s];
    off[s] = w * out.offdiag_residuals[s];
  }
  out.column_sum = pairwise_sum(full);
  out.split = e.burkholder() * maxdiag + pairwise_sum(off);
  if (out.split < out.column_sum) {
    out.certified = out.split;
    out.method = "split";
  } else {
    out.certified = out.column_sum;
    out.method = "column-sum";
  }
  return out;
}

Eigen::MatrixXd Compression::residual(const std::vector<double>& target) const {
  if (static_cast<Eigen::Index>(target.size()) != matrix.rows()) throw std::invalid_argument("target size mismatch");
  Eigen::MatrixXd d = matrix;
  for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, i) = (diagonal_average[i] - target[i]) + cross[i];
  return d;
}

Compression compress(const OperatorMatrix& t, const BlockFamily& family) {
  const int n = static_cast<int>(family.blocks.size());
  struct Term {
    int pos;
    int sign;
    double measure;
  };
  std::vector<std::vector<Term>> terms(n);
  Compression c;
  c.positions.resize(n);
  for (int s = 0; s < n; ++s) {
    const auto& b = family.blocks[s];
    for (const auto& k : b.terms) {
      OmegaIndex idx{b.host_copy, k.interval};
      int pos = t.position(idx);
      if (pos < 0) throw std::invalid_argument("block term " + idx.str() + " not in the operator basis");
      terms[s].push_back({pos, k.sign, k.interval.measure_double()});
      c.positions[s].push_back(idx);
    }
  }
  c.matrix = Eigen::MatrixXd::Zero(n, n);
  c.diagonal_average.assign(n, 0.0);
  c.cross.assign(n, 0.0);
  std::vector<double> tmeasure(n);
  for (int s = 0; s < n; ++s) tmeasure[s] = family.blocks[s].target.interval.measure_double();

  for (int s = 0; s < n; ++s) {
    std::vector<double> vals, weights;
    bool equal = true;
    for (const auto& a : terms[s]) {
      vals.push_back(t.entry(a.pos, a.pos));
      weights.push_back(a.measure);
      equal = equal && a.measure == terms[s].front().measure;
    }
    if (equal) {
      c.diagonal_average[s] = stable_mean(vals);
    } else {
      std::vector<double> prod(vals.size());
      for (std::size_t i = 0; i < vals.size(); ++i) prod[i] = vals[i] * weights[i];
      c.diagonal_average[s] = pairwise_sum(prod) / pairwise_sum(weights);
    }
  }

  if (t.diagonal_storage()) {
    std::map<int, std::vector<std::pair<int, const Term*>>> by_pos;
    for (int s = 0; s < n; ++s)
      for (const auto& a : terms[s]) by_pos[a.pos].push_back({s, &a});
    for (const auto& [pos, list] : by_pos) {
      double d = t.entry(pos, pos);
      for (const auto& [r, a] : list)
        for (const auto& [s, b] : list) {
          if (a == b) continue;
          double v = a->sign * b->sign * d * a->measure / tmeasure[r];
          if (r == s)
            c.cross[s] += v;
          else
            c.matrix(r, s) += v;
        }
    }
  } else {
    Eigen::MatrixXd m = t.dense();
    for (int s = 0; s < n; ++s)
      for (int r = 0; r < n; ++r) {
        double acc = 0.0;
        for (const auto& a : terms[r])
          for (const auto& b : terms[s]) {
            if (r == s && a.pos == b.pos) continue;
            acc += a.sign * b.sign * m(a.pos, b.pos) * a.measure;
          }
        acc /= tmeasure[r];
        if (r == s)
          c.cross[s] = acc;
        else
          c.matrix(r, s) = acc;
      }
  }
  for (int s = 0; s < n; ++s) c.matrix(s, s) = c.diagonal_average[s] + c.cross[s];
  return c;
}

OperatorMatrix ReductionCertificate::target_operator() const {
  auto reg = target_registry();
  Eigen::VectorXd d(reg.dim());
  for (int i = 0; i < reg.dim(); ++i) d[i] = target_diagonal.at(i);
  return OperatorMatrix::diagonal(source.exponent(), reg.basis(), d);
}

std::vector<int> paper_schedule(int copies, const Exponent& e, double t_norm_upper, double eps) {
  std::vector<int> k;
  for (int n = 1; n <= copies; ++n) {
    double rhs = e.pstar * (12.0 * n + 13.0 + 2.0 * std::log2(t_norm_upper / eps));
    k.push_back(static_cast<int>(std::floor(rhs)) + 1);
  }
  return k;
}

double paper_tolerance_zy(int n, double eps) { return eps / std::pow(32.0, 5.0 * n + 2.0); }

double paper_tolerance_w(int n, int m, double eps, const Exponent& e) {
  return eps / std::pow(32.0, 2.0 * n + m + 3.0 + n / e.q + m / e.p);
}

namespace {

struct BlockData {
  Block block;
  std::vector<int> pos;
  double term_measure = 0.0;
};

struct Attempt {
  bool ok = false;
  std::vector<BlockData> blocks;
  std::vector<StepRecord> steps;
  std::string failure;
};

// Source positions of intervals in one host copy.
std::vector<int> locate(const OperatorMatrix& t, int host, const std::vector<DyadicInterval>& ivs) {
  std::vector<int> out;
  out.reserve(ivs.size());
  for (const auto& k : ivs) {
    int p = t.position({host, k});
    if (p < 0) throw std::invalid_argument("host index " + OmegaIndex{host, k}.str() + " missing from source");
    out.push_back(p);
  }
  return out;
}

// Interval set carved from [b = sign] at one level finer than the block's terms.
std::vector<DyadicInterval> carve(const Block& parent, bool plus_side) {
  std::vector<DyadicInterval> out;
  for (const auto& term : parent.terms) {
    bool up = (term.sign == 1) == plus_side;
    out.push_back(up ? term.interval.plus() : term.interval.minus());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Attempt run_diagonal(const OperatorMatrix& t, const BasisRegistry& target, const std::vector<int>& sched,
                     const DiagonalOptions& opts, bool paper_tol) {
  Attempt at;
  const auto& basis = target.basis();
  const int n = target.dim();
  const double P = static_cast<double>(n) * n;
  const Exponent& e = t.exponent();
  Eigen::MatrixXd m = t.dense();

  std::map<int, int> copy_rank;
  for (std::size_t i = 0; i < target.copies().size(); ++i) copy_rank[target.copies()[i].copy] = static_cast<int>(i);

  for (int s = 0; s < n; ++s) {
    const OmegaIndex& idx = basis[s];
    int k = sched[copy_rank.at(idx.copy)];
    int host = k + idx.copy;
    std::vector<DyadicInterval> ivs;
    if (idx.interval.level == 0) {
      ivs = level_intervals(k);
    } else {
      int parent = target.position({idx.copy, idx.interval.parent()});
      ivs = carve(at.blocks[parent].block, idx.interval.is_plus_child());
    }
    BlockData bd;
    bd.pos = locate(t, host, ivs);
    bd.term_measure = ivs.front().measure_double();
    const int nb = static_cast<int>(ivs.size());
    const double mi = idx.interval.measure_double();

    std::vector<SignTarget> targets;
    {
      SignForm z;
      z.quadratic = Eigen::MatrixXd::Zero(nb, nb);
      for (int a = 0; a < nb; ++a)
        for (int b = 0; b < nb; ++b)
          if (a != b) z.quadratic(a, b) = m(bd.pos[a], bd.pos[b]) * bd.term_measure;
      z.linear.assign(nb, 0.0);
      double tol = paper_tol ? paper_tolerance_zy(idx.copy, opts.eps) : opts.safety * opts.eps * mi / P;
      if (!z.identically_zero()) targets.push_back({"Z " + idx.str(), z, tol});
    }
    for (int r = 0; r < s; ++r) {
      const auto& prev = at.blocks[r];
      const double mj = basis[r].interval.measure_double();
      SignForm y, w;
      y.linear.assign(nb, 0.0);
      w.linear.assign(nb, 0.0);
      for (int a = 0; a < nb; ++a) {
        double cy = 0.0, cw = 0.0;
        for (std::size_t l = 0; l < prev.pos.size(); ++l) {
          double th = prev.block.terms[l].sign;
          cy += th * m(prev.pos[l], bd.pos[a]) * prev.term_measure;
          cw += th * m(bd.pos[a], prev.pos[l]) * bd.term_measure;
        }
        y.linear[a] = cy;
        w.linear[a] = cw;
      }
      double ty, tw;
      if (paper_tol) {
        ty = paper_tolerance_zy(idx.copy, opts.eps);
        tw = paper_tolerance_w(idx.copy, basis[r].copy, opts.eps, e);
      } else {
        ty = opts.safety * opts.eps * std::pow(mj, 1.0 / e.q) * std::pow(mi, 1.0 / e.p) / P;
        tw = opts.safety * opts.eps * std::pow(mi, 1.0 / e.q) * std::pow(mj, 1.0 / e.p) / P;
      }
      if (!y.identically_zero()) targets.push_back({"Y " + basis[r].str() + " -> " + idx.str(), y, ty});
      if (!w.identically_zero()) targets.push_back({"W " + idx.str() + " -> " + basis[r].str(), w, tw});
    }

    SignSearchOptions so;
    so.mode = opts.search;
    so.budget = opts.budget;
    so.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(s));
    so.exhaustive_cap = opts.exhaustive_block_cap;
    auto res = sign_search(nb, targets, so);

    StepRecord st;
    st.target = idx;
    st.host_copy = host;
    st.block_level = ivs.front().level;
    st.block_size = nb;
    st.search = res.mode;
    st.found = res.found;
    st.tried = res.tried;
    st.winner_index = res.winner_index;
    st.outcomes = res.outcomes;
    at.steps.push_back(st);
    if (!res.found) {
      std::ostringstream o;
      o << "sign search failed at " << idx.str() << " (host copy " << host << ", |B| = " << nb << ", "
        << res.tried << " tried)";
      for (const auto& out : res.outcomes)
        if (!(std::abs(out.value) < out.tolerance))
          o << "; " << out.label << ": achieved " << fmt(std::abs(out.value)) << ", required < " << fmt(out.tolerance);
      at.failure = o.str();
      return at;
    }
    bd.block.target = idx;
    bd.block.host_copy = host;
    for (int a = 0; a < nb; ++a) bd.block.terms.push_back({ivs[a], res.theta[a]});
    at.blocks.push_back(std::move(bd));
  }
  at.ok = true;
  return at;
}

bool schedule_feasible(const OperatorMatrix& t, const BasisRegistry& target, const std::vector<int>& sched,
                       std::string* why) {
  const auto& reg = t.registry();
  int last = 0;
  for (std::size_t i = 0; i < target.copies().size(); ++i) {
    const auto& cs = target.copies()[i];
    int k = sched[i];
    int host = k + cs.copy;
    if (k < 0 || host <= last) {
      if (why) *why = "host copies must be strictly increasing";
      return false;
    }
    last = host;
    if (reg.depth_of(host) < k + cs.depth) {
      if (why)
        *why = "copy " + std::to_string(cs.copy) + " needs host copy " + std::to_string(host) + " at depth " +
               std::to_string(k + cs.depth) + ", source has " + std::to_string(reg.depth_of(host));
      return false;
    }
  }
  return true;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

void finish(ReductionCertificate& c) {
  auto reg = c.target_registry();
  auto comp = compress(c.source, c.family);
  c.compressed = comp.matrix;
  c.residual = certify_residual(comp.residual(c.target_diagonal), reg, c.source.exponent());
}

void fill_columns(ReductionCertificate& c) {
  const auto& e = c.source.exponent();
  auto reg = c.target_registry();
  c.columns.clear();
  for (int s = 0; s < reg.dim(); ++s) {
    const auto& idx = reg.basis()[s];
    ColumnRecord col;
    col.target = idx;
    col.residual = c.residual.residuals[s];
    col.weighted = weight_p(idx, e.p) * col.residual;
    col.paper_target = c.eps / std::pow(2.0, 2.0 * idx.copy + 1.0 + idx.copy / e.p);
    c.columns.push_back(col);
  }
}

}  // namespace

ReductionCertificate reduce_to_diagonal(const OperatorMatrix& t, const BasisRegistry& target,
                                        const DiagonalOptions& opts) {
  if (!(opts.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  const int copies = static_cast<int>(target.copies().size());
  if (copies == 0) throw std::invalid_argument("empty target registry");
  if (!opts.schedule.empty() && static_cast<int>(opts.schedule.size()) != copies)
    throw std::invalid_argument("schedule must give one depth per target copy");

  std::vector<std::vector<int>> candidates;
  bool paper_tol = opts.mode == Mode::paper;
  std::vector<std::string> notes;
  if (!opts.schedule.empty()) {
    candidates.push_back(opts.schedule);
  } else if (opts.mode == Mode::paper) {
    double tn = opts.t_norm_upper > 0.0 ? opts.t_norm_upper : opnorm_upper(t);
    double tn_eff = std::max(tn, opts.eps);
    std::vector<int> ks;
    for (const auto& cs : target.copies()) {
      double rhs = t.exponent().pstar * (12.0 * cs.copy + 13.0 + 2.0 * std::log2(tn_eff / opts.eps));
      ks.push_back(static_cast<int>(std::floor(rhs)) + 1);
    }
    std::string why;
    if (!schedule_feasible(t, target, ks, &why))
      throw ResourceError("strict schedule k(n) = [" + join(ks) + "] is infeasible for the source truncation: " + why);
    candidates.push_back(ks);
  } else {
    int kmax = opts.k_max;
    if (kmax <= 0) {
      kmax = opts.k_min - 1;
      for (int k = std::max(0, opts.k_min); k < 64; ++k) {
        if (!schedule_feasible(t, target, std::vector<int>(copies, k), nullptr)) break;
        kmax = k;
      }
    }
    for (int k = opts.k_min; k <= kmax; ++k) candidates.push_back(std::vector<int>(copies, k));
    if (candidates.empty())
      throw ResourceError("no schedule with k >= " + std::to_string(opts.k_min) + " fits the source truncation");
  }
  if (opts.mode == Mode::paper && !opts.schedule.empty()) {
    double tn = opts.t_norm_upper > 0.0 ? opts.t_norm_upper : opnorm_upper(t);
    auto ks = paper_schedule(copies, t.exponent(), std::max(tn, opts.eps), opts.eps);
    bool met = true;
    for (int i = 0; i < copies; ++i) met = met && opts.schedule[i] >= ks[i];
    notes.push_back(std::string("strict tolerances with explicit schedule; hypothesis_met = ") + (met ? "true" : "false"));
  }

  // Adaptive mode retries with looser per-step tolerances; acceptance rests on the recomputed residual alone.
  const std::vector<double> loosen = paper_tol ? std::vector<double>{1.0} : std::vector<double>{1.0, 8.0, 64.0};
  std::vector<std::string> attempts;
  for (double f : loosen) {
    DiagonalOptions o = opts;
    o.safety = opts.safety * f;
    const std::string tag = f == 1.0 ? "" : " (tolerances x" + fmt(f) + ")";
    for (const auto& sched : candidates) {
      std::string why;
      if (!schedule_feasible(t, target, sched, &why))
        throw ResourceError("schedule [" + join(sched) + "] is infeasible: " + why);
      auto at = run_diagonal(t, target, sched, o, paper_tol);
      if (!at.ok) {
        attempts.push_back("schedule [" + join(sched) + "]" + tag + ": " + at.failure);
        continue;
      }
      ReductionCertificate c;
      c.kind = "diagonal";
      c.mode = opts.mode;
      c.eps = opts.eps;
      c.schedule = sched;
      c.source = t;
      c.target_copies = target.copies();
      for (auto& b : at.blocks) c.family.blocks.push_back(b.block);
      c.steps = std::move(at.steps);
      auto comp = compress(t, c.family);
      for (int s = 0; s < target.dim(); ++s) {
        c.witnesses.push_back(diagonal_average(t, comp.positions[s]));
        c.target_diagonal.push_back(c.witnesses.back().value);
      }
      finish(c);
      fill_columns(c);
      c.attempts = attempts;
      c.notes = notes;
      if (f != 1.0) c.notes.push_back("per-step tolerances loosened by " + fmt(f));
      if (c.residual.certified < opts.eps) return c;
      attempts.push_back("schedule [" + join(sched) + "]" + tag + ": certified " + fmt(c.residual.certified) +
                         " not below eps");
    }
  }
  std::string msg = "diagonal reduction failed";
  for (const auto& a : attempts) msg += "\n  " + a;
  throw InfeasibleError(msg);
}

std::optional<std::vector<int>> select_stable_levels(const std::vector<double>& averages, int first_level, int count,
                                                    double width, double gamma) {
  if (count <= 0) throw std::invalid_argument("count must be positive");
  if (!(width > 0.0)) throw std::invalid_argument("bin width must be positive");
  long long nbins = std::max<long long>(1, static_cast<long long>(std::ceil(2.0 * gamma / width)));
  std::map<long long, std::vector<int>> bins;
  for (std::size_t i = 0; i < averages.size(); ++i) {
    long long b = static_cast<long long>(std::floor((averages[i] + gamma) / width));
    b = std::clamp<long long>(b, 0, nbins - 1);
    bins[b].push_back(first_level + static_cast<int>(i));
  }
  for (const auto& [b, levels] : bins)
    if (static_cast<int>(levels.size()) >= count) return std::vector<int>(levels.begin(), levels.begin() + count);
  return std::nullopt;
}

double paper_scalar_depth(int m, double gamma, double eps) {
  return m + 6.0 + m * 4.0 * gamma / eps + 3.0 * std::log2(m) + 2.0 * std::log2(gamma / eps);
}

namespace {

struct ScalarSource {
  int copy = 0;
  int levels = 0;                        // M
  std::vector<std::vector<double>> by_level;  // d at level l, left to right
};

ScalarSource scalar_source(const OperatorMatrix& d) {
  if (!d.is_diagonal()) throw std::invalid_argument("scalar reduction needs a diagonal operator");
  const auto& reg = d.registry();
  if (reg.copies().size() != 1) throw std::invalid_argument("scalar reduction needs a single-copy operator");
  ScalarSource s;
  s.copy = reg.copies()[0].copy;
  s.levels = reg.copies()[0].depth + 1;
  s.by_level.resize(s.levels);
  auto diag = d.diagonal();
  for (int i = 0; i < d.dim(); ++i) s.by_level[d.basis()[i].interval.level].push_back(diag[i]);
  return s;
}

// Values of d at `level` under interval iv.
std::span<const double> under(const ScalarSource& src, const DyadicInterval& iv, int level) {
  std::size_t w = std::size_t{1} << (level - iv.level);
  return std::span<const double>(src.by_level[level]).subspan(static_cast<std::size_t>(iv.index - 1) * w, w);
}

double mean_under(const ScalarSource& src, const std::vector<DyadicInterval>& ivs, int level) {
  std::vector<double> v;
  for (const auto& iv : ivs) {
    auto s = under(src, iv, level);
    v.insert(v.end(), s.begin(), s.end());
  }
  return stable_mean(v);
}

struct ScalarAttempt {
  bool ok = false;
  std::string failure;
  ReductionCertificate cert;
};

ScalarAttempt run_scalar(const OperatorMatrix& d, const ScalarSource& src, const std::vector<int>& levels,
                         double eps, int target_copy, const ScalarOptions& opts) {
  ScalarAttempt at;
  const int m = static_cast<int>(levels.size());
  BasisRegistry treg({{target_copy, m - 1}});
  const auto& basis = treg.basis();
  std::vector<Block> blocks;
  std::vector<StepRecord> steps;
  std::vector<ChainRecord> chain;
  std::vector<double> lambda_i;
  const double tol = eps / (4.0 * m);

  for (int s = 0; s < treg.dim(); ++s) {
    const auto& idx = basis[s];
    const int lv = idx.interval.level;
    const int L = levels[lv];
    std::vector<DyadicInterval> ivs;
    if (lv == 0) {
      ivs = level_intervals(L);
    } else {
      const Block& parent = blocks[treg.position({target_copy, idx.interval.parent()})];
      for (const auto& h : carve(parent, idx.interval.is_plus_child())) {
        auto ds = descendants_at(h, L);
        ivs.insert(ivs.end(), ds.begin(), ds.end());
      }
      std::sort(ivs.begin(), ivs.end());
    }
    const int nb = static_cast<int>(ivs.size());
    std::vector<SignTarget> targets;
    for (int j = lv + 1; j < m; ++j) {
      const int Lj = levels[j];
      const double c = std::ldexp(1.0, Lj - L - 1);
      SignForm f;
      f.linear.resize(nb);
      for (int a = 0; a < nb; ++a) {
        double sp = pairwise_sum(under(src, ivs[a].plus(), Lj));
        double sm = pairwise_sum(under(src, ivs[a].minus(), Lj));
        f.linear[a] = (sp - sm) / (2.0 * nb * c);
      }
      if (!f.identically_zero()) targets.push_back({"lambda^" + std::to_string(Lj) + " " + idx.str(), f, tol});
    }
    SignSearchOptions so;
    so.mode = opts.search;
    so.budget = opts.budget;
    so.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(s));
    so.exhaustive_cap = opts.exhaustive_block_cap;
    auto res = sign_search(nb, targets, so);
    StepRecord st;
    st.target = idx;
    st.host_copy = src.copy;
    st.block_level = L;
    st.block_size = nb;
    st.search = res.mode;
    st.found = res.found;
    st.tried = res.tried;
    st.winner_index = res.winner_index;
    st.outcomes = res.outcomes;
    steps.push_back(st);
    if (!res.found) {
      std::ostringstream o;
      o << "sign search failed at " << idx.str() << " (levels [" << join(levels) << "], |B| = " << nb << ")";
      for (const auto& out : res.outcomes)
        if (!(std::abs(out.value) < out.tolerance))
          o << "; " << out.label << ": achieved " << fmt(std::abs(out.value)) << ", required < " << fmt(out.tolerance);
      at.failure = o.str();
      return at;
    }
    Block b;
    b.target = idx;
    b.host_copy = src.copy;
    for (int a = 0; a < nb; ++a) b.terms.push_back({ivs[a], res.theta[a]});
    for (int j = lv; j < m; ++j) {
      std::vector<DyadicInterval> supp;
      for (const auto& tm : b.terms) supp.push_back(tm.interval);
      chain.push_back({idx, levels[j], mean_under(src, supp, levels[j]), 0.0});
    }
    blocks.push_back(std::move(b));
  }

  ReductionCertificate& c = at.cert;
  c.kind = "scalar";
  c.mode = opts.mode;
  c.scalar = true;
  c.schedule = levels;
  c.source = d;
  c.target_copies = treg.copies();
  c.family.blocks = blocks;
  c.steps = std::move(steps);
  for (int l = 0; l < src.levels; ++l) c.level_averages.push_back(stable_mean(src.by_level[l]));
  for (auto& ch : chain) ch.level_average = c.level_averages[ch.level];
  c.chain = std::move(chain);
  std::vector<OmegaIndex> root;
  for (const auto& iv : level_intervals(levels[0])) root.push_back({src.copy, iv});
  c.lambda0_witness = diagonal_average(d, root);
  c.lambda0 = c.lambda0_witness.value;
  auto comp = compress(d, c.family);
  for (int s = 0; s < treg.dim(); ++s) {
    c.compressed_witnesses.push_back(diagonal_average(d, comp.positions[s]));
    c.witnesses.push_back(c.lambda0_witness);
    c.target_diagonal.push_back(c.lambda0);
  }
  finish(c);
  c.eps = d.exponent().burkholder() * eps;
  for (const auto& w : c.compressed_witnesses)
    if (!(std::abs(w.value - c.lambda0) < eps)) {
      at.failure = "recorded |lambda_I - lambda_0| = " + fmt(std::abs(w.value - c.lambda0)) + " not below eps";
      return at;
    }
  at.ok = true;
  return at;
}

}  // namespace

ReductionCertificate reduce_to_scalar_finite(const OperatorMatrix& d, int m, const ScalarOptions& opts) {
  if (m < 1) throw std::invalid_argument("m must be at least 1");
  if (!(opts.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  auto src = scalar_source(d);
  const int M = src.levels;
  if (M < m) throw InfeasibleError("pigeonhole infeasible: " + std::to_string(M) + " levels for m = " + std::to_string(m));
  const int tc = opts.target_copy > 0 ? opts.target_copy : m;
  if (tc < m) throw std::invalid_argument("target copy must be at least m");
  const double gamma = opts.gamma > 0.0 ? opts.gamma : opnorm_upper_unconditional(d);
  std::vector<double> avg;
  for (int l = 0; l < M; ++l) avg.push_back(stable_mean(src.by_level[l]));

  std::vector<std::string> notes, attempts;
  int x0 = opts.min_level >= 0 ? opts.min_level : 0;
  if (opts.mode == Mode::paper && gamma > 0.0) {
    double need = paper_scalar_depth(m, gamma, opts.eps);
    if (!(M > need))
      throw InfeasibleError("hypothesis not met: M = " + std::to_string(M) + " but need M > " + fmt(need));
    if (opts.min_level < 0)
      x0 = std::max(0, static_cast<int>(std::floor(m + 6.0 + 3.0 * std::log2(m) + 2.0 * std::log2(gamma / opts.eps))) + 1);
    notes.push_back("hypothesis met: M > " + fmt(need));
  }

  std::vector<std::vector<int>> tried;
  auto attempt = [&](const std::vector<int>& levels) -> std::optional<ReductionCertificate> {
    auto r = run_scalar(d, src, levels, opts.eps, tc, opts);
    if (r.ok) {
      r.cert.attempts = attempts;
      r.cert.notes = notes;
      return r.cert;
    }
    attempts.push_back("levels [" + join(levels) + "]: " + r.failure);
    return std::nullopt;
  };

  if (!opts.levels.empty()) {
    auto lv = opts.levels;
    if (static_cast<int>(lv.size()) != m) throw std::invalid_argument("explicit level list must have m entries");
    for (std::size_t i = 0; i < lv.size(); ++i) {
      if (lv[i] < 0 || lv[i] >= M || (i && lv[i] <= lv[i - 1]))
        throw std::invalid_argument("explicit levels must be increasing and within the copy");
    }
    double lo = avg[lv[0]], hi = lo;
    for (int l : lv) lo = std::min(lo, avg[l]), hi = std::max(hi, avg[l]);
    if (!(hi - lo < opts.eps / 2.0))
      throw InfeasibleError("explicit levels spread " + fmt(hi - lo) + " is not below eps/2");
    if (auto c = attempt(lv)) return *c;
  } else {
    for (int x = x0; x + m <= M; ++x) {
      std::vector<double> tail(avg.begin() + x, avg.end());
      auto sel = select_stable_levels(tail, x, m, opts.eps / 2.0, gamma);
      if (!sel) {
        attempts.push_back("no bin holds " + std::to_string(m) + " levels from level " + std::to_string(x));
        break;
      }
      if (std::find(tried.begin(), tried.end(), *sel) != tried.end()) continue;
      tried.push_back(*sel);
      // Levels inside one bin of width eps/2 need not be that close after clamping at the edges.
      double lo = avg[sel->front()], hi = lo;
      for (int l : *sel) lo = std::min(lo, avg[l]), hi = std::max(hi, avg[l]);
      if (!(hi - lo < opts.eps / 2.0)) continue;
      if (auto c = attempt(*sel)) return *c;
      if (opts.mode == Mode::paper) break;
    }
  }
  std::string msg = "scalar reduction failed";
  for (const auto& a : attempts) msg += "\n  " + a;
  throw InfeasibleError(msg);
}

namespace {

ReductionCertificate stitch_with_window(const OperatorMatrix& r, int copies, const ScalarOptions& opts, double w) {
  struct Candidate {
    int copy;
    int t;
    std::vector<int> levels;
    double lambda0;
    ReductionCertificate cert;
  };
  std::vector<Candidate> cands;
  std::uint64_t stream = 0;
  for (const auto& cs : r.registry().copies()) {
    auto rc = r.restrict_to_copy(cs.copy);
    auto src = scalar_source(rc);
    std::vector<double> avg;
    for (int l = 0; l < src.levels; ++l) avg.push_back(stable_mean(src.by_level[l]));
    for (int t = 1; t <= std::min(copies, src.levels); ++t) {
      // Level subsets of size t in lexicographic order.
      std::vector<int> sel(t);
      std::iota(sel.begin(), sel.end(), 0);
      int enumerated = 0;
      while (true) {
        double lo = avg[sel[0]], hi = lo;
        for (int l : sel) lo = std::min(lo, avg[l]), hi = std::max(hi, avg[l]);
        if (hi - lo < w / 2.0) {
          ScalarOptions so = opts;
          so.eps = w;
          so.levels = sel;
          so.target_copy = t;
          so.seed = derive_seed(opts.seed, ++stream);
          try {
            auto c = reduce_to_scalar_finite(rc, t, so);
            cands.push_back({cs.copy, t, sel, c.lambda0, std::move(c)});
          } catch (const InfeasibleError&) {
          }
        }
        if (++enumerated >= 4096) break;
        int i = t - 1;
        while (i >= 0 && sel[i] == src.levels - t + i) --i;
        if (i < 0) break;
        ++sel[i];
        for (int j = i + 1; j < t; ++j) sel[j] = sel[j - 1] + 1;
      }
    }
  }
  if (cands.empty()) throw InfeasibleError("no per-copy scalar reduction succeeded");

  int best_anchor = -1;
  std::vector<int> best_pick;
  for (std::size_t a = 0; a < cands.size(); ++a) {
    std::vector<int> pick;
    int prev = 0;
    for (int k = 1; k <= copies; ++k) {
      int chosen = -1;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        const auto& c = cands[i];
        if (c.t != k || c.copy <= prev || !(std::abs(c.lambda0 - cands[a].lambda0) < w)) continue;
        if (chosen < 0 || c.copy < cands[chosen].copy) chosen = static_cast<int>(i);
      }
      if (chosen < 0) break;
      pick.push_back(chosen);
      prev = cands[chosen].copy;
    }
    if (pick.size() > best_pick.size()) {
      best_pick = pick;
      best_anchor = static_cast<int>(a);
    }
    if (static_cast<int>(best_pick.size()) == copies) break;
  }
  if (static_cast<int>(best_pick.size()) < copies)
    throw InfeasibleError("stitching placed only " + std::to_string(best_pick.size()) + " of " +
                          std::to_string(copies) + " target copies within the agreement window " + fmt(w));

  ReductionCertificate c;
  c.kind = "scalar";
  c.mode = opts.mode;
  c.scalar = true;
  c.eps = opts.eps;
  c.source = r;
  for (int k = 1; k <= copies; ++k) c.target_copies.push_back({k, k - 1});
  const auto& anchor = cands[best_anchor];
  c.lambda0_witness = anchor.cert.lambda0_witness;
  c.lambda0 = anchor.lambda0;
  for (int k = 1; k <= copies; ++k) {
    const auto& cd = cands[best_pick[k - 1]];
    c.schedule.push_back(cd.copy);
    c.stitching.push_back({k, cd.copy, cd.levels, cd.lambda0});
    for (auto b : cd.cert.family.blocks) {
      b.target.copy = k;
      c.family.blocks.push_back(std::move(b));
    }
    for (const auto& ch : cd.cert.chain) {
      auto x = ch;
      x.target.copy = k;
      c.chain.push_back(x);
    }
  }
  auto comp = compress(r, c.family);
  for (std::size_t s = 0; s < c.family.blocks.size(); ++s) {
    c.compressed_witnesses.push_back(diagonal_average(r, comp.positions[s]));
    c.witnesses.push_back(c.lambda0_witness);
    c.target_diagonal.push_back(c.lambda0);
  }
  finish(c);
  c.notes.push_back("per-copy eps " + fmt(w) + ", agreement window " + fmt(w) + ", anchor copy " +
                    std::to_string(anchor.copy));
  return c;
}

}  // namespace

ReductionCertificate reduce_to_scalar_stitched(const OperatorMatrix& r, int copies, const ScalarOptions& opts) {
  if (copies < 1) throw std::invalid_argument("need at least one target copy");
  if (!r.is_diagonal()) throw std::invalid_argument("stitched reduction needs a diagonal operator");
  const Exponent& e = r.exponent();
  const double w0 = opts.eps / (2.0 * e.burkholder());
  // Adaptive mode widens the window and keeps the first result whose recomputed bound stays within eps.
  const std::vector<double> widen = opts.mode == Mode::paper ? std::vector<double>{1.0}
                                                             : std::vector<double>{1.0, 1.5, 2.0, 3.0};
  std::vector<std::string> failures;
  for (double f : widen) {
    const double w = w0 * f;
    try {
      auto c = stitch_with_window(r, copies, opts, w);
      if (c.certified() <= opts.eps) return c;
      failures.push_back("window " + fmt(w) + ": certified " + fmt(c.certified()) + " exceeds eps");
    } catch (const InfeasibleError& ex) {
      failures.push_back("window " + fmt(w) + ": " + ex.what());
    }
  }
  std::string msg = "stitched reduction failed";
  for (const auto& m : failures) msg += "\n  " + m;
  throw InfeasibleError(msg);
}

ReductionCertificate trivial_certificate(const OperatorMatrix& s) {
  if (!s.is_diagonal()) throw std::invalid_argument("trivial certificate needs a diagonal operator");
  ReductionCertificate c;
  c.kind = "diagonal";
  c.eps = 0.0;
  c.source = s;
  c.target_copies = s.registry().copies();
  for (int i = 0; i < s.dim(); ++i) {
    const auto& idx = s.basis()[i];
    c.family.blocks.push_back({idx, idx.copy, {{idx.interval, 1}}});
    c.witnesses.push_back(diagonal_average(s, {idx}));
    c.target_diagonal.push_back(c.witnesses.back().value);
  }
  c.schedule.assign(c.target_copies.size(), 0);
  finish(c);
  c.notes.push_back("identity family");
  return c;
}

ReductionCertificate compose_certificates(const ReductionCertificate& c1, const ReductionCertificate& c2, double d) {
  auto s = c1.target_operator();
  if (c2.source.basis() != s.basis()) throw std::invalid_argument("c2 source basis differs from c1 target basis");
  auto d2 = c2.source.diagonal();
  if (!c2.source.is_diagonal()) throw std::invalid_argument("c2 source must be the diagonal target of c1");
  for (int i = 0; i < s.dim(); ++i)
    if (std::abs(d2[i] - c1.target_diagonal[i]) > 1e-12)
      throw std::invalid_argument("c2 source entry at " + s.basis()[i].str() + " differs from c1 target");

  ReductionCertificate c;
  c.kind = "composite";
  c.mode = c1.mode == c2.mode ? c1.mode : Mode::adaptive;
  c.source = c1.source;
  c.target_copies = c2.target_copies;
  c.scalar = c2.scalar;
  c.schedule = c2.schedule;
  for (const auto& b2 : c2.family.blocks) {
    Block b;
    b.target = b2.target;
    b.host_copy = 0;
    for (const auto& k : b2.terms) {
      const Block* b1 = c1.family.find({b2.host_copy, k.interval});
      if (!b1) throw std::invalid_argument("c1 has no block for " + OmegaIndex{b2.host_copy, k.interval}.str());
      if (b.host_copy && b.host_copy != b1->host_copy) throw std::invalid_argument("composite block spans host copies");
      b.host_copy = b1->host_copy;
      for (const auto& l : b1->terms) b.terms.push_back({l.interval, l.sign * k.sign});
    }
    std::sort(b.terms.begin(), b.terms.end(),
              [](const BlockTerm& x, const BlockTerm& y) { return x.interval < y.interval; });
    c.family.blocks.push_back(std::move(b));
  }
  auto lift = [&](const DiagonalAverageWitness& w2) {
    DiagonalAverageWitness w;
    w.value = w2.value;
    for (const auto& p : w2.positions) {
      int i = s.position(p);
      if (i < 0) throw std::invalid_argument("witness position " + p.str() + " outside c1 target");
      const auto& inner = c1.witnesses.at(i).positions;
      w.positions.insert(w.positions.end(), inner.begin(), inner.end());
    }
    return w;
  };
  for (const auto& w2 : c2.witnesses) c.witnesses.push_back(lift(w2));
  c.target_diagonal = c2.target_diagonal;
  if (c2.scalar) {
    c.lambda0_witness = lift(c2.lambda0_witness);
    c.lambda0 = c2.lambda0;
  }
  c.eps1 = c1.certified();
  c.eps2 = c2.certified();
  c.transitivity_constant = d;
  c.transitivity_bound = d * c.eps1 + c.eps2;
  finish(c);
  c.eps = c.transitivity_bound;
  c.notes.push_back("direct " + c.residual.method + " bound " + fmt(c.residual.certified) + ", transitivity bound " +
                    fmt(c.transitivity_bound));
  if (c.transitivity_bound < c.residual.certified) {
    c.residual.certified = c.transitivity_bound;
    c.residual.method = "transitivity";
  }
  return c;
}

CertificateCheck validate_certificate(const ReductionCertificate& c) {
  CertificateCheck out;
  auto fail = [&](const std::string& m) {
    out.ok = false;
    out.failures.push_back(m);
  };
  auto reg = c.target_registry();
  if (c.family.targets() != reg.basis()) {
    fail("family targets do not match the target registry");
    return out;
  }
  auto g = gram_check(c.family);
  if (!g.ok) fail("gram check: " + g.message);
  auto dist = check_distributional_copy(c.family, reg);
  out.distribution_ok = dist.pass;
  if (!dist.pass) fail("distributional copy: " + dist.message);

  Compression comp;
  try {
    comp = compress(c.source, c.family);
  } catch (const std::exception& ex) {
    fail(std::string("compression: ") + ex.what());
    return out;
  }
  if (c.target_diagonal.size() != static_cast<std::size_t>(reg.dim())) {
    fail("target diagonal has the wrong length");
    return out;
  }
  auto cr = certify_residual(comp.residual(c.target_diagonal), reg, c.source.exponent());
  out.recomputed = cr.certified;
  double recorded = c.residual.certified;
  if (c.kind == "composite") {
    if (std::abs(std::min(cr.certified, c.transitivity_bound) - recorded) > 1e-12 * std::max(1.0, recorded))
      fail("recomputed bound differs from the recorded one");
    if (!(cr.certified <= c.transitivity_bound + 1e-12) && !(recorded <= c.transitivity_bound))
      fail("composite bound exceeds the transitivity bound");
  } else if (std::abs(cr.certified - recorded) > 1e-12 * std::max(1.0, recorded)) {
    fail("recomputed bound " + fmt(cr.certified) + " differs from recorded " + fmt(recorded));
  }

  out.witnesses_ok = true;
  if (c.witnesses.size() != c.target_diagonal.size()) {
    out.witnesses_ok = false;
    fail("witness count mismatch");
  } else {
    for (std::size_t i = 0; i < c.witnesses.size(); ++i) {
      double dev = c.witnesses[i].deviation(c.source);
      out.witness_deviation = std::max(out.witness_deviation, dev);
      if (!(dev <= 1e-12) || c.witnesses[i].value != c.target_diagonal[i]) {
        out.witnesses_ok = false;
        fail("witness for " + reg.basis()[i].str() + " does not validate");
      }
    }
  }
  if (c.scalar) {
    double dev = c.lambda0_witness.deviation(c.source);
    out.witness_deviation = std::max(out.witness_deviation, dev);
    if (!(dev <= 1e-12) || c.lambda0_witness.value != c.lambda0) {
      out.witnesses_ok = false;
      fail("lambda_0 witness does not validate");
    }
  }
  if (c.kind == "diagonal" && c.eps > 0.0 && !(recorded < c.eps)) fail("certified bound not below eps");
  if (c.kind == "diagonal" && c.eps == 0.0 && recorded != 0.0) fail("trivial certificate with nonzero residual");
  if (c.kind == "scalar" && !(recorded <= c.eps)) fail("certified bound above the scalar error");
  return out;
}

}  // namespace haarfact
