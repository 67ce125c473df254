#include "haarfact/opalg.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

#include "haarfact/errors.hpp"
#include "haarfact/random.hpp"

namespace haarfact {

OperatorMatrix::OperatorMatrix(Exponent e, std::vector<OmegaIndex> basis, Eigen::MatrixXd entries)
    : e_(e), basis_(std::move(basis)), m_(std::move(entries)) {
  if (m_.rows() != dim() || m_.cols() != dim()) throw std::invalid_argument("operator entries must be dim x dim");
  if (!m_.allFinite()) throw std::domain_error("non-finite operator entry");
  index_basis();
}

OperatorMatrix OperatorMatrix::diagonal(Exponent e, std::vector<OmegaIndex> basis, Eigen::VectorXd d) {
  OperatorMatrix t;
  t.e_ = e;
  t.basis_ = std::move(basis);
  if (d.size() != t.dim()) throw std::invalid_argument("diagonal length must equal dim");
  if (!d.allFinite()) throw std::domain_error("non-finite operator entry");
  t.d_ = std::move(d);
  t.diag_only_ = true;
  t.index_basis();
  return t;
}

OperatorMatrix OperatorMatrix::identity(Exponent e, std::vector<OmegaIndex> basis) {
  auto n = static_cast<Eigen::Index>(basis.size());
  return OperatorMatrix(e, std::move(basis), Eigen::MatrixXd::Identity(n, n));
}

void OperatorMatrix::index_basis() {
  for (const auto& b : basis_)
    if (!b.valid()) throw std::invalid_argument("invalid basis index " + b.str());
  for (std::size_t i = 1; i < basis_.size(); ++i)
    if (compare_omega(basis_[i - 1], basis_[i]) >= 0)
      throw std::invalid_argument("basis is not strictly increasing at " + basis_[i].str());
  reg_ = std::make_shared<const BasisRegistry>(BasisRegistry::from_basis(basis_));
}

const BasisRegistry& OperatorMatrix::registry() const { return *reg_; }

int OperatorMatrix::position(const OmegaIndex& idx) const { return reg_->position(idx); }

bool OperatorMatrix::is_diagonal() const {
  if (diag_only_) return true;
  for (int c = 0; c < dim(); ++c)
    for (int r = 0; r < dim(); ++r)
      if (r != c && m_(r, c) != 0.0) return false;
  return true;
}

double OperatorMatrix::entry(int row, int col) const {
  if (diag_only_) return row == col ? d_[row] : 0.0;
  return m_(row, col);
}

Eigen::VectorXd OperatorMatrix::diagonal() const { return diag_only_ ? d_ : Eigen::VectorXd(m_.diagonal()); }

Eigen::MatrixXd OperatorMatrix::dense() const {
  if (!diag_only_) return m_;
  if (dim() > 4096) throw ResourceError("diagonal operator too large to densify");
  return d_.asDiagonal();
}

Eigen::VectorXd OperatorMatrix::column(int col) const {
  if (!diag_only_) return m_.col(col);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim());
  v[col] = d_[col];
  return v;
}

double OperatorMatrix::verify_diagonal(int max_checks) const {
  double worst = 0.0;
  int stride = std::max(1, dim() / std::max(1, max_checks));
  for (int i = 0; i < dim(); i += stride) {
    int copy = basis_[i].copy;
    BasisRegistry one({{copy, reg_->depth_of(copy)}});
    int base = reg_->position({copy, DyadicInterval(0, 1)});
    Eigen::VectorXd col = column(i).segment(base, one.dim());
    auto tf = realize(col, one);
    auto h = one.basis_function(i - base);
    double d = pairing(h, tf) / measure(i);
    worst = std::max(worst, std::abs(d - entry(i, i)));
  }
  return worst;
}

OperatorMatrix OperatorMatrix::restrict_to_copy(int copy) const {
  int base = reg_->position({copy, DyadicInterval(0, 1)});
  if (base < 0) throw std::invalid_argument("copy not present");
  int n = static_cast<int>((std::size_t{2} << reg_->depth_of(copy)) - 1);
  std::vector<OmegaIndex> sub(basis_.begin() + base, basis_.begin() + base + n);
  if (diag_only_) return diagonal(e_, sub, d_.segment(base, n));
  return OperatorMatrix(e_, sub, m_.block(base, base, n, n));
}

bool OperatorMatrix::operator==(const OperatorMatrix& o) const {
  if (e_.p != o.e_.p || basis_ != o.basis_ || diag_only_ != o.diag_only_) return false;
  return diag_only_ ? d_ == o.d_ : m_ == o.m_;
}

Eigen::VectorXd apply(const OperatorMatrix& t, const Eigen::VectorXd& v) {
  if (v.size() != t.dim()) throw std::invalid_argument("dimension mismatch in apply");
  if (t.diagonal_storage()) return t.diagonal().cwiseProduct(v);
  return t.dense() * v;
}

OperatorMatrix compose(const OperatorMatrix& s, const OperatorMatrix& t) {
  if (s.basis() != t.basis()) throw std::invalid_argument("compose needs operators on the same basis");
  if (s.diagonal_storage() && t.diagonal_storage())
    return OperatorMatrix::diagonal(s.exponent(), s.basis(), s.diagonal().cwiseProduct(t.diagonal()));
  return OperatorMatrix(s.exponent(), s.basis(), s.dense() * t.dense());
}

namespace {

double wnorm_pow(const Eigen::VectorXd& y, const Eigen::VectorXd& w, double p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s += w[i] * std::pow(std::abs(y[i]), p);
  return s;
}

Eigen::VectorXd psi(const Eigen::VectorXd& y, const Eigen::VectorXd& w, double p) {
  Eigen::VectorXd g(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    g[i] = y[i] == 0.0 ? 0.0 : w[i] * std::pow(std::abs(y[i]), p - 1.0) * (y[i] > 0 ? 1.0 : -1.0);
  return g;
}

double ratio_at(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& w, double p,
                const Eigen::VectorXd& x) {
  double den = wnorm_pow(b * x, w, p);
  if (den == 0.0) return -1.0;
  return std::pow(wnorm_pow(a * x, w, p), 1.0 / p) / std::pow(den, 1.0 / p);
}

double ascend(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& w, double p,
              Eigen::VectorXd x) {
  double best = ratio_at(a, b, w, p, x);
  if (best <= 0.0) return std::max(best, 0.0);
  double t = 0.5;
  for (int it = 0; it < 300 && t > 1e-12; ++it) {
    Eigen::VectorXd y = a * x;
    Eigen::VectorXd z = b * x;
    double ny = wnorm_pow(y, w, p);
    double nz = wnorm_pow(z, w, p);
    Eigen::VectorXd g = a.transpose() * psi(y, w, p) / ny - b.transpose() * psi(z, w, p) / nz;
    double gn = g.norm();
    if (!(gn > 0.0) || !std::isfinite(gn)) break;
    Eigen::VectorXd cand = x + (t * x.norm() / gn) * g;
    double r = ratio_at(a, b, w, p, cand);
    if (r > best) {
      best = r;
      x = cand;
      t = std::min(1.0, t * 2.0);
    } else {
      t *= 0.5;
    }
  }
  return best;
}

}  // namespace

double weighted_lp_ratio_lower(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& weights,
                               double p, int restarts, std::uint64_t seed) {
  if (a.cols() != b.cols() || a.rows() != weights.size() || b.rows() != weights.size())
    throw std::invalid_argument("shape mismatch in ratio ascent");
  const Eigen::Index n = a.cols();
  double best = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[i] = 1.0;
    best = std::max(best, ratio_at(a, b, weights, p, e));
  }
  std::vector<std::future<double>> jobs;
  for (int r = 0; r < restarts; ++r)
    jobs.push_back(std::async(std::launch::deferred, [&, r] {
      auto rng = make_rng(seed, static_cast<std::uint64_t>(r));
      Eigen::VectorXd x(n);
      for (Eigen::Index i = 0; i < n; ++i) x[i] = gaussian(rng);
      return ascend(a, b, weights, p, x);
    }));
  for (auto& j : jobs) best = std::max(best, j.get());
  return best;
}

double weighted_lp_opnorm_lower(const Eigen::MatrixXd& m, const Eigen::VectorXd& weights, double p, int restarts,
                                std::uint64_t seed) {
  if (m.rows() != m.cols()) throw std::invalid_argument("square matrix expected");
  return weighted_lp_ratio_lower(m, Eigen::MatrixXd::Identity(m.rows(), m.cols()), weights, p, restarts, seed);
}

double opnorm_lower(const OperatorMatrix& t, int restarts, std::uint64_t seed, std::int64_t cell_cap) {
  const auto& reg = t.registry();
  auto g = reg.grid(cell_cap);
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(g->cells()), t.dim());
  for (int i = 0; i < t.dim(); ++i) {
    auto v = reg.basis_function(i, cell_cap).expand();
    for (std::size_t c = 0; c < v.size(); ++c) phi(static_cast<Eigen::Index>(c), i) = v[c];
  }
  Eigen::VectorXd w = Eigen::VectorXd::Constant(phi.rows(), g->cell_measure_double());
  // Seed the ascent at each basis vector, where diagonal maps are exact.
  double best = 0.0;
  for (int i = 0; i < t.dim(); ++i) {
    double num = lp_norm(realize(t.column(i), reg, cell_cap), t.exponent());
    double den = lp_norm(reg.basis_function(i, cell_cap), t.exponent());
    best = std::max(best, num / den);
  }
  return std::max(best, weighted_lp_ratio_lower(phi * t.dense(), phi, w, t.exponent().p, restarts, seed));
}

double opnorm_upper_unconditional(const OperatorMatrix& t) {
  if (!t.is_diagonal()) throw std::invalid_argument("unconditional bound needs a diagonal operator");
  double b = t.exponent().burkholder();
  double m = t.dim() ? t.diagonal().cwiseAbs().maxCoeff() : 0.0;
  return b * b * m;
}

double opnorm_upper_entrywise(const OperatorMatrix& t, bool skip_diagonal) {
  const double p = t.exponent().p;
  double s = 0.0;
  if (t.diagonal_storage()) {
    if (skip_diagonal) return 0.0;
    return t.diagonal().cwiseAbs().sum();
  }
  Eigen::MatrixXd m = t.dense();
  std::vector<double> wl(t.dim());
  for (int i = 0; i < t.dim(); ++i) wl[i] = std::pow(t.measure(i), 1.0 / p);
  for (int c = 0; c < t.dim(); ++c)
    for (int r = 0; r < t.dim(); ++r) {
      if (skip_diagonal && r == c) continue;
      if (m(r, c) != 0.0) s += std::abs(m(r, c)) * wl[r] / wl[c];
    }
  return s;
}

double opnorm_upper(const OperatorMatrix& t) {
  double b = t.exponent().burkholder();
  double dmax = t.dim() ? t.diagonal().cwiseAbs().maxCoeff() : 0.0;
  return b * b * dmax + opnorm_upper_entrywise(t, true);
}

NeumannInverse neumann_invert(const OperatorMatrix& a, double eps_bound) {
  if (!(eps_bound >= 0.0) || !(eps_bound < 1.0))
    throw std::invalid_argument("refusing to invert: certified ||A - I|| bound " + std::to_string(eps_bound) +
                                " is not below 1");
  NeumannInverse out;
  out.eps_bound = eps_bound;
  out.inverse_norm_bound = 1.0 / (1.0 - eps_bound);
  if (a.diagonal_storage()) {
    Eigen::VectorXd d = a.diagonal();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (d[i] == 0.0) throw std::domain_error("singular operator");
      d[i] = 1.0 / d[i];
    }
    out.inverse = OperatorMatrix::diagonal(a.exponent(), a.basis(), d);
    return out;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a.dense());
  if (!lu.isInvertible()) throw std::domain_error("numerically singular operator");
  out.inverse = OperatorMatrix(a.exponent(), a.basis(), lu.inverse());
  return out;
}

double DiagonalAverageWitness::deviation(const OperatorMatrix& t) const {
  if (positions.empty()) return std::numeric_limits<double>::infinity();
  std::vector<double> vals;
  vals.reserve(positions.size());
  for (const auto& p : positions) {
    int i = t.position(p);
    if (i < 0) return std::numeric_limits<double>::infinity();
    vals.push_back(t.entry(i, i));
  }
  return std::abs(value - stable_mean(vals));
}

DiagonalAverageWitness diagonal_average(const OperatorMatrix& t, const std::vector<OmegaIndex>& positions) {
  if (positions.empty()) throw std::invalid_argument("diagonal average over an empty set");
  std::vector<double> vals;
  for (const auto& p : positions) {
    int i = t.position(p);
    if (i < 0) throw std::invalid_argument("position " + p.str() + " not in operator basis");
    vals.push_back(t.entry(i, i));
  }
  return {stable_mean(vals), positions};
}

}  // namespace haarfact
