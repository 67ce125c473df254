#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "haarfact/dyadic.hpp"
#include "haarfact/opalg.hpp"
#include "haarfact/prodspace.hpp"
#include "haarfact/romega.hpp"

namespace haarfact {

using SignVector = std::vector<int>;

// Signs for enumeration index `mask`: bit j set means theta_j = -1.
SignVector signs_from_mask(std::uint64_t mask, int n);

struct RandomBlockSpec {
  int host_copy = 1;
  int level = 0;                          // N
  std::vector<DyadicInterval> intervals;  // B, all at `level`

  void validate() const;
  double union_measure() const;  // |B| 2^{-N}
  Block block(const SignVector& theta, const OmegaIndex& target) const;
};

// constant + sum_j c_j theta_j + sum_{j != k} g_jk theta_j theta_k.
struct SignForm {
  double constant = 0.0;
  std::vector<double> linear;
  Eigen::MatrixXd quadratic;  // empty, or n x n with zero diagonal

  double eval(const SignVector& theta) const;
  // Variance under uniform signs.
  double variance() const;
  bool identically_zero() const;
};

SignForm y_form(const RandomBlockSpec& spec, const GridFunction& f, const BasisRegistry& reg);
SignForm w_form(const RandomBlockSpec& spec, const GridFunction& x, const BasisRegistry& reg);
SignForm z_form(const RandomBlockSpec& spec, const OperatorMatrix& t);

// Direct evaluations from the definitions (block realized on the grid, or the coefficient Gram for Z).
double eval_Y(const RandomBlockSpec& spec, const GridFunction& f, const BasisRegistry& reg, const SignVector& theta);
double eval_W(const RandomBlockSpec& spec, const GridFunction& x, const BasisRegistry& reg, const SignVector& theta);
double eval_Z(const RandomBlockSpec& spec, const OperatorMatrix& t, const SignVector& theta);

enum class MomentKind { Y, W, Z };
std::string to_string(MomentKind k);

struct MomentReport {
  MomentKind kind = MomentKind::Y;
  std::string mode = "exact";  // exact | monte-carlo
  std::uint64_t samples = 0;
  double mean = 0.0;
  double variance = 0.0;
  double mean_stderr = 0.0;
  double variance_stderr = 0.0;
  double closed_form_variance = 0.0;
  double bound = 0.0;
  bool mean_ok = false;
  bool closed_form_ok = false;
  bool bound_ok = false;
  bool pass() const { return mean_ok && closed_form_ok && bound_ok; }
};

inline constexpr int kEnumerationCap = 20;

// Exhaustive moments of a sign form; throws ResourceError above the enumeration cap.
void enumerate_moments(const SignForm& form, double& mean, double& variance);

MomentReport exact_moments_Y(const RandomBlockSpec& spec, const GridFunction& f, const BasisRegistry& reg,
                             const Exponent& e);
MomentReport exact_moments_W(const RandomBlockSpec& spec, const GridFunction& x, const BasisRegistry& reg,
                             const Exponent& e);
MomentReport exact_moments_Z(const RandomBlockSpec& spec, const OperatorMatrix& t, double t_norm_upper);

MomentReport monte_carlo_moments(MomentKind kind, const SignForm& form, std::uint64_t samples, std::uint64_t seed);

// Variance bounds; norm arguments must be sound upper bounds.
double variance_bound_Y(const RandomBlockSpec& spec, const GridFunction& f, const Exponent& e);
double variance_bound_W(const RandomBlockSpec& spec, const GridFunction& x, const Exponent& e);
double variance_bound_Z(const RandomBlockSpec& spec, double t_norm_upper, const Exponent& e);

// Smallest integer N strictly above p*(2 log2 ||T|| + log2(2^{2n+3}/eta^2 + sum eta_j^{-2})).
struct StarBound {
  double rhs = 0.0;
  int n_min = 0;
  std::string log_base = "2";
};
StarBound condition_star(int n, double t_norm_upper, double eta, const std::vector<double>& eta_list, double p);

struct SignTarget {
  std::string label;
  SignForm form;
  double tolerance = 0.0;  // require |form(theta)| < tolerance
};

enum class SearchMode { exhaustive, sampled, automatic };
std::string to_string(SearchMode m);
SearchMode parse_search_mode(const std::string& s);

struct TargetOutcome {
  std::string label;
  double value = 0.0;
  double tolerance = 0.0;
};

struct SignSearchResult {
  bool found = false;
  std::string mode;
  SignVector theta;              // the winner, or the best candidate on failure
  std::uint64_t winner_index = 0;  // enumeration mask or draw number
  std::uint64_t tried = 0;
  double score = 0.0;            // max |value| / tolerance of theta
  std::vector<TargetOutcome> outcomes;
};

struct SignSearchOptions {
  SearchMode mode = SearchMode::automatic;
  std::uint64_t budget = 0;  // 0 picks the default
  std::uint64_t seed = 0;
  int exhaustive_cap = kEnumerationCap;
  int threads = 0;  // 0 uses the hardware concurrency
};

// Chebyshev estimate sum Var_i / tol_i^2 of the failure probability of one uniform draw.
double chebyshev_failure_bound(const std::vector<SignTarget>& targets);
std::uint64_t default_sample_budget(const std::vector<SignTarget>& targets);

SignSearchResult sign_search(int n, const std::vector<SignTarget>& targets, const SignSearchOptions& opts);

struct LambdaMoments {
  double mean_plus = 0.0, mean_minus = 0.0;
  double var_plus = 0.0, var_minus = 0.0;
  double expected_mean = 0.0;
  double bound = 0.0;
  std::uint64_t patterns = 0;
  bool mean_ok = false;
  bool bound_ok = false;
};

// d holds the diagonal at level k (2^k entries, left to right); B lies in D^m with m < k.
LambdaMoments lambda_pm_moments(const std::vector<double>& d, int k, const std::vector<DyadicInterval>& b,
                                double diag_upper);
// lambda^+(theta) and lambda^-(theta) computed from Gamma^{+-}(theta).
std::pair<double, double> lambda_pm(const std::vector<double>& d, int k, const std::vector<DyadicInterval>& b,
                                    const SignVector& theta);

}  // namespace haarfact
