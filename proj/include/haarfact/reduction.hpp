#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "haarfact/opalg.hpp"
#include "haarfact/randblocks.hpp"
#include "haarfact/romega.hpp"

namespace haarfact {

enum class Mode { paper, adaptive };
std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

// 2(p*-1)^2 (p*/2)^{3/2}: bound for the orthogonal projection onto the block span.
double projection_constant(const Exponent& e);

struct CertifiedResidual {
  std::vector<double> residuals;          // ||Delta h_I||_p per target column
  std::vector<double> offdiag_residuals;  // same with the diagonal of Delta removed
  double column_sum = 0.0;                // sum |I|^{-1/p} r_I
  double split = 0.0;                     // (p*-1) max |Delta_II| + off-diagonal column sum
  double certified = 0.0;                 // min of the two
  std::string method;                     // which of the two is smaller
};

// Both bounds are sound for ||Delta|| as an operator on the target truncation.
CertifiedResidual certify_residual(const Eigen::MatrixXd& delta, const BasisRegistry& target, const Exponent& e);

// j^{-1} E T j for the block family; the diagonal is split as R + |I|^{-1} Z_I.
struct Compression {
  Eigen::MatrixXd matrix;
  std::vector<double> diagonal_average;  // |I|^{-1} sum_K <h_K, T h_K>, an average of diagonal entries
  std::vector<double> cross;             // |I|^{-1} Z_I
  std::vector<std::vector<OmegaIndex>> positions;
  // matrix minus diag(target) with the diagonal formed as (average - target) + cross.
  Eigen::MatrixXd residual(const std::vector<double>& target) const;
};
Compression compress(const OperatorMatrix& t, const BlockFamily& family);

struct StepRecord {
  OmegaIndex target;
  int host_copy = 0;
  int block_level = 0;
  int block_size = 0;
  std::string search;
  bool found = false;
  std::uint64_t tried = 0;
  std::uint64_t winner_index = 0;
  std::vector<TargetOutcome> outcomes;  // achieved |value| against required tolerance
};

struct ColumnRecord {
  OmegaIndex target;
  double residual = 0.0;
  double weighted = 0.0;      // |I|^{-1/p} residual
  double paper_target = 0.0;  // eps / 2^{2n+1+n/p}
};

struct ChainRecord {
  OmegaIndex target;
  int level = 0;              // future level n_j
  double block_average = 0.0; // lambda_I^{n_j}
  double level_average = 0.0; // lambda_{n_j}
};

struct StitchRecord {
  int target_copy = 0;
  int host_copy = 0;
  std::vector<int> levels;
  double lambda0 = 0.0;
};

struct ReductionCertificate {
  std::string kind = "diagonal";  // diagonal | scalar | composite
  Mode mode = Mode::adaptive;
  double eps = 0.0;
  std::vector<int> schedule;  // k(n) per target copy, or the stabilized levels
  OperatorMatrix source;
  std::vector<CopySpec> target_copies;
  BlockFamily family;
  std::vector<double> target_diagonal;
  std::vector<DiagonalAverageWitness> witnesses;
  bool scalar = false;
  double lambda0 = 0.0;
  DiagonalAverageWitness lambda0_witness;
  Eigen::MatrixXd compressed;
  CertifiedResidual residual;
  std::vector<StepRecord> steps;
  std::vector<ColumnRecord> columns;
  std::vector<double> level_averages;
  std::vector<DiagonalAverageWitness> compressed_witnesses;  // lambda_I per target index (scalar)
  std::vector<ChainRecord> chain;
  std::vector<StitchRecord> stitching;
  double eps1 = 0.0, eps2 = 0.0, transitivity_constant = 0.0, transitivity_bound = 0.0;
  std::vector<std::string> attempts;
  std::vector<std::string> notes;

  BasisRegistry target_registry() const { return BasisRegistry(target_copies); }
  OperatorMatrix target_operator() const;
  double certified() const { return residual.certified; }
};

struct DiagonalOptions {
  double eps = 0.25;
  Mode mode = Mode::adaptive;
  std::vector<int> schedule;  // per target copy; empty lets the mode choose
  int k_min = 1;
  int k_max = 0;  // 0: deepest the source registry supports
  SearchMode search = SearchMode::automatic;
  int exhaustive_block_cap = 16;
  std::uint64_t seed = 0;
  std::uint64_t budget = 0;
  double safety = 0.5;        // share of eps handed to the per-entry tolerances
  double t_norm_upper = 0.0;  // 0 computes opnorm_upper(T)
};

std::vector<int> paper_schedule(int copies, const Exponent& e, double t_norm_upper, double eps);
double paper_tolerance_zy(int n, double eps);
double paper_tolerance_w(int n, int m, double eps, const Exponent& e);

ReductionCertificate reduce_to_diagonal(const OperatorMatrix& t, const BasisRegistry& target,
                                        const DiagonalOptions& opts);

// Lowest bin of width `width` over [-gamma, gamma] holding `count` averages; smallest levels first.
std::optional<std::vector<int>> select_stable_levels(const std::vector<double>& averages, int first_level, int count,
                                                    double width, double gamma);

struct ScalarOptions {
  double eps = 0.3;
  Mode mode = Mode::adaptive;
  SearchMode search = SearchMode::automatic;
  int exhaustive_block_cap = 16;
  std::uint64_t seed = 0;
  std::uint64_t budget = 0;
  int min_level = -1;       // -1: 0 in adaptive mode, the hypothesis start level in paper mode
  std::vector<int> levels;  // explicit stabilized levels; skips the pigeonhole step
  int target_copy = 0;      // 0: m
  double gamma = 0.0;       // 0 uses opnorm_upper_unconditional
};

double paper_scalar_depth(int m, double gamma, double eps);

ReductionCertificate reduce_to_scalar_finite(const OperatorMatrix& d, int m, const ScalarOptions& opts);
// Hosts target copies 1..copies in distinct copies of the diagonal operator r and agrees on one lambda_0.
ReductionCertificate reduce_to_scalar_stitched(const OperatorMatrix& r, int copies, const ScalarOptions& opts);

// The identity block family for a diagonal operator: zero residual.
ReductionCertificate trivial_certificate(const OperatorMatrix& s);

ReductionCertificate compose_certificates(const ReductionCertificate& c1, const ReductionCertificate& c2, double d);

struct CertificateCheck {
  bool ok = true;
  std::vector<std::string> failures;
  double recomputed = 0.0;
  bool distribution_ok = false;
  bool witnesses_ok = false;
  double witness_deviation = 0.0;
};
CertificateCheck validate_certificate(const ReductionCertificate& c);

}  // namespace haarfact
