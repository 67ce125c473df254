#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "haarfact/opalg.hpp"
#include "haarfact/reduction.hpp"

namespace haarfact {

struct Constants {
  double p = 2.0, pstar = 2.0, delta = 1.0, eps = 0.25;
  double burkholder = 1.0;             // p* - 1
  double complementation = 1.0;        // (p*-1)^2 (p*/2)^{3/2}
  double projection = 2.0;             // 2 (p*-1)^2 (p*/2)^{3/2}
  double large_diagonal = 0.0;         // 2 (p*-1)^4 / (delta (1-eps)) (p*/2)^{3/2}
  double dichotomy = 0.0;              // 4 / (1-eps) (p*-1)^2 (p*/2)^{3/2}
  double rosenthal = 0.0;              // 7.35 p / ln p, for p > 2
};
Constants paper_constants(double p, double delta, double eps);

// I = A X B on the target truncation, where X is the factored operator on the source truncation.
struct FactorizationWitness {
  std::string kind = "large-diagonal";  // large-diagonal | dichotomy
  std::string branch = "T";             // T | I-T
  double delta = 0.0;
  double eps = 0.0;
  OperatorMatrix factored;
  std::vector<OmegaIndex> target_basis;
  Eigen::MatrixXd a;  // target x source
  Eigen::MatrixXd b;  // source x target
  double residual = 0.0;  // certified ||A X B - I||
  std::string residual_method;
  double reduction_bound = 0.0;  // certified ||A0 - I|| before inversion
  double inverse_bound = 1.0;
  double a_bound = 0.0, b_bound = 0.0, norm_product = 0.0;
  double paper_constant = 0.0;
  double scale = 1.0;  // lambda_0, 1 - lambda_0, or 1
  bool has_lambda0 = false;
  double lambda0 = 0.0;
  DiagonalAverageWitness lambda0_witness;
  ReductionCertificate certificate;
  std::vector<std::string> notes;
};

struct LargeDiagonalOptions {
  double delta = 1.0;
  DiagonalOptions reduction;  // reduction.eps is the factorization eps
};

FactorizationWitness factor_large_diagonal(const OperatorMatrix& t, const BasisRegistry& target,
                                           const LargeDiagonalOptions& opts);

struct DichotomyOptions {
  double eps = 0.5;
  int stage_copies = 4;  // target copies of the diagonal reduction
  int final_copies = 2;  // target copies of the scalar stitching
  DiagonalOptions diagonal;
  ScalarOptions scalar;
};

FactorizationWitness primary_dichotomy(const OperatorMatrix& t, const DichotomyOptions& opts);

struct WitnessCheck {
  bool ok = true;
  double max_ratio = 0.0;  // sampled max ||A X B v - v|| / ||v||
  std::vector<std::string> failures;
};
WitnessCheck validate_witness(const FactorizationWitness& w, int samples = 1000, std::uint64_t seed = 0);

}  // namespace haarfact
