#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "haarfact/dyadic.hpp"
#include "haarfact/prodspace.hpp"
#include "haarfact/romega.hpp"

namespace haarfact {

// Operator in basis coordinates. Column (n,I) holds the coefficients of T h_I^n.
// Diagonal operators may be stored as a vector to keep deep single-copy truncations cheap.
class OperatorMatrix {
 public:
  OperatorMatrix() = default;
  OperatorMatrix(Exponent e, std::vector<OmegaIndex> basis, Eigen::MatrixXd entries);
  static OperatorMatrix diagonal(Exponent e, std::vector<OmegaIndex> basis, Eigen::VectorXd d);
  static OperatorMatrix identity(Exponent e, std::vector<OmegaIndex> basis);

  const Exponent& exponent() const { return e_; }
  const std::vector<OmegaIndex>& basis() const { return basis_; }
  int dim() const { return static_cast<int>(basis_.size()); }
  bool diagonal_storage() const { return diag_only_; }
  bool is_diagonal() const;

  double entry(int row, int col) const;
  Eigen::VectorXd diagonal() const;
  Eigen::MatrixXd dense() const;
  Eigen::VectorXd column(int col) const;
  int position(const OmegaIndex& idx) const;  // -1 when absent
  double measure(int pos) const { return basis_[pos].interval.measure_double(); }
  const BasisRegistry& registry() const;

  // Checks d_I = |I|^{-1} <h_I, T h_I> against a grid pairing; returns the largest deviation.
  double verify_diagonal(int max_checks = 64) const;

  // Restriction to the indices of one copy (diagonal operators only).
  OperatorMatrix restrict_to_copy(int copy) const;

  bool operator==(const OperatorMatrix& o) const;

 private:
  void index_basis();
  Exponent e_;
  std::vector<OmegaIndex> basis_;
  Eigen::MatrixXd m_;
  Eigen::VectorXd d_;
  bool diag_only_ = false;
  std::shared_ptr<const BasisRegistry> reg_;
};

Eigen::VectorXd apply(const OperatorMatrix& t, const Eigen::VectorXd& v);
OperatorMatrix compose(const OperatorMatrix& s, const OperatorMatrix& t);

// max ||A x||_{p,w} / ||B x||_{p,w} found by gradient ascent with restarts; a valid lower bound for
// the norm of A B^{-1} on the range of B. Rows of A and B index weighted cells.
double weighted_lp_ratio_lower(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& weights,
                               double p, int restarts, std::uint64_t seed);
double weighted_lp_opnorm_lower(const Eigen::MatrixXd& m, const Eigen::VectorXd& weights, double p, int restarts,
                                std::uint64_t seed);
// Lower bound for sup ||T f||_p / ||f||_p on the realization of T's registry.
double opnorm_lower(const OperatorMatrix& t, int restarts, std::uint64_t seed,
                    std::int64_t cell_cap = std::int64_t{1} << 16);

// (p*-1)^2 max|d| for diagonal T.
double opnorm_upper_unconditional(const OperatorMatrix& t);
// sum_{I,J} |I|^{-1/p} |J|^{1/p} |t_{J,I}|, valid for any matrix.
double opnorm_upper_entrywise(const OperatorMatrix& t, bool skip_diagonal = false);
// Unconditional bound on the diagonal part plus the entrywise bound on the rest.
double opnorm_upper(const OperatorMatrix& t);

struct NeumannInverse {
  OperatorMatrix inverse;
  double eps_bound = 0.0;
  double inverse_norm_bound = 1.0;  // 1 / (1 - eps_bound)
};
NeumannInverse neumann_invert(const OperatorMatrix& a, double eps_bound);

struct DiagonalAverageWitness {
  double value = 0.0;
  std::vector<OmegaIndex> positions;  // multiset of diagonal positions

  // Largest of |value - mean| and the membership failures (infinity if a position is missing).
  double deviation(const OperatorMatrix& t) const;
  bool validate(const OperatorMatrix& t, double tol = 1e-12) const { return deviation(t) <= tol; }
  bool operator==(const DiagonalAverageWitness&) const = default;
};
DiagonalAverageWitness diagonal_average(const OperatorMatrix& t, const std::vector<OmegaIndex>& positions);

}  // namespace haarfact
