#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace haarfact {

// Weights w_n, n >= 1, for X_{p,w} with p > 2.
class WeightSequence {
 public:
  enum class Kind { power, list };
  static WeightSequence power(double a, double p);
  static WeightSequence list(std::vector<double> w, double p);

  Kind kind() const { return kind_; }
  double p() const { return p_; }
  double a() const { return a_; }
  const std::vector<double>& values() const { return list_; }
  double r() const { return 2.0 * p_ / (p_ - 2.0); }  // 2p/(p-2)
  double operator()(std::int64_t n) const;
  // w_n^{2p/(p-2)}
  double rpow(std::int64_t n) const;
  std::string describe() const;

 private:
  Kind kind_ = Kind::power;
  double p_ = 4.0;
  double a_ = 0.25;
  std::vector<double> list_;
};

enum class StarVerdict { holds, fails, undecidable };
std::string to_string(StarVerdict v);

struct StarResult {
  StarVerdict verdict = StarVerdict::undecidable;
  std::string reason;
  std::vector<double> partial_sums;  // list generators only
};
StarResult star_property(const WeightSequence& w);

// Finitely supported coefficients keyed by the 1-based index.
using XpwVector = std::map<std::int64_t, double>;

double xpw_norm(const XpwVector& x, const WeightSequence& w);
double lp_seq_norm(const XpwVector& x, double p);
double l2_weighted_norm(const XpwVector& x, const WeightSequence& w);

struct BlockData {
  std::vector<std::int64_t> support;
  XpwVector f;
  double beta = 0.0;
  double f_p = 0.0;
  double f_2 = 0.0;
  XpwVector f_tilde;
};
BlockData block_data(const std::vector<std::int64_t>& e, const WeightSequence& w);

XpwVector block_span_project(const XpwVector& x, const std::vector<BlockData>& blocks);

struct GameRound {
  int k = 0;
  std::int64_t n_k = 0;
  std::vector<std::int64_t> e;
  double beta = 0.0;
  XpwVector b, b_tilde, b_star;
  std::string sum_exact;  // sum of w_n^{2p/(p-2)} over E_k as a reduced fraction, when rational
};

struct GameTranscript {
  double p = 4.0;
  double eps = 0.1;
  std::string weights;
  std::string adversary;
  std::vector<GameRound> rounds;
};

class Adversary {
 public:
  virtual ~Adversary() = default;
  virtual std::string name() const = 0;
  virtual std::int64_t move(int k, const std::vector<GameRound>& history) = 0;
};

std::unique_ptr<Adversary> fixed_adversary(std::vector<std::int64_t> schedule);
std::unique_ptr<Adversary> random_adversary(std::uint64_t seed, std::int64_t max_move);
// n_k = growth * max E_{k-1} + k: always pushes past everything played so far.
std::unique_ptr<Adversary> greedy_max_adversary(std::int64_t growth);
std::unique_ptr<Adversary> make_adversary(const std::string& name, std::uint64_t seed);

GameTranscript play_game(Adversary& adversary, int rounds, const WeightSequence& w, double eps,
                         std::int64_t index_budget = std::int64_t{1} << 24);

struct TranscriptCheck {
  bool ok = true;
  bool exact = true;  // the beta windows were decided in rational arithmetic
  std::vector<std::string> failures;
  double biorthogonality_error = 0.0;  // diagonal deviation in floating point
};
TranscriptCheck check_transcript(const GameTranscript& t, const WeightSequence& w);

// max over samples of max(r, 1/r)^2 with r = ||sum a x|| / ||sum a y||; a lower bound for the constant.
double impartial_equivalence(const std::vector<XpwVector>& xs, const WeightSequence& wx,
                             const std::vector<XpwVector>& ys, const WeightSequence& wy, int samples,
                             std::uint64_t seed);

// 7.35 p / ln p.
double rosenthal_projection_constant(double p);

}  // namespace haarfact
