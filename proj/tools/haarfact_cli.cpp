#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "haarfact/errors.hpp"
#include "haarfact/factorize.hpp"
#include "haarfact/generators.hpp"
#include "haarfact/random.hpp"
#include "haarfact/randblocks.hpp"
#include "haarfact/reduction.hpp"
#include "haarfact/serialize.hpp"
#include "haarfact/xpw.hpp"

using namespace haarfact;

namespace {

constexpr const char* kVersion = "haarfact 1.0";

struct Config {
  std::string command;
  double p = 2.0;
  int copies = -1;
  int source_copies = -1;
  int stage_copies = 5;
  std::string depths;
  double eps = -1.0;
  double delta = 1.0;
  std::uint64_t seed = 0;
  std::string mode = "adaptive";
  std::string search = "automatic";
  std::uint64_t budget = 0;
  std::vector<std::string> in;
  std::string out;
  std::string report;
  int m = 3;
  int stitch = 0;
  int cases = 0;
  int rounds = 8;
  int samples = 1000;
  std::string adversary = "fixed";
  double weight_exponent = -1.0;
  bool p_given = false;
};

// Accumulates the run report: inputs, bounds, and one verdict per invariant.
class Report {
 public:
  explicit Report(const Config& c) {
    doc_["schema"] = kReportSchema;
    doc_["command"] = c.command;
    doc_["config"] = {{"p", c.p},         {"copies", c.copies}, {"source_copies", c.source_copies},
                      {"depths", c.depths}, {"eps", c.eps},     {"delta", c.delta},
                      {"seed", c.seed},   {"mode", c.mode},     {"search", c.search},
                      {"budget", c.budget}, {"in", c.in},       {"out", c.out},
                      {"m", c.m},         {"stitch", c.stitch}, {"stage_copies", c.stage_copies},
                      {"cases", c.cases}, {"rounds", c.rounds}, {"samples", c.samples},
                      {"adversary", c.adversary}};
    doc_["log_base"] = "2";
    doc_["results"] = Json::object();
    doc_["invariants"] = Json::array();
  }

  Json& results() { return doc_["results"]; }

  void check(const std::string& name, bool pass, const std::string& detail = "") {
    doc_["invariants"].push_back({{"name", name}, {"pass", pass}, {"detail", detail}});
    std::cout << (pass ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) std::cout << ": " << detail;
    std::cout << "\n";
    all_ &= pass;
  }

  bool all_passed() const { return all_; }

  void error(const std::string& kind, const std::string& message) {
    doc_["error"] = {{"kind", kind}, {"message", message}};
  }

  void emit(const std::string& path) {
    doc_["pass"] = all_ && !doc_.contains("error");
    doc_["metadata"] = {{"tool", kVersion}, {"generated", timestamp()}};
    if (!path.empty()) save_json(path, doc_);
  }

 private:
  static std::string timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream o;
    o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return o.str();
  }

  Json doc_;
  bool all_ = true;
};

std::string num(double x) {
  std::ostringstream o;
  o << std::setprecision(6) << x;
  return o.str();
}

double eps_or(const Config& c, double fallback) { return c.eps > 0.0 ? c.eps : fallback; }
int copies_or(const Config& c, int fallback) { return c.copies > 0 ? c.copies : fallback; }

std::vector<int> parse_depths(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

// --depths d1,d2,... gives copy n depth d_n (negative omits it); otherwise the standard truncation.
BasisRegistry registry_for(const Config& c, int default_copies) {
  if (c.depths.empty()) return BasisRegistry::standard(copies_or(c, default_copies));
  std::vector<CopySpec> specs;
  auto d = parse_depths(c.depths);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] >= 0) specs.push_back({static_cast<int>(i) + 1, d[i]});
  return BasisRegistry(specs);
}

const std::string& input(const Config& c, std::size_t i, const char* what) {
  if (c.in.size() <= i) throw std::invalid_argument(std::string("missing --in for ") + what);
  return c.in[i];
}

void write_artifact(const Config& c, const Json& j) {
  if (c.out.empty()) return;
  Json doc = j;
  doc["metadata"] = {{"tool", kVersion}};
  save_json(c.out, doc);
}

void add_certificate_checks(Report& rep, const ReductionCertificate& cert) {
  auto chk = validate_certificate(cert);
  rep.results()["certified"] = cert.certified();
  rep.results()["method"] = cert.residual.method;
  rep.results()["recomputed"] = chk.recomputed;
  rep.results()["witness_deviation"] = chk.witness_deviation;
  rep.results()["failures"] = chk.failures;
  rep.check("certificate validates", chk.ok, chk.ok ? "" : chk.failures.front());
  rep.check("distributional copy", chk.distribution_ok);
  rep.check("average witnesses", chk.witnesses_ok, "max deviation " + num(chk.witness_deviation));
}

void cmd_constants(const Config& c, Report& rep) {
  auto k = paper_constants(c.p, c.delta, eps_or(c, 0.25));
  auto line = [](const std::string& label, double v) {
    std::printf("%-52s %.5g\n", label.c_str(), v);
  };
  line("p* - 1", k.burkholder);
  line("(p*-1)^2 (p*/2)^{3/2}", k.complementation);
  line("projection 2(p*-1)^2 (p*/2)^{3/2}", k.projection);
  line("large diagonal 2(p*-1)^4/(delta(1-eps)) (p*/2)^{3/2}", k.large_diagonal);
  line("dichotomy 4/(1-eps) (p*-1)^2 (p*/2)^{3/2}", k.dichotomy);
  if (c.p > 2.0) line("Rosenthal 7.35 p / ln p (natural log)", k.rosenthal);
  rep.results() = {{"p", k.p},
                   {"pstar", k.pstar},
                   {"delta", k.delta},
                   {"eps", k.eps},
                   {"burkholder", k.burkholder},
                   {"complementation", k.complementation},
                   {"projection", k.projection},
                   {"large_diagonal", k.large_diagonal},
                   {"dichotomy", k.dichotomy},
                   {"rosenthal", k.rosenthal},
                   {"rosenthal_log", "natural"}};
}

void cmd_verify_moments(const Config& c, Report& rep) {
  Exponent e(c.p);
  Json cases = Json::array();
  // f = h_{[0,1/2)} in host copy 2, B = D^1.
  auto reg = BasisRegistry::standard(2);
  RandomBlockSpec spec{2, 1, {DyadicInterval(1, 1), DyadicInterval(1, 2)}};
  auto f = reg.basis_function(reg.position({2, DyadicInterval(1, 1)}));
  auto y = exact_moments_Y(spec, f, reg, e);
  cases.push_back(to_json(y));
  rep.check("Y example", y.pass(), "variance " + num(y.variance) + ", bound " + num(y.bound));
  // T h_{K2} = h_{K1}, T h_{K1} = 0.
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(reg.dim(), reg.dim());
  m(reg.position({2, DyadicInterval(1, 1)}), reg.position({2, DyadicInterval(1, 2)})) = 1.0;
  OperatorMatrix t(e, reg.basis(), m);
  auto z = exact_moments_Z(spec, t, opnorm_upper(t));
  cases.push_back(to_json(z));
  rep.check("Z example", z.pass(), "variance " + num(z.variance) + ", bound " + num(z.bound));

  auto big = BasisRegistry::standard(copies_or(c, 4));
  const int host = big.copies().back().copy;
  const int depth = big.copies().back().depth;
  int failed = 0;
  for (int s = 0; s < c.cases; ++s) {
    std::uint64_t seed = derive_seed(c.seed, static_cast<std::uint64_t>(s));
    int level = static_cast<int>(seed % static_cast<std::uint64_t>(depth + 1));
    int count = 1 + static_cast<int>((seed >> 8) % static_cast<std::uint64_t>(std::min<std::int64_t>(10, std::int64_t{1} << level)));
    auto bs = random_block_spec(host, level, count, seed);
    auto g = random_grid_function(big.grid(), seed);
    auto rt = random_operator(big, e, seed, {});
    for (const auto& r : {exact_moments_Y(bs, g, big, e), exact_moments_W(bs, g, big, e),
                          exact_moments_Z(bs, rt, opnorm_upper(rt))}) {
      cases.push_back(to_json(r));
      failed += !r.pass();
    }
  }
  if (c.cases > 0) rep.check("seeded cases", failed == 0, std::to_string(3 * c.cases - failed) + "/" +
                                                            std::to_string(3 * c.cases) + " pass");
  rep.results()["cases"] = cases;
}

// An operator document, or a certificate whose target operator is used.
OperatorMatrix operator_input(const Config& c, const std::function<OperatorMatrix()>& generate) {
  if (c.in.empty()) return generate();
  auto j = load_json(c.in[0]);
  if (j.is_object() && j.value("schema", "") == kCertificateSchema) return certificate_from_json(j).target_operator();
  return operator_from_json(j);
}

void cmd_reduce_diagonal(const Config& c, Report& rep) {
  Exponent e(c.p);
  auto t = operator_input(c, [&] {
    RandomOperatorSpec s;
    s.norm_upper = 2.0;
    return random_operator(BasisRegistry::standard(c.source_copies > 0 ? c.source_copies : 7), e, c.seed, s);
  });
  auto target = registry_for(c, 3);
  DiagonalOptions o;
  o.eps = eps_or(c, 0.25);
  o.mode = parse_mode(c.mode);
  o.search = parse_search_mode(c.search);
  o.seed = c.seed;
  o.budget = c.budget;
  auto cert = reduce_to_diagonal(t, target, o);
  write_artifact(c, to_json(cert));
  std::cout << "certified " << num(cert.certified()) << " (" << cert.residual.method << "), eps " << num(o.eps)
            << "\n";
  rep.check("certified bound below eps", cert.certified() < o.eps, num(cert.certified()));
  add_certificate_checks(rep, cert);
}

void cmd_reduce_scalar(const Config& c, Report& rep) {
  Exponent e(c.p);
  ScalarOptions o;
  o.eps = eps_or(c, 0.3);
  o.mode = parse_mode(c.mode);
  o.search = parse_search_mode(c.search);
  o.seed = c.seed;
  o.budget = c.budget;
  ReductionCertificate cert;
  if (c.stitch > 0) {
    auto d = operator_input(c, [&] { return random_diagonal(BasisRegistry::standard(copies_or(c, 5)), e, c.seed, 0.0, 1.0); });
    cert = reduce_to_scalar_stitched(d, c.stitch, o);
  } else {
    auto d = operator_input(c, [&] {
      int depth = c.depths.empty() ? 11 : parse_depths(c.depths).front();
      return random_diagonal(BasisRegistry({{depth + 1, depth}}), e, c.seed, 0.0, 1.0);
    });
    cert = reduce_to_scalar_finite(d, c.m, o);
  }
  write_artifact(c, to_json(cert));
  std::cout << "lambda_0 " << num(cert.lambda0) << ", certified " << num(cert.certified()) << "\n";
  rep.results()["lambda0"] = cert.lambda0;
  rep.check("lambda_0 witness", cert.lambda0_witness.validate(cert.source) && cert.lambda0_witness.value == cert.lambda0);
  add_certificate_checks(rep, cert);
}

void cmd_compose(const Config& c, Report& rep) {
  auto c1 = certificate_from_json(load_json(input(c, 0, "the first certificate")));
  auto c2 = certificate_from_json(load_json(input(c, 1, "the second certificate")));
  const double d = projection_constant(c1.source.exponent());
  auto comp = compose_certificates(c1, c2, d);
  write_artifact(c, to_json(comp));
  std::cout << "direct " << num(comp.residual.column_sum) << ", certified " << num(comp.certified()) << ", D eps1 + eps2 "
            << num(comp.transitivity_bound) << "\n";
  rep.results()["transitivity_constant"] = d;
  rep.results()["transitivity_bound"] = comp.transitivity_bound;
  rep.check("certified within D eps1 + eps2", comp.certified() <= comp.transitivity_bound);
  add_certificate_checks(rep, comp);
}

void add_witness_checks(const Config& c, Report& rep, const FactorizationWitness& w) {
  auto chk = validate_witness(w, c.samples, c.seed);
  rep.results()["branch"] = w.branch;
  rep.results()["residual"] = w.residual;
  rep.results()["sampled_ratio"] = chk.max_ratio;
  rep.results()["norm_product"] = w.norm_product;
  rep.results()["paper_constant"] = w.paper_constant;
  rep.results()["failures"] = chk.failures;
  std::cout << "branch " << w.branch << ", residual " << num(w.residual) << ", sampled " << num(chk.max_ratio)
            << ", norm product " << num(w.norm_product) << " <= " << num(w.paper_constant) << "\n";
  rep.check("witness validates", chk.ok, chk.ok ? "" : chk.failures.front());
}

void cmd_factorize(const Config& c, Report& rep) {
  Exponent e(c.p);
  auto t = operator_input(c, [&] {
    return perturbed_identity(BasisRegistry::standard(c.source_copies > 0 ? c.source_copies : 7), e, c.seed, 0.05);
  });
  LargeDiagonalOptions o;
  o.delta = c.delta;
  o.reduction.eps = eps_or(c, 0.25);
  o.reduction.mode = parse_mode(c.mode);
  o.reduction.search = parse_search_mode(c.search);
  o.reduction.seed = c.seed;
  o.reduction.budget = c.budget;
  auto w = factor_large_diagonal(t, registry_for(c, 3), o);
  write_artifact(c, to_json(w));
  add_witness_checks(c, rep, w);
}

void cmd_dichotomy(const Config& c, Report& rep) {
  Exponent e(c.p);
  auto t = operator_input(c, [&] {
    RandomOperatorSpec s;
    s.diag_lo = 0.0;
    s.diag_hi = 1.0;
    s.offdiag_budget = 0.05;
    s.nonnegative = true;
    return random_operator(BasisRegistry::standard(c.source_copies > 0 ? c.source_copies : 7), e, c.seed, s);
  });
  DichotomyOptions o;
  o.eps = eps_or(c, 0.5);
  o.stage_copies = c.stage_copies;
  o.final_copies = copies_or(c, 2);
  o.diagonal.mode = o.scalar.mode = parse_mode(c.mode);
  o.diagonal.search = o.scalar.search = parse_search_mode(c.search);
  o.diagonal.seed = o.scalar.seed = c.seed;
  o.diagonal.budget = o.scalar.budget = c.budget;
  auto w = primary_dichotomy(t, o);
  write_artifact(c, to_json(w));
  rep.results()["lambda0"] = w.lambda0;
  add_witness_checks(c, rep, w);
}

void report_transcript(Report& rep, const GameTranscript& t, const WeightSequence& w) {
  auto chk = check_transcript(t, w);
  rep.results()["rounds"] = t.rounds.size();
  rep.results()["exact"] = chk.exact;
  rep.results()["biorthogonality_error"] = chk.biorthogonality_error;
  rep.results()["failures"] = chk.failures;
  rep.check("round invariants", chk.ok, chk.ok ? "" : chk.failures.front());
  rep.check("beta windows decided exactly", chk.exact);
}

void cmd_xpw_game(const Config& c, Report& rep) {
  const double p = c.p_given ? c.p : 4.0;
  auto w = WeightSequence::power(c.weight_exponent > 0.0 ? c.weight_exponent : 1.0 / p, p);
  auto star = star_property(w);
  rep.results()["star"] = to_string(star.verdict);
  rep.results()["star_reason"] = star.reason;
  auto adv = make_adversary(c.adversary, c.seed);
  auto t = play_game(*adv, c.rounds, w, eps_or(c, 0.1));
  write_artifact(c, to_json(t));
  for (const auto& r : t.rounds) {
    std::cout << "round " << r.k << ": n_k " << r.n_k << ", |E_k| " << r.e.size() << ", beta " << num(r.beta);
    if (!r.sum_exact.empty() && r.sum_exact.size() <= 40) std::cout << ", sum " << r.sum_exact;
    std::cout << "\n";
  }
  report_transcript(rep, t, w);
}

void cmd_check_distribution(const Config& c, Report& rep) {
  auto j = load_json(input(c, 0, "the block family"));
  auto fam = j.is_object() && j.value("schema", "") == kCertificateSchema ? certificate_from_json(j).family
                                                                          : family_from_json(j);
  auto reference = BasisRegistry::from_basis(fam.targets());
  auto d = check_distributional_copy(fam, reference, c.seed);
  rep.results() = {{"members", d.members},
                   {"exact", d.exact},
                   {"subsets_checked", d.subsets_checked},
                   {"pattern", d.pattern},
                   {"family_mass", d.family_mass.str()},
                   {"reference_mass", d.reference_mass.str()},
                   {"message", d.message}};
  rep.check("distributional copy", d.pass, d.message);
}

void cmd_validate(const Config& c, Report& rep) {
  auto j = load_json(input(c, 0, "the document"));
  auto schema = validate_document(j);
  std::cout << "schema " << schema << "\n";
  rep.results()["schema"] = schema;
  rep.check("schema", true);
  if (schema == kCertificateSchema) {
    add_certificate_checks(rep, certificate_from_json(j));
  } else if (schema == kWitnessSchema) {
    add_witness_checks(c, rep, witness_from_json(j));
  } else if (schema == kTranscriptSchema) {
    auto t = transcript_from_json(j);
    const std::string prefix = "power a=";
    if (t.weights.rfind(prefix, 0) != 0) throw std::invalid_argument("transcript weights '" + t.weights + "' cannot be rebuilt");
    report_transcript(rep, t, WeightSequence::power(std::stod(t.weights.substr(prefix.size())), t.p));
  } else if (schema == kFamilySchema) {
    auto g = gram_check(family_from_json(j));
    rep.check("gram", g.ok, g.message);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Haar-system operator reductions, factorization witnesses and X_{p,w} games"};
  app.require_subcommand(1);
  Config cfg;

  auto add = [&](const std::string& name, const std::string& help) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--p", cfg.p, "exponent p in (1, inf)");
    s->add_option("--copies", cfg.copies, "target copies");
    s->add_option("--source-copies", cfg.source_copies, "copies of the generated source operator");
    s->add_option("--depths", cfg.depths, "comma-separated depth per copy");
    s->add_option("--eps", cfg.eps, "tolerance");
    s->add_option("--delta", cfg.delta, "lower bound for |diagonal|");
    s->add_option("--seed", cfg.seed, "seed");
    s->add_option("--mode", cfg.mode, "paper|adaptive")->check(CLI::IsMember({"paper", "adaptive"}));
    s->add_option("--search", cfg.search, "exhaustive|sampled|automatic")
        ->check(CLI::IsMember({"exhaustive", "sampled", "automatic"}));
    s->add_option("--budget", cfg.budget, "sampled sign-search budget (0: default)");
    s->add_option("--in", cfg.in, "input document(s)");
    s->add_option("--out", cfg.out, "artifact output path");
    s->add_option("--report", cfg.report, "run report output path");
    s->add_option("--samples", cfg.samples, "samples for witness checks");
    return s;
  };
  add("constants", "print the constants for p, delta, eps");
  add("verify-moments", "exact moments of Y, W, Z")->add_option("--cases", cfg.cases, "seeded random cases");
  add("reduce-diagonal", "reduce an operator to a diagonal one");
  auto* rs = add("reduce-scalar", "reduce a diagonal operator to a scalar");
  rs->add_option("--m", cfg.m, "target depth m");
  rs->add_option("--stitch", cfg.stitch, "stitch this many target copies");
  add("compose", "compose two certificates (--in c1 --in c2)");
  add("factorize", "large-diagonal factorization witness");
  add("dichotomy", "factor T or I - T")->add_option("--stage-copies", cfg.stage_copies, "copies of the diagonal stage");
  auto* xg = add("xpw-game", "play the X_{p,w} game");
  xg->add_option("--rounds", cfg.rounds, "rounds");
  xg->add_option("--adversary", cfg.adversary, "fixed|random|greedy-max");
  xg->add_option("--weight-exponent", cfg.weight_exponent, "w_n = n^{-a}; default a = 1/p");
  add("check-distribution", "distributional-copy check of a block family");
  add("validate", "validate any document and recompute its verdicts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  auto* sub = app.get_subcommands().front();
  cfg.command = sub->get_name();
  cfg.p_given = sub->count("--p") > 0;

  Report rep(cfg);
  int status = 0;
  try {
    if (cfg.command == "constants") cmd_constants(cfg, rep);
    else if (cfg.command == "verify-moments") cmd_verify_moments(cfg, rep);
    else if (cfg.command == "reduce-diagonal") cmd_reduce_diagonal(cfg, rep);
    else if (cfg.command == "reduce-scalar") cmd_reduce_scalar(cfg, rep);
    else if (cfg.command == "compose") cmd_compose(cfg, rep);
    else if (cfg.command == "factorize") cmd_factorize(cfg, rep);
    else if (cfg.command == "dichotomy") cmd_dichotomy(cfg, rep);
    else if (cfg.command == "xpw-game") cmd_xpw_game(cfg, rep);
    else if (cfg.command == "check-distribution") cmd_check_distribution(cfg, rep);
    else if (cfg.command == "validate") cmd_validate(cfg, rep);
    status = rep.all_passed() ? 0 : 2;
  } catch (const InfeasibleError& e) {
    rep.error("infeasible", e.what());
    std::cerr << "infeasible: " << e.what() << "\n";
    status = 2;
  } catch (const FormatError& e) {
    rep.error("format", e.what());
    std::cerr << "format error: " << e.what() << "\n";
    status = 1;
  } catch (const ResourceError& e) {
    rep.error("resource", e.what());
    std::cerr << "resource limit: " << e.what() << "\n";
    status = 1;
  } catch (const std::exception& e) {
    rep.error("error", e.what());
    std::cerr << "error: " << e.what() << "\n";
    status = 1;
  }
  try {
    rep.emit(cfg.report);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
