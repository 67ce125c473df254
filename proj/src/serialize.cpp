#include "haarfact/serialize.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "haarfact/errors.hpp"

namespace haarfact {

namespace {

void fields(const Json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
  if (!j.is_object()) throw FormatError(ctx + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw FormatError("unknown field '" + k + "' in " + ctx);
}

const Json& req(const Json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError("missing field '" + std::string(key) + "' in " + ctx);
  return *it;
}

template <class T>
T get(const Json& j, const char* key, const std::string& ctx) {
  try {
    return req(j, key, ctx).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("field '" + std::string(key) + "' in " + ctx + ": " + e.what());
  }
}

template <class T>
T get_or(const Json& j, const char* key, const std::string& ctx, T fallback) {
  if (!j.contains(key)) return fallback;
  return get<T>(j, key, ctx);
}

void expect_schema(const Json& j, const char* schema, const std::string& ctx) {
  auto s = get<std::string>(j, "schema", ctx);
  if (s != schema) throw FormatError(ctx + ": schema '" + s + "', expected '" + schema + "'");
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const Json& j, const std::string& ctx) {
  if (!j.is_array()) throw FormatError(ctx + ": expected an array of rows");
  Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols) throw FormatError(ctx + ": ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw FormatError(ctx + ": non-numeric entry at row " + std::to_string(r));
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

Json basis_json(const std::vector<OmegaIndex>& b) {
  Json a = Json::array();
  for (const auto& i : b) a.push_back(i.str());
  return a;
}

std::vector<OmegaIndex> basis_from(const Json& j, const std::string& ctx) {
  if (!j.is_array()) throw FormatError(ctx + ": expected a list of indices");
  std::vector<OmegaIndex> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_string()) throw FormatError(ctx + "[" + std::to_string(k) + "]: expected a string");
    try {
      out.push_back(OmegaIndex::parse(j[k].get<std::string>()));
    } catch (const std::exception& e) {
      throw FormatError(ctx + "[" + std::to_string(k) + "]: " + e.what());
    }
  }
  return out;
}

Json witness_json(const DiagonalAverageWitness& w) { return {{"value", w.value}, {"positions", basis_json(w.positions)}}; }

DiagonalAverageWitness witness_from(const Json& j, const std::string& ctx) {
  fields(j, {"value", "positions"}, ctx);
  DiagonalAverageWitness w;
  w.value = get<double>(j, "value", ctx);
  w.positions = basis_from(req(j, "positions", ctx), ctx + ".positions");
  return w;
}

Json copies_json(const std::vector<CopySpec>& c) {
  Json a = Json::array();
  for (const auto& s : c) a.push_back({s.copy, s.depth});
  return a;
}

std::vector<CopySpec> copies_from(const Json& j, const std::string& ctx) {
  std::vector<CopySpec> out;
  if (!j.is_array()) throw FormatError(ctx + ": expected a list");
  for (const auto& x : j) {
    if (!x.is_array() || x.size() != 2) throw FormatError(ctx + ": expected [copy, depth] pairs");
    out.push_back({x[0].get<int>(), x[1].get<int>()});
  }
  return out;
}

Json xvec_json(const XpwVector& v) {
  Json a = Json::array();
  for (const auto& [n, c] : v) a.push_back({n, c});
  return a;
}

XpwVector xvec_from(const Json& j, const std::string& ctx) {
  XpwVector v;
  if (!j.is_array()) throw FormatError(ctx + ": expected a list");
  for (const auto& x : j) {
    if (!x.is_array() || x.size() != 2) throw FormatError(ctx + ": expected [index, value] pairs");
    v[x[0].get<std::int64_t>()] = x[1].get<double>();
  }
  return v;
}

template <class T>
Json records(const std::vector<T>& v, Json (*f)(const T&)) {
  Json a = Json::array();
  for (const auto& x : v) a.push_back(f(x));
  return a;
}

Json outcome_json(const TargetOutcome& o) { return {{"label", o.label}, {"value", o.value}, {"tolerance", o.tolerance}}; }

Json step_json(const StepRecord& s) {
  return {{"target", s.target.str()},   {"host_copy", s.host_copy}, {"block_level", s.block_level},
          {"block_size", s.block_size}, {"search", s.search},       {"found", s.found},
          {"tried", s.tried},           {"winner_index", s.winner_index},
          {"outcomes", records(s.outcomes, &outcome_json)}};
}

StepRecord step_from(const Json& j) {
  const std::string ctx = "step";
  fields(j, {"target", "host_copy", "block_level", "block_size", "search", "found", "tried", "winner_index", "outcomes"},
         ctx);
  StepRecord s;
  s.target = OmegaIndex::parse(get<std::string>(j, "target", ctx));
  s.host_copy = get<int>(j, "host_copy", ctx);
  s.block_level = get<int>(j, "block_level", ctx);
  s.block_size = get<int>(j, "block_size", ctx);
  s.search = get<std::string>(j, "search", ctx);
  s.found = get<bool>(j, "found", ctx);
  s.tried = get<std::uint64_t>(j, "tried", ctx);
  s.winner_index = get<std::uint64_t>(j, "winner_index", ctx);
  for (const auto& o : req(j, "outcomes", ctx)) {
    fields(o, {"label", "value", "tolerance"}, "outcome");
    s.outcomes.push_back({get<std::string>(o, "label", "outcome"), get<double>(o, "value", "outcome"),
                          get<double>(o, "tolerance", "outcome")});
  }
  return s;
}

Json column_json(const ColumnRecord& c) {
  return {{"target", c.target.str()},
          {"residual", c.residual},
          {"weighted", c.weighted},
          {"paper_target", c.paper_target}};
}

Json chain_json(const ChainRecord& c) {
  return {{"target", c.target.str()},
          {"level", c.level},
          {"block_average", c.block_average},
          {"level_average", c.level_average}};
}

Json stitch_json(const StitchRecord& s) {
  return {{"target_copy", s.target_copy}, {"host_copy", s.host_copy}, {"levels", s.levels}, {"lambda0", s.lambda0}};
}

Json dwitness_json(const DiagonalAverageWitness& w) { return witness_json(w); }

}  // namespace

Json to_json(const OperatorMatrix& t) {
  Json j;
  j["schema"] = kOperatorSchema;
  j["p"] = t.exponent().p;
  j["basis"] = basis_json(t.basis());
  Json e = Json::array();
  if (t.diagonal_storage()) {
    auto d = t.diagonal();
    for (Eigen::Index i = 0; i < d.size(); ++i) e.push_back(d[i]);
    j["diagonal"] = e;
  } else {
    Eigen::MatrixXd m = t.dense();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) e.push_back(m(r, c));
    j["entries"] = e;
  }
  return j;
}

OperatorMatrix operator_from_json(const Json& j) {
  const std::string ctx = "operator";
  fields(j, {"schema", "p", "basis", "entries", "diagonal", "metadata"}, ctx);
  expect_schema(j, kOperatorSchema, ctx);
  double p = get<double>(j, "p", ctx);
  auto basis = basis_from(req(j, "basis", ctx), "basis");
  for (std::size_t i = 1; i < basis.size(); ++i)
    if (compare_index(basis[i - 1], basis[i]) >= 0)
      throw FormatError("basis[" + std::to_string(i) + "] = " + basis[i].str() + " is out of order");
  const std::size_t n = basis.size();
  bool has_e = j.contains("entries"), has_d = j.contains("diagonal");
  if (has_e == has_d) throw FormatError("operator needs exactly one of 'entries' and 'diagonal'");
  auto nums = get<std::vector<double>>(j, has_e ? "entries" : "diagonal", ctx);
  try {
    if (has_d) {
      if (nums.size() != n) throw FormatError("'diagonal' must have dim entries");
      return OperatorMatrix::diagonal(Exponent(p), basis, Eigen::Map<Eigen::VectorXd>(nums.data(), n));
    }
    if (nums.size() != n * n) throw FormatError("'entries' must have dim^2 entries");
    Eigen::MatrixXd m(n, n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) m(r, c) = nums[r * n + c];
    return OperatorMatrix(Exponent(p), basis, m);
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("operator: ") + e.what());
  }
}

Json to_json(const BlockFamily& f) {
  Json blocks = Json::array();
  for (const auto& b : f.blocks) {
    Json terms = Json::array();
    for (const auto& t : b.terms) terms.push_back({t.interval.str(), t.sign});
    blocks.push_back({{"target", b.target.str()}, {"host_copy", b.host_copy}, {"terms", terms}});
  }
  return {{"schema", kFamilySchema}, {"blocks", blocks}};
}

BlockFamily family_from_json(const Json& j) {
  const std::string ctx = "family";
  fields(j, {"schema", "blocks", "metadata"}, ctx);
  expect_schema(j, kFamilySchema, ctx);
  BlockFamily f;
  for (const auto& b : req(j, "blocks", ctx)) {
    fields(b, {"target", "host_copy", "terms"}, "block");
    Block blk;
    blk.target = OmegaIndex::parse(get<std::string>(b, "target", "block"));
    blk.host_copy = get<int>(b, "host_copy", "block");
    for (const auto& t : req(b, "terms", "block")) {
      if (!t.is_array() || t.size() != 2) throw FormatError("block term: expected [interval, sign]");
      int sign = t[1].get<int>();
      if (sign != 1 && sign != -1) throw FormatError("block term sign must be +1 or -1");
      blk.terms.push_back({DyadicInterval::parse(t[0].get<std::string>()), sign});
    }
    f.blocks.push_back(std::move(blk));
  }
  return f;
}

Json to_json(const ReductionCertificate& c) {
  Json r = {{"residuals", c.residual.residuals},   {"offdiag_residuals", c.residual.offdiag_residuals},
            {"column_sum", c.residual.column_sum}, {"split", c.residual.split},
            {"certified", c.residual.certified},   {"method", c.residual.method}};
  return {{"schema", kCertificateSchema},
          {"kind", c.kind},
          {"mode", to_string(c.mode)},
          {"eps", c.eps},
          {"schedule", c.schedule},
          {"source", to_json(c.source)},
          {"target_copies", copies_json(c.target_copies)},
          {"family", to_json(c.family)},
          {"target_diagonal", c.target_diagonal},
          {"witnesses", records(c.witnesses, &dwitness_json)},
          {"scalar", c.scalar},
          {"lambda0", c.lambda0},
          {"lambda0_witness", witness_json(c.lambda0_witness)},
          {"compressed", matrix_json(c.compressed)},
          {"residual", r},
          {"steps", records(c.steps, &step_json)},
          {"columns", records(c.columns, &column_json)},
          {"level_averages", c.level_averages},
          {"compressed_witnesses", records(c.compressed_witnesses, &dwitness_json)},
          {"chain", records(c.chain, &chain_json)},
          {"stitching", records(c.stitching, &stitch_json)},
          {"eps1", c.eps1},
          {"eps2", c.eps2},
          {"transitivity_constant", c.transitivity_constant},
          {"transitivity_bound", c.transitivity_bound},
          {"attempts", c.attempts},
          {"notes", c.notes},
          {"log_base", "2"}};
}

ReductionCertificate certificate_from_json(const Json& j) {
  const std::string ctx = "certificate";
  fields(j,
         {"schema", "kind", "mode", "eps", "schedule", "source", "target_copies", "family", "target_diagonal",
          "witnesses", "scalar", "lambda0", "lambda0_witness", "compressed", "residual", "steps", "columns",
          "level_averages", "compressed_witnesses", "chain", "stitching", "eps1", "eps2", "transitivity_constant",
          "transitivity_bound", "attempts", "notes", "log_base", "metadata"},
         ctx);
  expect_schema(j, kCertificateSchema, ctx);
  ReductionCertificate c;
  c.kind = get<std::string>(j, "kind", ctx);
  if (c.kind != "diagonal" && c.kind != "scalar" && c.kind != "composite")
    throw FormatError("certificate: unknown kind '" + c.kind + "'");
  try {
    c.mode = parse_mode(get<std::string>(j, "mode", ctx));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("certificate: ") + e.what());
  }
  c.eps = get<double>(j, "eps", ctx);
  c.schedule = get<std::vector<int>>(j, "schedule", ctx);
  c.source = operator_from_json(req(j, "source", ctx));
  c.target_copies = copies_from(req(j, "target_copies", ctx), "target_copies");
  c.family = family_from_json(req(j, "family", ctx));
  c.target_diagonal = get<std::vector<double>>(j, "target_diagonal", ctx);
  for (const auto& w : req(j, "witnesses", ctx)) c.witnesses.push_back(witness_from(w, "witness"));
  c.scalar = get<bool>(j, "scalar", ctx);
  c.lambda0 = get<double>(j, "lambda0", ctx);
  c.lambda0_witness = witness_from(req(j, "lambda0_witness", ctx), "lambda0_witness");
  c.compressed = matrix_from(req(j, "compressed", ctx), "compressed");
  const auto& r = req(j, "residual", ctx);
  fields(r, {"residuals", "offdiag_residuals", "column_sum", "split", "certified", "method"}, "residual");
  c.residual.residuals = get<std::vector<double>>(r, "residuals", "residual");
  c.residual.offdiag_residuals = get<std::vector<double>>(r, "offdiag_residuals", "residual");
  c.residual.column_sum = get<double>(r, "column_sum", "residual");
  c.residual.split = get<double>(r, "split", "residual");
  c.residual.certified = get<double>(r, "certified", "residual");
  c.residual.method = get<std::string>(r, "method", "residual");
  for (const auto& s : req(j, "steps", ctx)) c.steps.push_back(step_from(s));
  for (const auto& x : req(j, "columns", ctx)) {
    fields(x, {"target", "residual", "weighted", "paper_target"}, "column");
    c.columns.push_back({OmegaIndex::parse(get<std::string>(x, "target", "column")), get<double>(x, "residual", "column"),
                         get<double>(x, "weighted", "column"), get<double>(x, "paper_target", "column")});
  }
  c.level_averages = get<std::vector<double>>(j, "level_averages", ctx);
  for (const auto& w : req(j, "compressed_witnesses", ctx)) c.compressed_witnesses.push_back(witness_from(w, "witness"));
  for (const auto& x : req(j, "chain", ctx)) {
    fields(x, {"target", "level", "block_average", "level_average"}, "chain");
    c.chain.push_back({OmegaIndex::parse(get<std::string>(x, "target", "chain")), get<int>(x, "level", "chain"),
                       get<double>(x, "block_average", "chain"), get<double>(x, "level_average", "chain")});
  }
  for (const auto& x : req(j, "stitching", ctx)) {
    fields(x, {"target_copy", "host_copy", "levels", "lambda0"}, "stitching");
    c.stitching.push_back({get<int>(x, "target_copy", "stitching"), get<int>(x, "host_copy", "stitching"),
                           get<std::vector<int>>(x, "levels", "stitching"), get<double>(x, "lambda0", "stitching")});
  }
  c.eps1 = get<double>(j, "eps1", ctx);
  c.eps2 = get<double>(j, "eps2", ctx);
  c.transitivity_constant = get<double>(j, "transitivity_constant", ctx);
  c.transitivity_bound = get<double>(j, "transitivity_bound", ctx);
  c.attempts = get<std::vector<std::string>>(j, "attempts", ctx);
  c.notes = get<std::vector<std::string>>(j, "notes", ctx);
  return c;
}

Json to_json(const FactorizationWitness& w) {
  Json lam = nullptr;
  if (w.has_lambda0) lam = {{"value", w.lambda0}, {"witness", witness_json(w.lambda0_witness)}};
  return {{"schema", kWitnessSchema},
          {"kind", w.kind},
          {"branch", w.branch},
          {"delta", w.delta},
          {"eps", w.eps},
          {"factored", to_json(w.factored)},
          {"target_basis", basis_json(w.target_basis)},
          {"a", matrix_json(w.a)},
          {"b", matrix_json(w.b)},
          {"residual", w.residual},
          {"residual_method", w.residual_method},
          {"reduction_bound", w.reduction_bound},
          {"inverse_bound", w.inverse_bound},
          {"a_bound", w.a_bound},
          {"b_bound", w.b_bound},
          {"norm_product", w.norm_product},
          {"paper_constant", w.paper_constant},
          {"scale", w.scale},
          {"lambda0", lam},
          {"certificate", to_json(w.certificate)},
          {"notes", w.notes}};
}

FactorizationWitness witness_from_json(const Json& j) {
  const std::string ctx = "witness";
  fields(j,
         {"schema", "kind", "branch", "delta", "eps", "factored", "target_basis", "a", "b", "residual",
          "residual_method", "reduction_bound", "inverse_bound", "a_bound", "b_bound", "norm_product",
          "paper_constant", "scale", "lambda0", "certificate", "notes", "metadata"},
         ctx);
  expect_schema(j, kWitnessSchema, ctx);
  FactorizationWitness w;
  w.kind = get<std::string>(j, "kind", ctx);
  w.branch = get<std::string>(j, "branch", ctx);
  if (w.branch != "T" && w.branch != "I-T") throw FormatError("witness: branch must be T or I-T");
  w.delta = get<double>(j, "delta", ctx);
  w.eps = get<double>(j, "eps", ctx);
  w.factored = operator_from_json(req(j, "factored", ctx));
  w.target_basis = basis_from(req(j, "target_basis", ctx), "target_basis");
  w.a = matrix_from(req(j, "a", ctx), "a");
  w.b = matrix_from(req(j, "b", ctx), "b");
  w.residual = get<double>(j, "residual", ctx);
  w.residual_method = get<std::string>(j, "residual_method", ctx);
  w.reduction_bound = get<double>(j, "reduction_bound", ctx);
  w.inverse_bound = get<double>(j, "inverse_bound", ctx);
  w.a_bound = get<double>(j, "a_bound", ctx);
  w.b_bound = get<double>(j, "b_bound", ctx);
  w.norm_product = get<double>(j, "norm_product", ctx);
  w.paper_constant = get<double>(j, "paper_constant", ctx);
  w.scale = get<double>(j, "scale", ctx);
  const auto& lam = req(j, "lambda0", ctx);
  if (!lam.is_null()) {
    fields(lam, {"value", "witness"}, "lambda0");
    w.has_lambda0 = true;
    w.lambda0 = get<double>(lam, "value", "lambda0");
    w.lambda0_witness = witness_from(req(lam, "witness", "lambda0"), "lambda0.witness");
  }
  w.certificate = certificate_from_json(req(j, "certificate", ctx));
  w.notes = get<std::vector<std::string>>(j, "notes", ctx);
  return w;
}

Json to_json(const GameTranscript& t) {
  Json rounds = Json::array();
  for (const auto& r : t.rounds)
    rounds.push_back({{"k", r.k},
                      {"n_k", r.n_k},
                      {"E_k", r.e},
                      {"beta_k", r.beta},
                      {"sum_exact", r.sum_exact},
                      {"b_k", xvec_json(r.b)},
                      {"b_tilde_k", xvec_json(r.b_tilde)},
                      {"b_star_k", xvec_json(r.b_star)}});
  return {{"schema", kTranscriptSchema}, {"p", t.p},       {"eps", t.eps},
          {"weights", t.weights},        {"adversary", t.adversary}, {"rounds", rounds}};
}

GameTranscript transcript_from_json(const Json& j) {
  const std::string ctx = "transcript";
  fields(j, {"schema", "p", "eps", "weights", "adversary", "rounds", "metadata"}, ctx);
  expect_schema(j, kTranscriptSchema, ctx);
  GameTranscript t;
  t.p = get<double>(j, "p", ctx);
  t.eps = get<double>(j, "eps", ctx);
  t.weights = get<std::string>(j, "weights", ctx);
  t.adversary = get<std::string>(j, "adversary", ctx);
  for (const auto& x : req(j, "rounds", ctx)) {
    const std::string rc = "round";
    fields(x, {"k", "n_k", "E_k", "beta_k", "sum_exact", "b_k", "b_tilde_k", "b_star_k"}, rc);
    GameRound r;
    r.k = get<int>(x, "k", rc);
    r.n_k = get<std::int64_t>(x, "n_k", rc);
    r.e = get<std::vector<std::int64_t>>(x, "E_k", rc);
    r.beta = get<double>(x, "beta_k", rc);
    r.sum_exact = get<std::string>(x, "sum_exact", rc);
    r.b = xvec_from(req(x, "b_k", rc), "b_k");
    r.b_tilde = xvec_from(req(x, "b_tilde_k", rc), "b_tilde_k");
    r.b_star = xvec_from(req(x, "b_star_k", rc), "b_star_k");
    t.rounds.push_back(std::move(r));
  }
  return t;
}

Json to_json(const MomentReport& m) {
  return {{"kind", to_string(m.kind)},
          {"mode", m.mode},
          {"samples", m.samples},
          {"mean", m.mean},
          {"variance", m.variance},
          {"mean_stderr", m.mean_stderr},
          {"variance_stderr", m.variance_stderr},
          {"closed_form_variance", m.closed_form_variance},
          {"bound", m.bound},
          {"mean_ok", m.mean_ok},
          {"closed_form_ok", m.closed_form_ok},
          {"bound_ok", m.bound_ok},
          {"pass", m.pass()}};
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << "\n";
}

OperatorMatrix load_operator(const std::string& path) { return operator_from_json(load_json(path)); }

void save_operator(const std::string& path, const OperatorMatrix& t) { save_json(path, to_json(t)); }

std::string payload(const Json& j) {
  Json c = j;
  if (c.is_object()) c.erase("metadata");
  return c.dump();
}

std::string validate_document(const Json& j) {
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string())
    throw FormatError("document has no schema field");
  auto s = j["schema"].get<std::string>();
  if (s == kOperatorSchema)
    operator_from_json(j);
  else if (s == kFamilySchema)
    family_from_json(j);
  else if (s == kCertificateSchema)
    certificate_from_json(j);
  else if (s == kWitnessSchema)
    witness_from_json(j);
  else if (s == kTranscriptSchema)
    transcript_from_json(j);
  else if (s != kReportSchema)
    throw FormatError("unknown schema '" + s + "'");
  return s;
}

}  // namespace haarfact
