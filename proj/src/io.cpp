#include "etcons/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "etcons/error.hpp"

namespace etcons {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
  return v;
}

std::optional<long long> to_int(std::string_view s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
  return v;
}

[[noreturn]] void field_error(const std::string& source,
                              const std::string& field,
                              const std::string& what) {
  throw ParseError(source + ": field '" + field + "': " + what);
}

// Typed access to one JSON document with field paths in the errors.
class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& field,
                         const std::string& what) const {
    field_error(source_, field, what);
  }

  double number(const json& j, const std::string& field) const {
    if (!j.is_number()) fail(field, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(field, "must be finite");
    return v;
  }

  double positive(const json& j, const std::string& field) const {
    const double v = number(j, field);
    if (!(v > 0.0)) fail(field, "must be > 0");
    return v;
  }

  double nonnegative(const json& j, const std::string& field) const {
    const double v = number(j, field);
    if (v < 0.0) fail(field, "must be >= 0");
    return v;
  }

  std::vector<double> numbers(const json& j, const std::string& field) const {
    if (!j.is_array()) fail(field, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < j.size(); ++k) {
      out.push_back(number(j[k], field + "[" + std::to_string(k) + "]"));
    }
    return out;
  }

  // Row-major list of rows.
  Mat matrix(const json& j, const std::string& field) const {
    if (!j.is_array() || j.empty()) fail(field, "expected a list of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = -1;
    Mat m;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto row = numbers(j[static_cast<std::size_t>(r)],
                               field + "[" + std::to_string(r) + "]");
      if (cols < 0) {
        cols = static_cast<Eigen::Index>(row.size());
        if (cols == 0) fail(field, "empty row");
        m.resize(rows, cols);
      } else if (static_cast<Eigen::Index>(row.size()) != cols) {
        fail(field, "rows have different lengths");
      }
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c];
    }
    return m;
  }

  void only_keys(const json& j, const std::string& field,
                 std::initializer_list<const char*> keys) const {
    if (!j.is_object()) fail(field, "expected an object");
    for (const auto& [key, value] : j.items()) {
      (void)value;
      const bool known = std::any_of(keys.begin(), keys.end(),
                                     [&](const char* k) { return key == k; });
      if (!known) {
        fail(field.empty() ? key : field + "." + key, "unknown key");
      }
    }
  }

  void schema(const json& j, const char* expected) const {
    if (!j.contains("schema")) fail("schema", "missing");
    if (!j["schema"].is_string() || j["schema"] != expected) {
      fail("schema", std::string("expected \"") + expected + "\"");
    }
  }

 private:
  std::string source_;
};

json parse_json_text(std::string_view text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t k = 0; k + 1 < upto; ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(source + ":" + std::to_string(line) + ":" +
                     std::to_string(col) + ": malformed JSON");
  }
}

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

// NaN becomes null.
json number_json(double v) { return std::isfinite(v) ? json(v) : json(); }

json graph_json(const DirectedGraph& g) {
  json edges = json::array();
  for (const auto& [from, to] : g.edges()) {
    edges.push_back({from + 1, to + 1});
  }
  return {{"agents", g.n_agents()}, {"edges", edges}};
}

DirectedGraph graph_from_json(const json& j, const Reader& rd) {
  rd.only_keys(j, "graph", {"agents", "edges"});
  if (!j.contains("agents") || !j["agents"].is_number_integer() ||
      j["agents"].get<long long>() < 1) {
    rd.fail("graph.agents", "expected a positive integer");
  }
  const auto n = j["agents"].get<std::size_t>();
  DirectedGraph g(n);
  if (!j.contains("edges")) return g;
  if (!j["edges"].is_array()) rd.fail("graph.edges", "expected an array");
  for (std::size_t k = 0; k < j["edges"].size(); ++k) {
    const auto& e = j["edges"][k];
    const std::string field = "graph.edges[" + std::to_string(k) + "]";
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
        !e[1].is_number_integer()) {
      rd.fail(field, "expected [from, to]");
    }
    const long long from = e[0].get<long long>();
    const long long to = e[1].get<long long>();
    if (from < 1 || to < 1 || from > static_cast<long long>(n) ||
        to > static_cast<long long>(n) || from == to) {
      rd.fail(field, "agents must be distinct and in 1.." + std::to_string(n));
    }
    g.add_edge(static_cast<std::size_t>(from - 1),
               static_cast<std::size_t>(to - 1));
  }
  return g;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k) {
    out[static_cast<std::size_t>(k)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

DirectedGraph parse_graph(std::string_view text, const std::string& source) {
  std::optional<DirectedGraph> g;
  std::size_t line_no = 0;
  bool schema_seen = false;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      const std::string comment = trim(line.substr(hash + 1));
      if (!g && !schema_seen && comment.rfind("etcons-graph/", 0) == 0) {
        if (comment != kGraphSchema) {
          throw ParseError(where + "unsupported schema '" + comment + "'");
        }
        schema_seen = true;
      }
      line.erase(hash);
    }
    std::istringstream is(line);
    std::vector<std::string> tok;
    for (std::string t; is >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (!g) {
      const auto n = tok.size() == 2 && tok[0] == "agents"
                         ? to_int(tok[1])
                         : std::nullopt;
      if (!n || *n < 1) {
        throw ParseError(where + "expected 'agents N' header");
      }
      g.emplace(static_cast<std::size_t>(*n));
      continue;
    }
    if (tok.size() != 2) {
      throw ParseError(where + "expected an edge 'i j'");
    }
    const auto from = to_int(tok[0]);
    const auto to = to_int(tok[1]);
    const auto n = static_cast<long long>(g->n_agents());
    if (!from || !to || *from < 1 || *to < 1 || *from > n || *to > n) {
      throw ParseError(where + "agent ids must be integers in 1.." +
                       std::to_string(n));
    }
    if (*from == *to) throw ParseError(where + "self-loop");
    g->add_edge(static_cast<std::size_t>(*from - 1),
                static_cast<std::size_t>(*to - 1));
  }
  if (!g) throw ParseError(source + ": missing 'agents N' header");
  return *g;
}

DirectedGraph read_graph(const fs::path& path) {
  return parse_graph(read_text(path), path.string());
}

std::string format_graph(const DirectedGraph& g) {
  std::ostringstream os;
  os << "# " << kGraphSchema << "\n";
  os << "# i j: agent j receives from agent i\n";
  os << "agents " << g.n_agents() << "\n";
  for (const auto& [from, to] : g.edges()) {
    os << (from + 1) << ' ' << (to + 1) << "\n";
  }
  return os.str();
}

Scenario parse_scenario(std::string_view text, const fs::path& base_dir,
                        const std::string& source) {
  const json j = parse_json_text(text, source);
  const Reader rd(source);
  rd.only_keys(j, "",
               {"schema", "name", "graph", "A", "B", "design", "trigger",
                "delay", "x0", "t_end", "step_h", "sample_interval",
                "reference_certificate"});
  rd.schema(j, kScenarioSchema);
  for (const char* key : {"graph", "A", "B", "trigger", "t_end"}) {
    if (!j.contains(key)) rd.fail(key, "missing");
  }

  Scenario s;
  if (j.contains("name")) {
    if (!j["name"].is_string()) rd.fail("name", "expected a string");
    s.name = j["name"].get<std::string>();
  }

  const json& graph = j["graph"];
  if (graph.is_string()) {
    s.graph_file = graph.get<std::string>();
    const fs::path p = fs::path(s.graph_file).is_absolute()
                           ? fs::path(s.graph_file)
                           : base_dir / s.graph_file;
    if (!fs::exists(p)) rd.fail("graph", "file not found: " + p.string());
    s.graph = read_graph(p);
  } else if (graph.is_object()) {
    s.graph = graph_from_json(graph, rd);
  } else {
    rd.fail("graph", "expected a file name or {agents, edges}");
  }

  const Mat a = rd.matrix(j["A"], "A");
  const Mat b = rd.matrix(j["B"], "B");
  if (a.rows() != a.cols()) rd.fail("A", "must be square");
  if (b.rows() != a.rows()) rd.fail("B", "must have as many rows as A");
  s.dynamics = LtiDynamics(a, b);
  const auto n = a.rows();

  if (j.contains("design")) {
    const json& d = j["design"];
    rd.only_keys(d, "design", {"alpha", "c_safety_factor", "P"});
    if (d.contains("alpha")) {
      s.design.alpha = rd.positive(d["alpha"], "design.alpha");
    }
    if (d.contains("c_safety_factor")) {
      s.design.c_safety_factor =
          rd.number(d["c_safety_factor"], "design.c_safety_factor");
      if (s.design.c_safety_factor < 1.0) {
        rd.fail("design.c_safety_factor", "must be >= 1");
      }
    }
    if (d.contains("P")) {
      const Mat p = rd.matrix(d["P"], "design.P");
      if (p.rows() != n || p.cols() != n) rd.fail("design.P", "must be n x n");
      s.design.p_override = p;
    }
  }

  const json& trig = j["trigger"];
  rd.only_keys(trig, "trigger", {"beta", "lambda", "gamma"});
  for (const char* key : {"beta", "lambda"}) {
    if (!trig.contains(key)) rd.fail(std::string("trigger.") + key, "missing");
  }
  const auto per_agent = [&](const char* key, std::vector<double>& list) {
    const std::string field = std::string("trigger.") + key;
    if (trig[key].is_array()) {
      list = rd.numbers(trig[key], field);
      if (list.size() != s.n_agents()) {
        rd.fail(field, "needs one value per agent");
      }
      for (double v : list) {
        if (!(v > 0.0)) rd.fail(field, "values must be > 0");
      }
      return;
    }
    list.clear();
    const double v = rd.positive(trig[key], field);
    (std::string(key) == "beta" ? s.trigger.beta : s.trigger.lambda) = v;
  };
  per_agent("beta", s.agent_beta);
  per_agent("lambda", s.agent_lambda);
  if (!s.agent_beta.empty() || !s.agent_lambda.empty()) {
    std::vector<double> betas = s.agent_beta;
    std::vector<double> lambdas = s.agent_lambda;
    if (betas.empty()) betas.assign(s.n_agents(), s.trigger.beta);
    if (lambdas.empty()) lambdas.assign(s.n_agents(), s.trigger.lambda);
    const auto reduced = reduce_agent_params(betas, lambdas, 0.0);
    s.trigger.beta = reduced.beta;
    s.trigger.lambda = reduced.lambda;
  }
  if (trig.contains("gamma")) {
    s.trigger.gamma = rd.nonnegative(trig["gamma"], "trigger.gamma");
  }

  if (j.contains("delay")) s.delay = rd.nonnegative(j["delay"], "delay");
  if (s.delay > 0.0 && !(s.trigger.gamma > s.trigger.beta)) {
    rd.fail("trigger.gamma", "delayed scenarios need gamma > beta");
  }

  if (j.contains("x0")) {
    const json& x0 = j["x0"];
    if (x0.is_array()) {
      const Mat rows = rd.matrix(x0, "x0");
      if (rows.rows() != static_cast<Eigen::Index>(s.n_agents()) ||
          rows.cols() != n) {
        rd.fail("x0", "expected one row of n values per agent");
      }
      const Mat cols = rows.transpose();
      s.x0 = Eigen::Map<const Vec>(cols.data(), cols.size());
    } else if (x0.is_object()) {
      rd.only_keys(x0, "x0", {"seed", "scale"});
      if (x0.contains("seed")) {
        if (!x0["seed"].is_number_unsigned()) {
          rd.fail("x0.seed", "expected a nonnegative integer");
        }
        s.seed = x0["seed"].get<std::uint64_t>();
      }
      if (x0.contains("scale")) {
        s.x0_scale = rd.positive(x0["scale"], "x0.scale");
      }
    } else {
      rd.fail("x0", "expected rows or {seed, scale}");
    }
  }

  s.t_end = rd.nonnegative(j["t_end"], "t_end");
  if (j.contains("step_h")) s.step_h = rd.positive(j["step_h"], "step_h");
  if (j.contains("sample_interval")) {
    s.sample_interval = rd.positive(j["sample_interval"], "sample_interval");
  }
  if (j.contains("reference_certificate")) {
    const json& rc = j["reference_certificate"];
    rd.only_keys(rc, "reference_certificate", {"lambda_hat", "beta_hat"});
    for (const char* key : {"lambda_hat", "beta_hat"}) {
      if (!rc.contains(key)) {
        rd.fail(std::string("reference_certificate.") + key, "missing");
      }
    }
    DecayCertificate cert;
    cert.lambda_hat =
        rd.positive(rc["lambda_hat"], "reference_certificate.lambda_hat");
    cert.beta_hat =
        rd.positive(rc["beta_hat"], "reference_certificate.beta_hat");
    s.reference_certificate = cert;
  }
  return s;
}

Scenario read_scenario(const fs::path& path) {
  return parse_scenario(read_text(path), path.parent_path(), path.string());
}

json scenario_to_json(const Scenario& s) {
  json j;
  j["schema"] = kScenarioSchema;
  if (!s.name.empty()) j["name"] = s.name;
  j["graph"] = graph_json(s.graph);
  j["A"] = matrix_json(s.dynamics.a);
  j["B"] = matrix_json(s.dynamics.b);
  json design = json::object();
  if (s.design.alpha) design["alpha"] = *s.design.alpha;
  design["c_safety_factor"] = s.design.c_safety_factor;
  if (s.design.p_override) design["P"] = matrix_json(*s.design.p_override);
  j["design"] = design;
  json trig;
  trig["beta"] = s.agent_beta.empty() ? json(s.trigger.beta)
                                      : json(s.agent_beta);
  trig["lambda"] = s.agent_lambda.empty() ? json(s.trigger.lambda)
                                          : json(s.agent_lambda);
  trig["gamma"] = s.trigger.gamma;
  j["trigger"] = trig;
  j["delay"] = s.delay;
  if (s.x0) {
    const auto n = s.dynamics.state_dim();
    const Eigen::Map<const Mat> cols(s.x0->data(), n,
                                     static_cast<Eigen::Index>(s.n_agents()));
    j["x0"] = matrix_json(cols.transpose());
  } else {
    j["x0"] = {{"seed", s.seed}, {"scale", s.x0_scale}};
  }
  j["t_end"] = s.t_end;
  if (s.step_h) j["step_h"] = *s.step_h;
  j["sample_interval"] = s.sample_interval;
  if (s.reference_certificate) {
    j["reference_certificate"] = {
        {"lambda_hat", s.reference_certificate->lambda_hat},
        {"beta_hat", s.reference_certificate->beta_hat}};
  }
  return j;
}

std::string scenario_hash(const Scenario& s) {
  const std::string text = scenario_to_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

Vec initial_state(const Scenario& s) {
  const auto size =
      static_cast<Eigen::Index>(s.n_agents()) * s.dynamics.state_dim();
  if (s.x0) return *s.x0;
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> dist(-s.x0_scale, s.x0_scale);
  Vec x(size);
  for (Eigen::Index k = 0; k < size; ++k) x(k) = dist(rng);
  return x;
}

ScenarioConfig make_config(const Scenario& s, const ControllerDesign& design,
                           std::optional<double> tau) {
  ScenarioConfig c;
  c.graph = s.graph;
  c.dynamics = s.dynamics;
  c.design = design;
  c.trigger = s.trigger;
  c.agent_beta = s.agent_beta;
  c.agent_lambda = s.agent_lambda;
  c.delay = s.delay;
  c.x0 = initial_state(s);
  c.t_end = s.t_end;
  c.seed = s.seed;
  if (s.step_h) {
    c.step_h = *s.step_h;
  } else {
    c.step_h = kDefaultMaxStep;
    if (tau && *tau > 0.0) c.step_h = std::min(c.step_h, *tau / 4.0);
  }
  c.sample_every = std::max(
      1, static_cast<int>(std::lround(s.sample_interval / c.step_h)));
  return c;
}

json design_to_json(const DesignArtifact& artifact,
                    const std::string& scenario_hash) {
  const auto& d = artifact.design;
  json j;
  j["schema"] = kDesignSchema;
  j["scenario_hash"] = scenario_hash;
  j["P"] = matrix_json(d.p);
  j["alpha"] = d.alpha;
  j["F"] = matrix_json(d.f);
  j["c"] = d.c;
  j["lambda2_real"] = artifact.spectral.lambda2_real;
  json eig = json::array();
  for (Eigen::Index k = 0; k < artifact.spectral.eigenvalues.size(); ++k) {
    const Complex z = artifact.spectral.eigenvalues(k);
    eig.push_back({z.real(), z.imag()});
  }
  j["laplacian_eigenvalues"] = eig;
  if (artifact.certificate) {
    j["certificate"] = {{"beta_hat", artifact.certificate->beta_hat},
                        {"lambda_hat", artifact.certificate->lambda_hat}};
  } else {
    j["certificate"] = nullptr;
  }
  j["a_hat_abscissa"] = spectral_abscissa(d.a_hat);
  json checks = json::array();
  for (const auto& c : artifact.report.checks) {
    checks.push_back({{"name", c.name},
                      {"passed", c.passed},
                      {"residual", number_json(c.residual)},
                      {"detail", c.detail}});
  }
  j["checks"] = checks;
  j["all_passed"] = artifact.report.all_passed();
  return j;
}

DesignArtifact design_from_json(const json& j, const Scenario& s) {
  const Reader rd("design");
  rd.schema(j, kDesignSchema);
  for (const char* key : {"P", "alpha", "F", "c", "certificate"}) {
    if (!j.contains(key)) rd.fail(key, "missing");
  }
  DesignArtifact art;
  art.spectral = spectral_transform(laplacian(s.graph));
  auto& d = art.design;
  d.p = rd.matrix(j["P"], "P");
  d.alpha = rd.positive(j["alpha"], "alpha");
  d.f = rd.matrix(j["F"], "F");
  d.c = rd.positive(j["c"], "c");
  const auto n = s.dynamics.state_dim();
  if (d.p.rows() != n || d.p.cols() != n) rd.fail("P", "must be n x n");
  if (d.f.rows() != s.dynamics.input_dim() || d.f.cols() != n) {
    rd.fail("F", "must be m x n");
  }
  d.a_hat = closed_loop_matrix(s.dynamics, d.f, d.c, art.spectral);
  if (!j["certificate"].is_null()) {
    DecayCertificate cert;
    cert.beta_hat = rd.positive(j["certificate"]["beta_hat"],
                                "certificate.beta_hat");
    cert.lambda_hat = rd.positive(j["certificate"]["lambda_hat"],
                                  "certificate.lambda_hat");
    art.certificate = cert;
  }
  art.report = verify_design(s.dynamics, d, art.spectral.lambda2_real,
                             art.certificate);
  return art;
}

json bounds_to_json(const BoundsReport& r, const std::string& scenario_hash) {
  const auto& c = r.constants;
  json j;
  j["schema"] = kBoundsSchema;
  j["scenario_hash"] = scenario_hash;
  j["constants"] = {{"n_agents", c.n_agents},
                    {"theta_hat", c.theta_hat},
                    {"b_hat_norm", c.b_hat_norm},
                    {"x_hat_0", c.x_hat_0},
                    {"cbf_norm", c.cbf_norm},
                    {"l_norm", c.l_norm},
                    {"a_norm", c.a_norm},
                    {"beta_hat", c.beta_hat},
                    {"lambda_hat", c.lambda_hat},
                    {"beta", c.params.beta},
                    {"lambda", c.params.lambda},
                    {"gamma", c.params.gamma},
                    {"K1", c.k1},
                    {"K2", c.k2},
                    {"H1", c.h1},
                    {"H2", c.h2}};
  j["diagnostics"] = c.diagnostics;
  j["K3_at_0"] = number_json(r.k3_at_zero);
  j["K3_limit"] = number_json(r.k3_limit);
  j["H3_at_0"] = number_json(r.h3_at_zero);
  j["H3_limit"] = number_json(r.h3_limit);
  j["tau"] = {{"uniform", number_json(r.tau_uniform)},
              {"asymptotic", number_json(r.tau_asymptotic)},
              {"uniform_signed_K1", number_json(r.tau_uniform_signed)}};
  j["delayed_tau"] = {
      {"uniform", number_json(r.delayed_tau_uniform)},
      {"asymptotic", number_json(r.delayed_tau_asymptotic)},
      {"uniform_signed_H1", number_json(r.delayed_tau_uniform_signed)}};
  j["epsilon"] = {{"uniform", number_json(r.epsilon_uniform)},
                  {"asymptotic", number_json(r.epsilon_asymptotic)},
                  {"uniform_signed_H1", number_json(r.epsilon_uniform_signed)}};
  return j;
}

void write_bounds_grid(const fs::path& path,
                       const std::vector<BoundsGridRow>& rows) {
  auto os = open_out(path);
  os << "# " << kGridSchema << "\n";
  os << "t_k,K3,H3,tau,delayed_tau,epsilon\n";
  for (const auto& r : rows) {
    os << format_double(r.t_k) << ',' << format_double(r.k3) << ','
       << format_double(r.h3) << ',' << format_double(r.tau) << ','
       << format_double(r.delayed_tau) << ',' << format_double(r.epsilon)
       << '\n';
  }
}

void write_trace(const fs::path& dir, const SimTrace& trace,
                 const RunMetadata& meta) {
  const auto n = trace.state_dim;
  const auto m = trace.input_dim;
  {
    auto os = open_out(dir / "states.csv");
    os << "# " << kStatesSchema << " scenario=" << meta.scenario_hash << "\n";
    os << "time,agent";
    for (const char* prefix : {"x", "y", "yd"}) {
      for (Eigen::Index k = 1; k <= n; ++k) os << ',' << prefix << k;
    }
    os << ",e_norm,ed_norm,threshold";
    for (Eigen::Index k = 1; k <= m; ++k) os << ",u" << k;
    os << '\n';
    for (const auto& s : trace.samples) {
      for (Eigen::Index i = 0; i < s.x.cols(); ++i) {
        os << format_double(s.t) << ',' << (i + 1);
        for (const Mat* block : {&s.x, &s.y_self, &s.y_delayed}) {
          for (Eigen::Index k = 0; k < n; ++k) {
            os << ',' << format_double((*block)(k, i));
          }
        }
        os << ',' << format_double(s.e_norm(i)) << ','
           << format_double(s.ed_norm(i)) << ','
           << format_double(s.threshold(i));
        for (Eigen::Index k = 0; k < m; ++k) {
          os << ',' << format_double(s.u(k, i));
        }
        os << '\n';
      }
    }
  }
  {
    auto os = open_out(dir / "events.csv");
    os << "# " << kEventsSchema << " scenario=" << meta.scenario_hash << "\n";
    os << "agent,t_event,t_delivered,error_before,error_after";
    for (Eigen::Index k = 1; k <= n; ++k) os << ",x" << k;
    os << '\n';
    for (const auto& e : trace.events) {
      os << (e.agent + 1) << ',' << format_double(e.t_event) << ','
         << format_double(e.t_delivered) << ','
         << format_double(e.error_before) << ','
         << format_double(e.error_after);
      for (Eigen::Index k = 0; k < n; ++k) {
        os << ',' << format_double(e.x_broadcast(k));
      }
      os << '\n';
    }
  }
  const auto& mon = trace.monitors;
  json j;
  j["schema"] = kRunSchema;
  j["scenario_hash"] = meta.scenario_hash;
  j["n_agents"] = trace.n_agents;
  j["state_dim"] = trace.state_dim;
  j["input_dim"] = trace.input_dim;
  j["delay"] = trace.delay;
  j["t_end"] = trace.t_end;
  j["step_h"] = meta.step_h;
  j["steps"] = mon.steps;
  j["sample_count"] = trace.samples.size();
  j["event_count"] = trace.events.size();
  j["wall_time_s"] = meta.wall_time_s;
  j["monitors"] = {
      {"max_threshold_excess", number_json(mon.max_threshold_excess)},
      {"threshold_excess_time", mon.threshold_excess_time},
      {"threshold_excess_agent", mon.threshold_excess_agent + 1},
      {"max_delayed_ratio", mon.max_delayed_ratio},
      {"delayed_ratio_time", mon.delayed_ratio_time},
      {"delayed_ratio_agent", mon.delayed_ratio_agent + 1},
      {"max_copy_mismatch", mon.max_copy_mismatch},
      {"max_catch_up_gap", mon.max_catch_up_gap}};
  auto os = open_out(dir / "run.json");
  os << j.dump(2) << '\n';
}

namespace {

struct CsvTable {
  std::string schema_line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const fs::path& path) {
  const std::string text = read_text(path);
  CsvTable t;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line_no == 1) t.schema_line = trim(line.substr(1));
      continue;
    }
    const auto cells = split(line, ',');
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(t.header.size()) +
                       " columns");
    }
    std::vector<double> row;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto v = to_double(trim(cells[k]));
      if (!v) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": column '" + t.header[k] + "' is not a number");
      }
      row.push_back(*v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string schema_hash(const CsvTable& t, const char* schema,
                        const fs::path& path) {
  const std::string prefix = std::string(schema) + " scenario=";
  if (t.schema_line.rfind(prefix, 0) != 0) {
    throw ParseError(path.string() + ":1: expected schema '" + schema + "'");
  }
  return t.schema_line.substr(prefix.size());
}

}  // namespace

LoadedTrace read_trace(const fs::path& dir) {
  const json meta = read_json(dir / "run.json");
  const Reader rd((dir / "run.json").string());
  rd.schema(meta, kRunSchema);
  LoadedTrace out;
  SimTrace& tr = out.trace;
  try {
    out.scenario_hash = meta.at("scenario_hash").get<std::string>();
    tr.n_agents = meta.at("n_agents").get<std::size_t>();
    tr.state_dim = meta.at("state_dim").get<Eigen::Index>();
    tr.input_dim = meta.at("input_dim").get<Eigen::Index>();
    tr.delay = meta.at("delay").get<double>();
    tr.t_end = meta.at("t_end").get<double>();
    out.step_h = meta.at("step_h").get<double>();
    const json& mon = meta.at("monitors");
    auto& m = tr.monitors;
    m.steps = meta.at("steps").get<std::size_t>();
    m.max_threshold_excess =
        mon.at("max_threshold_excess").is_null()
            ? -std::numeric_limits<double>::infinity()
            : mon.at("max_threshold_excess").get<double>();
    m.threshold_excess_time = mon.at("threshold_excess_time").get<double>();
    m.threshold_excess_agent =
        mon.at("threshold_excess_agent").get<std::size_t>() - 1;
    m.max_delayed_ratio = mon.at("max_delayed_ratio").get<double>();
    m.delayed_ratio_time = mon.at("delayed_ratio_time").get<double>();
    m.delayed_ratio_agent =
        mon.at("delayed_ratio_agent").get<std::size_t>() - 1;
    m.max_copy_mismatch = mon.at("max_copy_mismatch").get<double>();
    m.max_catch_up_gap = mon.at("max_catch_up_gap").get<double>();
  } catch (const json::exception& e) {
    throw ParseError((dir / "run.json").string() + ": " + e.what());
  }
  const auto n = tr.state_dim;
  const auto m = tr.input_dim;
  const auto agents = static_cast<Eigen::Index>(tr.n_agents);

  const fs::path states_path = dir / "states.csv";
  const CsvTable states = read_csv(states_path);
  if (schema_hash(states, kStatesSchema, states_path) != out.scenario_hash) {
    throw ParseError(states_path.string() + ": scenario hash differs from run.json");
  }
  const auto width = static_cast<std::size_t>(2 + 3 * n + 3 + m);
  if (states.header.size() != width) {
    throw ParseError(states_path.string() + ": unexpected column count");
  }
  if (states.rows.size() % tr.n_agents != 0) {
    throw ParseError(states_path.string() + ": incomplete sample block");
  }
  for (std::size_t r = 0; r < states.rows.size(); r += tr.n_agents) {
    Sample s;
    s.t = states.rows[r][0];
    s.x.resize(n, agents);
    s.y_self.resize(n, agents);
    s.y_delayed.resize(n, agents);
    s.u.resize(m, agents);
    s.e_norm.resize(agents);
    s.ed_norm.resize(agents);
    s.threshold.resize(agents);
    for (Eigen::Index i = 0; i < agents; ++i) {
      const auto& row = states.rows[r + static_cast<std::size_t>(i)];
      if (row[0] != s.t || row[1] != static_cast<double>(i + 1)) {
        throw ParseError(states_path.string() +
                         ": rows must be grouped by time, agents in order");
      }
      std::size_t k = 2;
      for (Mat* block : {&s.x, &s.y_self, &s.y_delayed}) {
        for (Eigen::Index c = 0; c < n; ++c) (*block)(c, i) = row[k++];
      }
      s.e_norm(i) = row[k++];
      s.ed_norm(i) = row[k++];
      s.threshold(i) = row[k++];
      for (Eigen::Index c = 0; c < m; ++c) s.u(c, i) = row[k++];
    }
    tr.samples.push_back(std::move(s));
  }

  const fs::path events_path = dir / "events.csv";
  const CsvTable events = read_csv(events_path);
  if (schema_hash(events, kEventsSchema, events_path) != out.scenario_hash) {
    throw ParseError(events_path.string() + ": scenario hash differs from run.json");
  }
  if (events.header.size() != static_cast<std::size_t>(5 + n)) {
    throw ParseError(events_path.string() + ": unexpected column count");
  }
  for (const auto& row : events.rows) {
    EventRecord e;
    if (row[0] < 1 || row[0] > static_cast<double>(tr.n_agents)) {
      throw ParseError(events_path.string() + ": agent id out of range");
    }
    e.agent = static_cast<std::size_t>(row[0]) - 1;
    e.t_event = row[1];
    e.t_delivered = row[2];
    e.error_before = row[3];
    e.error_after = row[4];
    e.x_broadcast.resize(n);
    for (Eigen::Index c = 0; c < n; ++c) e.x_broadcast(c) = row[5 + c];
    tr.events.push_back(std::move(e));
  }
  return out;
}

json report_to_json(const VerificationReport& r,
                    const std::string& scenario_hash) {
  json j;
  j["schema"] = kReportSchema;
  j["scenario_hash"] = scenario_hash;
  j["all_passed"] = r.all_passed();
  json checks = json::array();
  for (const auto& c : r.checks) {
    json cj = {{"name", c.name},
               {"passed", c.passed},
               {"gating", c.gating},
               {"worst", number_json(c.worst)},
               {"limit", number_json(c.limit)},
               {"time", c.time},
               {"detail", c.detail}};
    cj["agent"] = c.agent ? json(*c.agent + 1) : json();
    checks.push_back(cj);
  }
  j["checks"] = checks;
  j["event_count"] = r.event_count;
  j["min_gap"] = r.min_gap ? json(*r.min_gap) : json();
  j["tau"] = {{"uniform", number_json(r.tau_uniform)},
              {"asymptotic", number_json(r.tau_asymptotic)}};
  j["epsilon"] = {{"uniform", number_json(r.epsilon_uniform)},
                  {"asymptotic", number_json(r.epsilon_asymptotic)}};
  j["delay"] = r.delay;
  json stats = json::array();
  for (std::size_t i = 0; i < r.stats.size(); ++i) {
    const auto& s = r.stats[i];
    stats.push_back({{"agent", i + 1},
                     {"count", s.count},
                     {"min_gap", s.min_gap ? json(*s.min_gap) : json()},
                     {"mean_gap", s.mean_gap ? json(*s.mean_gap) : json()}});
  }
  j["inter_event"] = stats;
  json series = json::array();
  for (const auto& p : r.series) {
    series.push_back({p.t, p.disagreement, p.transformed, p.envelope});
  }
  j["series_columns"] = {"t", "disagreement", "transformed", "envelope"};
  j["series"] = series;
  return j;
}

json read_json(const fs::path& path) {
  return parse_json_text(read_text(path), path.string());
}

void write_text(const fs::path& path, std::string_view text) {
  auto os = open_out(path);
  os << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace etcons
