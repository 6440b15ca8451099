#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "etcons/analysis.hpp"
#include "etcons/bounds.hpp"
#include "etcons/design.hpp"
#include "etcons/graph.hpp"
#include "etcons/sim.hpp"

namespace etcons {

inline constexpr const char* kGraphSchema = "etcons-graph/1";
inline constexpr const char* kScenarioSchema = "etcons-scenario/1";
inline constexpr const char* kDesignSchema = "etcons-design/1";
inline constexpr const char* kBoundsSchema = "etcons-bounds/1";
inline constexpr const char* kGridSchema = "etcons-bounds-grid/1";
inline constexpr const char* kStatesSchema = "etcons-states/1";
inline constexpr const char* kEventsSchema = "etcons-events/1";
inline constexpr const char* kRunSchema = "etcons-run/1";
inline constexpr const char* kReportSchema = "etcons-report/1";

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Graph edge list:
//   # etcons-graph/1          (optional schema line)
//   agents 6
//   3 1                       (agent 1 receives from agent 3)
// Agents are 1-based, '#' starts a comment.
DirectedGraph parse_graph(std::string_view text,
                          const std::string& source = "<graph>");
DirectedGraph read_graph(const std::filesystem::path& path);
std::string format_graph(const DirectedGraph& g);

/// A scenario file as written, before any design work.
struct Scenario {
  std::string name;
  /// Path as written in the file; empty when the edges are inline.
  std::string graph_file;
  DirectedGraph graph{1};
  LtiDynamics dynamics;
  DesignOptions design;
  TriggerParams trigger;
  std::vector<double> agent_beta;
  std::vector<double> agent_lambda;
  double delay = 0.0;
  /// Explicit x0; when absent, x0 is drawn uniformly in [-x0_scale,
  /// x0_scale] from `seed`.
  std::optional<Vec> x0;
  std::uint64_t seed = 0;
  double x0_scale = 1.0;
  double t_end = 10.0;
  std::optional<double> step_h;
  double sample_interval = 0.01;
  /// Reference decay constants, used only for reference bound values.
  std::optional<DecayCertificate> reference_certificate;

  std::size_t n_agents() const { return graph.n_agents(); }
};

inline constexpr double kDefaultMaxStep = 1e-3;

/// Parses the JSON scenario document. Relative graph paths resolve
/// against base_dir. Throws ParseError naming the line or field.
Scenario parse_scenario(std::string_view text,
                        const std::filesystem::path& base_dir = {},
                        const std::string& source = "<scenario>");
Scenario read_scenario(const std::filesystem::path& path);

/// Canonical JSON with the graph written inline.
nlohmann::json scenario_to_json(const Scenario& s);
/// FNV-1a (64 bit, hex) of the canonical dump.
std::string scenario_hash(const Scenario& s);

Vec initial_state(const Scenario& s);

/// step_h = explicit value, else min(1e-3, tau/4).
ScenarioConfig make_config(const Scenario& s, const ControllerDesign& design,
                           std::optional<double> tau = {});

nlohmann::json design_to_json(const DesignArtifact& artifact,
                              const std::string& scenario_hash);
/// Restores P, alpha, F, c and the certificate; the spectral part and
/// A_hat are recomputed from the scenario, and the report re-run.
DesignArtifact design_from_json(const nlohmann::json& j, const Scenario& s);

nlohmann::json bounds_to_json(const BoundsReport& report,
                              const std::string& scenario_hash);
void write_bounds_grid(const std::filesystem::path& path,
                       const std::vector<BoundsGridRow>& rows);

struct RunMetadata {
  std::string scenario_hash;
  double step_h = 0.0;
  double wall_time_s = 0.0;
};

/// states.csv, events.csv and run.json in `dir`.
void write_trace(const std::filesystem::path& dir, const SimTrace& trace,
                 const RunMetadata& meta);

struct LoadedTrace {
  SimTrace trace;
  std::string scenario_hash;
  double step_h = 0.0;
};
LoadedTrace read_trace(const std::filesystem::path& dir);

nlohmann::json report_to_json(const VerificationReport& report,
                              const std::string& scenario_hash);

nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace etcons
