// etcons: design, bounds, simulation and verification of event-triggered
// consensus with model-based triggering and constant delays.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "etcons/analysis.hpp"
#include "etcons/error.hpp"
#include "etcons/io.hpp"
#include "etcons/pipeline.hpp"

#ifndef ETCONS_DATA_DIR
#define ETCONS_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace etcons;

namespace {

enum Exit : int { kOk = 0, kCheckFailed = 1, kInputError = 2, kRunError = 3 };

struct Options {
  std::string scenario;
  std::string design;
  std::string bounds;
  std::string trace;
  std::string out;
  std::string data_dir = ETCONS_DATA_DIR;
  std::optional<double> alpha;
  std::optional<double> c_safety;
  std::optional<double> step;
  std::optional<double> t_end;
  std::optional<std::uint64_t> seed;
  std::optional<double> delay;
  bool delay_free = false;
};

fs::path out_dir(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("ETCONS_OUT_DIR"); env && *env) return env;
  return "etcons_out";
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

void apply_overrides(Scenario& s, const Options& o) {
  if (o.alpha) s.design.alpha = *o.alpha;
  if (o.c_safety) s.design.c_safety_factor = *o.c_safety;
  if (o.step) s.step_h = *o.step;
  if (o.t_end) s.t_end = *o.t_end;
  if (o.delay) s.delay = *o.delay;
  if (o.delay_free) s.delay = 0.0;
  if (o.seed) {
    if (s.x0) s.x0_scale = s.x0->cwiseAbs().maxCoeff();
    s.x0.reset();
    s.seed = *o.seed;
  }
  if (s.delay > 0.0 && !(s.trigger.gamma > s.trigger.beta)) {
    throw ParseError("delayed runs need trigger.gamma > trigger.beta");
  }
}

Scenario load_scenario(const Options& o) {
  if (o.scenario.empty()) throw ParseError("--scenario is required");
  Scenario s = read_scenario(o.scenario);
  apply_overrides(s, o);
  return s;
}

void print_design(const DesignArtifact& art) {
  for (const auto& c : art.report.checks) {
    std::printf("%-4s  %-24s residual=%-12.4g %s\n", c.passed ? "PASS" : "FAIL",
                c.name.c_str(), c.residual, c.detail.c_str());
  }
}

DesignArtifact obtain_design(const Options& o, const Scenario& s,
                             const std::string& hash) {
  if (o.design.empty()) return design_scenario(s);
  const json j = read_json(o.design);
  if (j.value("scenario_hash", "") != hash) {
    throw ParseError(o.design + ": scenario hash mismatch (design was made "
                     "for a different scenario)");
  }
  return design_from_json(j, s);
}

void require_gamma(const Scenario& s) {
  if (s.trigger.gamma != 0.0 && !(s.trigger.gamma > s.trigger.beta)) {
    throw ParseError("trigger.gamma must exceed trigger.beta (gamma = " +
                     format_double(s.trigger.gamma) +
                     ", beta = " + format_double(s.trigger.beta) + ")");
  }
}

int cmd_design(const Options& o) {
  const Scenario s = load_scenario(o);
  const std::string hash = scenario_hash(s);
  const DesignArtifact art = design_scenario(s);
  const fs::path dir = out_dir(o);
  write_text(dir / "design.json", design_to_json(art, hash).dump(2) + "\n");
  print_design(art);
  std::printf("c = %.6g, alpha = %.6g, lambda2 = %.6g\n", art.design.c,
              art.design.alpha, art.spectral.lambda2_real);
  if (art.certificate) {
    std::printf("decay certificate: beta_hat = %.6g, lambda_hat = %.6g\n",
                art.certificate->beta_hat, art.certificate->lambda_hat);
  }
  std::printf("wrote %s\n", (dir / "design.json").string().c_str());
  return art.report.all_passed() ? kOk : kCheckFailed;
}

json bounds_json_for(const Scenario& s, const DesignArtifact& art,
                     const Vec& x0, const std::string& hash,
                     BoundsReport& own) {
  own = bounds_report(scenario_constants(s, art, x0));
  json j = bounds_to_json(own, hash);
  if (const auto ref = reference_constants(s, art, x0)) {
    json r = bounds_to_json(bounds_report(*ref), hash);
    r.erase("schema");
    r.erase("scenario_hash");
    r["certificate_violation"] = certificate_violation(
        art.design.a_hat, *s.reference_certificate);
    r["note"] =
        "reference (beta_hat, lambda_hat); certificate_violation > 1 means "
        "they do not bound exp(A_hat t) for this design";
    j["reference"] = r;
  }
  return j;
}

int cmd_bounds(const Options& o) {
  const Scenario s = load_scenario(o);
  require_gamma(s);
  const std::string hash = scenario_hash(s);
  const DesignArtifact art = obtain_design(o, s, hash);
  const Vec x0 = initial_state(s);
  BoundsReport own;
  const json j = bounds_json_for(s, art, x0, hash, own);
  const fs::path dir = out_dir(o);
  write_text(dir / "bounds.json", j.dump(2) + "\n");
  write_bounds_grid(dir / "bounds_grid.csv", bounds_grid(own.constants));
  for (const auto& d : own.constants.diagnostics) warn(d);
  std::printf("tau: uniform %.6g, asymptotic %.6g\n", own.tau_uniform,
              own.tau_asymptotic);
  if (s.trigger.gamma > s.trigger.beta) {
    std::printf("delayed tau: uniform %.6g, asymptotic %.6g\n",
                own.delayed_tau_uniform, own.delayed_tau_asymptotic);
    std::printf("epsilon: uniform %.6g, asymptotic %.6g\n",
                own.epsilon_uniform, own.epsilon_asymptotic);
  }
  if (j.contains("reference")) {
    const json& r = j["reference"];
    std::printf("with reference certificate: tau %s, epsilon %s, delayed tau %s"
                " (asymptotic)\n",
                r["tau"]["asymptotic"].dump().c_str(),
                r["epsilon"]["asymptotic"].dump().c_str(),
                r["delayed_tau"]["asymptotic"].dump().c_str());
  }
  std::printf("wrote %s and %s\n", (dir / "bounds.json").string().c_str(),
              (dir / "bounds_grid.csv").string().c_str());
  return kOk;
}

struct SimOutcome {
  ScenarioConfig config;
  SimTrace trace;
  BoundsReport bounds;
  double wall = 0.0;
};

SimOutcome simulate(const Scenario& s, const DesignArtifact& art) {
  SimOutcome out;
  const Vec x0 = initial_state(s);
  out.bounds = bounds_report(scenario_constants(s, art, x0));
  out.config = make_config(s, art.design,
                           governing_tau(out.bounds, s.delay > 0.0));
  for (const auto& w : config_warnings(out.config, out.bounds)) warn(w);
  const auto t0 = std::chrono::steady_clock::now();
  out.trace = run(out.config);
  out.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           t0)
                 .count();
  return out;
}

int cmd_simulate(const Options& o) {
  const Scenario s = load_scenario(o);
  const std::string hash = scenario_hash(s);
  const DesignArtifact art = obtain_design(o, s, hash);
  const SimOutcome sim = simulate(s, art);
  const fs::path dir = o.trace.empty() ? out_dir(o) : fs::path(o.trace);
  write_trace(dir, sim.trace, {hash, sim.config.step_h, sim.wall});
  std::printf("simulated %.6g s in %.3f s: %zu steps, %zu events, %zu "
              "samples\n",
              sim.trace.t_end, sim.wall, sim.trace.monitors.steps,
              sim.trace.events.size(), sim.trace.samples.size());
  std::printf("wrote %s\n", dir.string().c_str());
  return kOk;
}

int cmd_verify(const Options& o) {
  const Scenario s = load_scenario(o);
  const std::string hash = scenario_hash(s);
  const fs::path dir = out_dir(o);
  const fs::path trace_dir = o.trace.empty() ? dir : fs::path(o.trace);
  const LoadedTrace loaded = read_trace(trace_dir);
  if (loaded.scenario_hash != hash) {
    throw ParseError("scenario hash mismatch: trace " + loaded.scenario_hash +
                     ", scenario " + hash);
  }
  const fs::path bounds_path =
      o.bounds.empty() ? dir / "bounds.json" : fs::path(o.bounds);
  if (!o.bounds.empty() || fs::exists(bounds_path)) {
    const json b = read_json(bounds_path);
    if (b.value("scenario_hash", "") != hash) {
      throw ParseError("scenario hash mismatch: bounds " +
                       b.value("scenario_hash", std::string("?")) +
                       ", scenario " + hash);
    }
  }
  const DesignArtifact art = obtain_design(o, s, hash);
  const Vec x0 = initial_state(s);
  const ScenarioConfig config = make_config(s, art.design);
  const VerificationReport rep = verify_trace(
      loaded.trace, config, art.spectral, scenario_constants(s, art, x0));
  write_text(dir / "report.json", report_to_json(rep, hash).dump(2) + "\n");
  const std::string text = summary_text(rep);
  write_text(dir / "report.txt", text);
  std::cout << text;
  return rep.all_passed() ? kOk : kCheckFailed;
}

// reproduce-paper ----------------------------------------------------------

struct Row {
  std::string variant;
  std::string claim;
  std::string observed;
  std::string expected;
  bool passed = false;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

int cmd_reproduce(const Options& o) {
  const fs::path data = fs::path(o.data_dir) / "paper";
  const fs::path out = out_dir(o);
  std::vector<Row> rows;
  std::vector<std::string> variants = {"delay_free"};
  if (!o.delay_free) variants.push_back("delayed");

  for (const auto& variant : variants) {
    Options vo = o;
    vo.scenario = (data / (variant + ".json")).string();
    vo.delay_free = false;
    const Scenario s = load_scenario(vo);
    const std::string hash = scenario_hash(s);
    const fs::path dir = out / variant;
    const DesignArtifact art = design_scenario(s);
    write_text(dir / "design.json", design_to_json(art, hash).dump(2) + "\n");

    if (s.design.p_override) {
      const auto sup = max_lmi_alpha(s.dynamics, *s.design.p_override);
      const auto* lmi = art.report.find("design inequality");
      rows.push_back({variant, "reference P satisfies the design inequality",
                      sup ? "sup alpha = " + fmt(*sup) : "no alpha > 0",
                      "some alpha > 0",
                      sup.has_value() && lmi && lmi->passed});
    }
    rows.push_back({variant, "design checks", art.report.all_passed()
                                                  ? "all pass"
                                                  : "failures",
                    "all pass", art.report.all_passed()});

    const Vec x0 = initial_state(s);
    BoundsReport own;
    const json bj = bounds_json_for(s, art, x0, hash, own);
    write_text(dir / "bounds.json", bj.dump(2) + "\n");
    write_bounds_grid(dir / "bounds_grid.csv", bounds_grid(own.constants));

    const bool delayed = s.delay > 0.0;
    if (delayed && s.reference_certificate) {
      const BoundsReport ref =
          bounds_report(*reference_constants(s, art, x0));
      rows.push_back({variant,
                      "asymptotic epsilon ~ 0.004 s (reference constants)",
                      fmt(ref.epsilon_asymptotic), "[0.002, 0.008]",
                      ref.epsilon_asymptotic >= 0.002 &&
                          ref.epsilon_asymptotic <= 0.008});
      rows.push_back({variant,
                      "asymptotic tau ~ 0.001 s (reference constants)",
                      fmt(ref.delayed_tau_asymptotic), "[0.0005, 0.002]",
                      ref.delayed_tau_asymptotic >= 0.0005 &&
                          ref.delayed_tau_asymptotic <= 0.002});
      const double gap =
          std::abs(h3(ref.constants, 200.0) - ref.h3_limit) / ref.h3_limit;
      rows.push_back({variant, "H3(t_k) -> ||cBF|| H2 / (||A|| + lambda)",
                      "rel. gap at 200 s = " + fmt(gap), "< 1e-3",
                      gap < 1e-3});
    }

    const SimOutcome sim = simulate(s, art);
    write_trace(dir, sim.trace, {hash, sim.config.step_h, sim.wall});
    const VerificationReport rep =
        verify_trace(sim.trace, sim.config, art.spectral, own.constants);
    write_text(dir / "report.json", report_to_json(rep, hash).dump(2) + "\n");
    write_text(dir / "report.txt", summary_text(rep));

    std::string failed;
    for (const auto& c : rep.checks) {
      if (c.gating && !c.passed) failed += (failed.empty() ? "" : ", ") + c.name;
    }
    rows.push_back({variant, "trace verification (envelopes, resets, Zeno)",
                    failed.empty() ? "all pass" : "failed: " + failed,
                    "all pass", failed.empty()});
    const auto* decay = rep.find("disagreement decay");
    const double ratio = decay ? decay->worst : NAN;
    rows.push_back({variant, "agents reach consensus",
                    "disagreement ratio " + fmt(ratio) + " at t = " +
                        fmt(s.t_end),
                    "< 0.02", ratio < 0.02});
    const double min_gap = rep.min_gap.value_or(INFINITY);
    rows.push_back({variant, "no transmissions faster than 0.001 s",
                    "min gap " + fmt(min_gap), ">= 0.001", min_gap >= 0.001});
  }

  std::ostringstream md;
  md << "| variant | claim | observed | expected | result |\n";
  md << "|---|---|---|---|---|\n";
  json jrows = json::array();
  bool all = true;
  for (const auto& r : rows) {
    all = all && r.passed;
    md << "| " << r.variant << " | " << r.claim << " | " << r.observed
       << " | " << r.expected << " | " << (r.passed ? "pass" : "FAIL")
       << " |\n";
    jrows.push_back({{"variant", r.variant},
                     {"claim", r.claim},
                     {"observed", r.observed},
                     {"expected", r.expected},
                     {"passed", r.passed}});
  }
  write_text(out / "summary.md", md.str());
  write_text(out / "summary.json",
             json{{"schema", "etcons-summary/1"},
                  {"all_passed", all},
                  {"rows", jrows}}
                     .dump(2) +
                 "\n");
  std::cout << md.str();
  return all ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-triggered consensus with model-based triggering and "
               "constant communication delays"};
  app.require_subcommand(1);
  Options o;

  const auto add_common = [&](CLI::App* cmd, bool needs_scenario) {
    auto* opt = cmd->add_option("--scenario", o.scenario,
                                "Scenario file (etcons-scenario/1 JSON)");
    if (needs_scenario) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out,
                    "Output directory (default $ETCONS_OUT_DIR or "
                    "./etcons_out)");
    cmd->add_option("--alpha", o.alpha, "Decay-rate parameter of the design")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--c-safety", o.c_safety,
                    "Coupling gain safety factor, c = factor / Re(lambda2)")
        ->check(CLI::Range(1.0, 1e6));
    cmd->add_option("--step", o.step, "Integrator step h [s]")
        ->check(CLI::Range(1e-9, 1.0));
    cmd->add_option("--t-end", o.t_end, "Horizon [s]")
        ->check(CLI::Range(0.0, 1e6));
    cmd->add_option("--seed", o.seed,
                    "Draw x0 uniformly from this seed instead of the file");
    cmd->add_option("--delay", o.delay, "Constant delay d [s]")
        ->check(CLI::Range(0.0, 1e3));
  };

  auto* design = app.add_subcommand("design", "Controller synthesis");
  add_common(design, true);
  auto* bounds = app.add_subcommand("bounds", "Inter-event and delay bounds");
  add_common(bounds, true);
  bounds->add_option("--design", o.design, "Design JSON from 'design'")
      ->check(CLI::ExistingFile);
  auto* simulate_cmd = app.add_subcommand("simulate", "Run the simulation");
  add_common(simulate_cmd, true);
  simulate_cmd->add_option("--design", o.design, "Design JSON")
      ->check(CLI::ExistingFile);
  simulate_cmd->add_option("--trace", o.trace,
                           "Trace directory (default: output directory)");
  auto* verify = app.add_subcommand("verify", "Check a trace");
  add_common(verify, true);
  verify->add_option("--design", o.design, "Design JSON")
      ->check(CLI::ExistingFile);
  verify->add_option("--trace", o.trace,
                     "Trace directory (default: output directory)");
  verify->add_option("--bounds", o.bounds,
                     "Bounds JSON (default: <out>/bounds.json if present)")
      ->check(CLI::ExistingFile);
  auto* reproduce =
      app.add_subcommand("reproduce-paper", "Full pipeline on the bundled "
                                            "six-agent scenario");
  add_common(reproduce, false);
  reproduce->add_option("--data-dir", o.data_dir, "Bundled data directory")
      ->check(CLI::ExistingDirectory);
  reproduce->add_flag("--delay-free", o.delay_free,
                      "Only the delay-free pipeline");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*design) return cmd_design(o);
    if (*bounds) return cmd_bounds(o);
    if (*simulate_cmd) return cmd_simulate(o);
    if (*verify) return cmd_verify(o);
    if (*reproduce) return cmd_reproduce(o);
  } catch (const InfeasibleError& e) {
    std::cerr << "error: infeasible (" << e.hypothesis() << "): " << e.what()
              << '\n';
    return kInputError;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const SimulationError& e) {
    std::cerr << "error: simulation failed at t = " << e.time() << ": "
              << e.what() << '\n';
    return kRunError;
  } catch (const BoundDegeneracy& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRunError;
  }
  return kInputError;
}
