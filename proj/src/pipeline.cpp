#include "etcons/pipeline.hpp"

#include <cstdio>

#include "etcons/error.hpp"

namespace etcons {

DesignArtifact design_scenario(const Scenario& s) {
  return synthesize(s.dynamics, s.graph, s.design);
}

BoundConstants scenario_constants(const Scenario& s,
                                  const DesignArtifact& artifact,
                                  const Vec& x0) {
  if (!artifact.certificate) {
    throw InfeasibleError("Hurwitz closed loop",
                          "design has no decay certificate");
  }
  return bound_constants(s.dynamics, artifact.design, *artifact.certificate,
                         artifact.spectral, s.trigger, x0);
}

std::optional<BoundConstants> reference_constants(
    const Scenario& s, const DesignArtifact& artifact, const Vec& x0) {
  if (!s.reference_certificate) return std::nullopt;
  return bound_constants(s.dynamics, artifact.design,
                         *s.reference_certificate, artifact.spectral,
                         s.trigger, x0);
}

double governing_tau(const BoundsReport& report, bool delayed) {
  return delayed ? report.delayed_tau_uniform : report.tau_uniform;
}

std::vector<std::string> config_warnings(const ScenarioConfig& config,
                                         const BoundsReport& report) {
  std::vector<std::string> out;
  char buf[256];
  const bool delayed = config.delay > 0.0;
  const double tau = governing_tau(report, delayed);
  if (config.step_h > tau / 4.0) {
    std::snprintf(buf, sizeof buf,
                  "step_h = %.6g exceeds tau/4 = %.6g; event times are still "
                  "bisected to %.3g s",
                  config.step_h, tau / 4.0, config.event_time_tol);
    out.emplace_back(buf);
  }
  if (delayed && !(config.delay <= report.epsilon_uniform)) {
    std::snprintf(buf, sizeof buf,
                  "delay d = %.6g exceeds the admissible epsilon = %.6g "
                  "(asymptotic %.6g); the delayed guarantees do not apply",
                  config.delay, report.epsilon_uniform,
                  report.epsilon_asymptotic);
    out.emplace_back(buf);
  }
  return out;
}

}  // namespace etcons
