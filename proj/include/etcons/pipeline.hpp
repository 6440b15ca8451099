#pragma once

#include <optional>
#include <string>
#include <vector>

#include "etcons/analysis.hpp"
#include "etcons/bounds.hpp"
#include "etcons/design.hpp"
#include "etcons/io.hpp"
#include "etcons/sim.hpp"

namespace etcons {

/// Design stage for a parsed scenario.
DesignArtifact design_scenario(const Scenario& s);

/// Bound constants from the design's own certificate. Throws
/// InfeasibleError when the design has no certificate.
BoundConstants scenario_constants(const Scenario& s,
                                  const DesignArtifact& artifact,
                                  const Vec& x0);

/// Same constants with the scenario's reference (beta_hat, lambda_hat) in
/// place of the computed certificate; empty when none is given.
std::optional<BoundConstants> reference_constants(
    const Scenario& s, const DesignArtifact& artifact, const Vec& x0);

/// Inter-event bound the step size is compared against: delayed tau for
/// delayed scenarios, tau otherwise (uniform over t_k).
double governing_tau(const BoundsReport& report, bool delayed);

/// Non-fatal remarks about a configuration (step size vs. tau, d vs.
/// epsilon).
std::vector<std::string> config_warnings(const ScenarioConfig& config,
                                         const BoundsReport& report);

}  // namespace etcons
