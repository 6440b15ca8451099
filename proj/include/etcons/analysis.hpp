#pragma once

#include <optional>
#include <string>
#include <vector>

#include "etcons/bounds.hpp"
#include "etcons/graph.hpp"
#include "etcons/sim.hpp"

namespace etcons {

/// max_{i,j} ‖x_i - x_j‖ over the columns of `states`.
double disagreement(const Mat& states);
double disagreement(const Sample& sample);

/// ‖x_hat_{2:N}‖ with x_hat = (S_L^{-1} kron I) x.
double transformed_disagreement(const Mat& states,
                                const SpectralDecomposition& spectral);
double transformed_disagreement(const Sample& sample,
                                const SpectralDecomposition& spectral);

struct InterEventStats {
  std::size_t count = 0;
  /// Absent for agents with fewer than two events.
  std::optional<double> min_gap;
  std::optional<double> mean_gap;
};

/// Gaps between consecutive events of each agent, the t = 0 broadcast
/// included.
std::vector<InterEventStats> inter_event_stats(const SimTrace& trace);

struct OracleEvent {
  std::size_t agent = 0;
  double time = 0.0;
};

struct OracleResult {
  std::vector<OracleEvent> events;  // t = 0 broadcasts first
  std::vector<double> sample_times;
  std::vector<Mat> states;          // n x N per sample time
};

inline constexpr std::size_t kOracleEventLimit = 100000;

/// Reference solution for delay-free runs. Between events z = [x; y]
/// follows z' = M z with M = [[I kron A, c L kron BF], [0, I kron A]], so
/// each segment is one matrix exponential; crossings are bracketed on a
/// fine scan and bisected to ~1e-13 s. States are reported at the given
/// sample times (sorted, within [0, t_end]).
OracleResult exact_oracle(const ScenarioConfig& config,
                          const std::vector<double>& sample_times = {},
                          double scan_step = 1e-4);

struct VerificationCheck {
  std::string name;
  bool passed = false;
  /// Informational checks do not affect the exit code.
  bool gating = true;
  double worst = 0.0;
  double limit = 0.0;
  double time = 0.0;
  std::optional<std::size_t> agent;
  std::string detail;
};

struct DisagreementPoint {
  double t = 0.0;
  double disagreement = 0.0;
  double transformed = 0.0;
  double envelope = 0.0;
};

struct VerificationReport {
  std::vector<VerificationCheck> checks;
  std::vector<DisagreementPoint> series;
  std::vector<InterEventStats> stats;
  std::optional<double> min_gap;
  double tau_uniform = 0.0;
  double tau_asymptotic = 0.0;
  /// NaN for delay-free runs.
  double epsilon_uniform = 0.0;
  double epsilon_asymptotic = 0.0;
  double delay = 0.0;
  std::size_t event_count = 0;

  bool all_passed() const;
  const VerificationCheck* find(const std::string& name) const;
};

/// Runs every trace check against the bounds. `constants` must come from
/// the same scenario (design, certificate, trigger and x0).
VerificationReport verify_trace(const SimTrace& trace,
                                const ScenarioConfig& config,
                                const SpectralDecomposition& spectral,
                                const BoundConstants& constants);

std::string summary_text(const VerificationReport& report);

}  // namespace etcons
