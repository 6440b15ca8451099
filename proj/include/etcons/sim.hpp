#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "etcons/bounds.hpp"
#include "etcons/design.hpp"
#include "etcons/graph.hpp"
#include "etcons/linalg.hpp"

namespace etcons {

struct ScenarioConfig {
  DirectedGraph graph{1};
  LtiDynamics dynamics;
  ControllerDesign design;
  TriggerParams trigger;
  /// Optional per-agent thresholds; empty means trigger.beta / lambda.
  std::vector<double> agent_beta;
  std::vector<double> agent_lambda;
  double delay = 0.0;
  /// Stacked initial state, agent-major (N * n).
  Vec x0;
  double t_end = 0.0;
  double step_h = 1e-3;
  std::uint64_t seed = 0;
  /// Record a sample every this many nominal steps (plus t = 0 and t_end).
  int sample_every = 1;
  double event_time_tol = 1e-9;

  std::size_t n_agents() const { return graph.n_agents(); }
  double beta_of(std::size_t agent) const;
  double lambda_of(std::size_t agent) const;
  /// max/min reduction over agents.
  TriggerParams effective_trigger() const;
  /// Throws std::invalid_argument on inconsistent dimensions or ranges.
  void validate() const;
};

struct EventRecord {
  std::size_t agent = 0;
  double t_event = 0.0;
  Vec x_broadcast;
  double t_delivered = 0.0;
  /// ‖e_i‖ just before and just after the model reset.
  double error_before = 0.0;
  double error_after = 0.0;
};

/// One snapshot. Matrices hold one column per agent.
struct Sample {
  double t = 0.0;
  Mat x;
  Mat y_self;
  Mat y_delayed;
  Mat u;
  Vec e_norm;
  Vec ed_norm;
  Vec threshold;
};

/// Per-step worst cases tracked during the run, including instants that are
/// not kept as samples.
struct RunMonitors {
  double max_threshold_excess = -std::numeric_limits<double>::infinity();
  double threshold_excess_time = 0.0;
  std::size_t threshold_excess_agent = 0;
  double max_delayed_ratio = 0.0;
  double delayed_ratio_time = 0.0;
  std::size_t delayed_ratio_agent = 0;
  /// Largest |difference| between a held model copy and its reference
  /// (the source's own model); zero means bit-for-bit agreement.
  double max_copy_mismatch = 0.0;
  /// Largest relative gap between y_i^d and y_i once t - t_k >= d.
  double max_catch_up_gap = 0.0;
  std::size_t steps = 0;
};

struct SimTrace {
  std::size_t n_agents = 0;
  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
  double delay = 0.0;
  double t_end = 0.0;
  std::vector<Sample> samples;
  std::vector<EventRecord> events;
  RunMonitors monitors;

  /// Event times of one agent in increasing order.
  std::vector<double> event_times(std::size_t agent) const;
};

/// Deterministic hybrid simulation: models advance by exact exponentials,
/// true states by RK4, events located by bisection and messages delivered
/// after the constant delay.
class Simulator {
 public:
  explicit Simulator(ScenarioConfig config);

  const ScenarioConfig& config() const { return config_; }
  double time() const { return t_; }
  bool finished() const { return t_ >= config_.t_end; }

  const Vec& state(std::size_t agent) const { return x_[agent]; }
  /// Agent's own undelayed model y_i.
  const Vec& own_model(std::size_t agent) const { return y_self_[agent]; }
  /// Copy of `source`'s (delayed) model held by `holder`.
  const Vec& held_model(std::size_t holder, std::size_t source) const;

  /// u_i = cF sum_j (y_i^d - y_j^d) from the models agent i holds.
  Vec control_input(std::size_t agent) const;
  /// e^{A dt} v.
  Vec propagate(const Vec& v, double dt) const;
  /// ‖y_i - x_i‖ - beta_i e^{-lambda_i t} at the current time.
  double trigger_function(std::size_t agent) const;
  /// Crossing time in [t, t + dt] of the trigger function, located by
  /// bisection to event_time_tol; empty when the error stays below the
  /// threshold at t + dt.
  std::optional<double> detect_event(std::size_t agent, double dt) const;
  /// Broadcast at the current time: resets y_i, updates or enqueues copies.
  void fire_event(std::size_t agent);
  /// Advance every agent to `target` with no discontinuity in between.
  void advance_to(double target);
  /// One nominal integration step with events and deliveries inside it.
  void step();

  SimTrace run();
  const SimTrace& trace() const { return trace_; }

 private:
  struct Message {
    std::size_t source;
    double t_event;
    Vec payload;
    double deliver_at;
  };

  Mat exp_a(double dt) const;
  static Vec apply(const Mat& m, const Vec& v);
  Vec disagreement_sum(std::size_t agent) const;
  Vec rk4(std::size_t agent, double dt) const;
  double next_delivery() const;
  void deliver_due();
  void update_monitors();
  void record_sample();
  void check_finite() const;

  ScenarioConfig config_;
  Mat bcf_;  // B * c * F
  Mat cf_;   // c * F
  double t_ = 0.0;
  std::uint64_t grid_index_ = 0;
  std::vector<Vec> x_;
  std::vector<Vec> y_self_;
  // held_[i][k] is agent i's copy of the model of sources_[i][k];
  // sources_[i][0] == i.
  std::vector<std::vector<std::size_t>> sources_;
  std::vector<std::vector<Vec>> held_;
  // (holder, slot) pairs for every copy of a source's model, the source's
  // own copy first.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> copies_;
  std::vector<double> last_event_;
  std::vector<std::deque<double>> recent_events_;
  std::vector<std::deque<Message>> in_flight_;
  Mat exp_delay_;
  Mat exp_step_;
  Mat exp_half_step_;
  SimTrace trace_;
};

/// Runs a full scenario from t = 0 to t_end.
SimTrace run(const ScenarioConfig& config);

}  // namespace etcons
