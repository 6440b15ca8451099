#include "etcons/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "etcons/error.hpp"

namespace etcons {
namespace {

constexpr double kOverflowLimit = 1e150;

}  // namespace

double ScenarioConfig::beta_of(std::size_t agent) const {
  return agent_beta.empty() ? trigger.beta : agent_beta.at(agent);
}

double ScenarioConfig::lambda_of(std::size_t agent) const {
  return agent_lambda.empty() ? trigger.lambda : agent_lambda.at(agent);
}

TriggerParams ScenarioConfig::effective_trigger() const {
  if (agent_beta.empty() && agent_lambda.empty()) return trigger;
  std::vector<double> betas(n_agents());
  std::vector<double> lambdas(n_agents());
  for (std::size_t i = 0; i < n_agents(); ++i) {
    betas[i] = beta_of(i);
    lambdas[i] = lambda_of(i);
  }
  return reduce_agent_params(betas, lambdas, trigger.gamma);
}

void ScenarioConfig::validate() const {
  const auto n = dynamics.state_dim();
  const auto m = dynamics.input_dim();
  const auto agents = static_cast<Eigen::Index>(n_agents());
  if (n == 0) throw std::invalid_argument("scenario: dynamics not set");
  if (design.f.rows() != m || design.f.cols() != n) {
    throw std::invalid_argument("scenario: F must be m x n");
  }
  if (x0.size() != agents * n) {
    throw std::invalid_argument("scenario: x0 must have N * n entries");
  }
  if (!x0.allFinite()) throw std::invalid_argument("scenario: x0 not finite");
  if (!agent_beta.empty() && agent_beta.size() != n_agents()) {
    throw std::invalid_argument("scenario: per-agent beta has wrong length");
  }
  if (!agent_lambda.empty() && agent_lambda.size() != n_agents()) {
    throw std::invalid_argument("scenario: per-agent lambda has wrong length");
  }
  for (std::size_t i = 0; i < n_agents(); ++i) {
    if (!(beta_of(i) > 0.0) || !(lambda_of(i) > 0.0)) {
      throw std::invalid_argument("scenario: beta and lambda must be > 0");
    }
  }
  if (!(delay >= 0.0) || !std::isfinite(delay)) {
    throw std::invalid_argument("scenario: delay must be >= 0");
  }
  if (delay > 0.0 && !(trigger.gamma > effective_trigger().beta)) {
    throw std::invalid_argument("scenario: delayed runs need gamma > beta");
  }
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) {
    throw std::invalid_argument("scenario: t_end must be >= 0");
  }
  if (!(step_h > 0.0)) {
    throw std::invalid_argument("scenario: step_h must be > 0");
  }
  if (sample_every < 1) {
    throw std::invalid_argument("scenario: sample_every must be >= 1");
  }
  if (!(event_time_tol > 0.0)) {
    throw std::invalid_argument("scenario: event_time_tol must be > 0");
  }
}

std::vector<double> SimTrace::event_times(std::size_t agent) const {
  std::vector<double> out;
  for (const auto& e : events) {
    if (e.agent == agent) out.push_back(e.t_event);
  }
  return out;
}

Simulator::Simulator(ScenarioConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t n_agents = config_.n_agents();
  const auto n = config_.dynamics.state_dim();
  const Mat& a = config_.dynamics.a;
  cf_ = config_.design.c * config_.design.f;
  bcf_ = config_.dynamics.b * cf_;
  exp_step_ = expm(Mat(a * config_.step_h));
  exp_half_step_ = expm(Mat(a * (0.5 * config_.step_h)));
  exp_delay_ = expm(Mat(a * config_.delay));

  x_.resize(n_agents);
  y_self_.resize(n_agents);
  sources_.resize(n_agents);
  held_.resize(n_agents);
  copies_.resize(n_agents);
  last_event_.assign(n_agents, 0.0);
  recent_events_.resize(n_agents);
  in_flight_.resize(n_agents);

  for (std::size_t i = 0; i < n_agents; ++i) {
    x_[i] = config_.x0.segment(static_cast<Eigen::Index>(i) * n, n);
    y_self_[i] = x_[i];
    sources_[i].push_back(i);
    for (const std::size_t j : config_.graph.in_neighbors(i)) {
      sources_[i].push_back(j);
    }
  }
  for (std::size_t i = 0; i < n_agents; ++i) {
    for (std::size_t k = 0; k < sources_[i].size(); ++k) {
      const std::size_t src = sources_[i][k];
      held_[i].push_back(x_[src]);
      copies_[src].emplace_back(i, k);
    }
  }
  for (auto& list : copies_) {
    std::stable_partition(list.begin(), list.end(), [&](const auto& hk) {
      return hk.second == 0;
    });
  }

  trace_.n_agents = n_agents;
  trace_.state_dim = n;
  trace_.input_dim = config_.dynamics.input_dim();
  trace_.delay = config_.delay;
  trace_.t_end = config_.t_end;

  // Every agent broadcasts its initial state at t = 0.
  for (std::size_t i = 0; i < n_agents; ++i) {
    EventRecord ev;
    ev.agent = i;
    ev.t_event = 0.0;
    ev.x_broadcast = x_[i];
    ev.t_delivered = config_.delay;
    trace_.events.push_back(ev);
    recent_events_[i].push_back(0.0);
    if (config_.delay > 0.0) {
      in_flight_[i].push_back({i, 0.0, x_[i], config_.delay});
    }
  }
  update_monitors();
  record_sample();
}

const Vec& Simulator::held_model(std::size_t holder, std::size_t source) const {
  const auto& srcs = sources_.at(holder);
  const auto it = std::find(srcs.begin(), srcs.end(), source);
  if (it == srcs.end()) {
    throw std::logic_error("held_model: agent " + std::to_string(holder) +
                           " holds no model of agent " +
                           std::to_string(source));
  }
  return held_[holder][static_cast<std::size_t>(it - srcs.begin())];
}

Mat Simulator::exp_a(double dt) const {
  if (dt == config_.step_h) return exp_step_;
  if (dt == 0.5 * config_.step_h) return exp_half_step_;
  return expm(Mat(config_.dynamics.a * dt));
}

// Fixed-order product so that identical inputs give bit-identical copies.
Vec Simulator::apply(const Mat& m, const Vec& v) {
  Vec out(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < m.cols(); ++k) acc += m(r, k) * v(k);
    out(r) = acc;
  }
  return out;
}

Vec Simulator::propagate(const Vec& v, double dt) const {
  if (dt < 0.0) throw std::invalid_argument("propagate: negative step");
  if (dt == 0.0) return v;
  return apply(exp_a(dt), v);
}

Vec Simulator::disagreement_sum(std::size_t agent) const {
  const auto& held = held_[agent];
  Vec z = Vec::Zero(config_.dynamics.state_dim());
  for (std::size_t k = 1; k < held.size(); ++k) z += held[0] - held[k];
  return z;
}

Vec Simulator::control_input(std::size_t agent) const {
  return cf_ * disagreement_sum(agent);
}

Vec Simulator::rk4(std::size_t agent, double dt) const {
  const Mat& a = config_.dynamics.a;
  const Vec z = disagreement_sum(agent);
  const Vec drive0 = bcf_ * z;
  const Vec drive_half = bcf_ * apply(exp_a(0.5 * dt), z);
  const Vec drive1 = bcf_ * apply(exp_a(dt), z);
  const Vec& x = x_[agent];
  const Vec k1 = a * x + drive0;
  const Vec k2 = a * (x + 0.5 * dt * k1) + drive_half;
  const Vec k3 = a * (x + 0.5 * dt * k2) + drive_half;
  const Vec k4 = a * (x + dt * k3) + drive1;
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

double Simulator::trigger_function(std::size_t agent) const {
  return (y_self_[agent] - x_[agent]).norm() -
         config_.beta_of(agent) * std::exp(-config_.lambda_of(agent) * t_);
}

std::optional<double> Simulator::detect_event(std::size_t agent,
                                              double dt) const {
  const double beta = config_.beta_of(agent);
  const double lambda = config_.lambda_of(agent);
  const auto g = [&](double s) {
    const Vec x = rk4(agent, s);
    const Vec y = propagate(y_self_[agent], s);
    return (y - x).norm() - beta * std::exp(-lambda * (t_ + s));
  };
  if (trigger_function(agent) >= 0.0) return 0.0;
  if (!(dt > 0.0) || g(dt) < 0.0) return std::nullopt;
  double lo = 0.0;
  double hi = dt;
  while (hi - lo > config_.event_time_tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) >= 0.0 ? hi : lo) = mid;
  }
  return hi;
}

void Simulator::fire_event(std::size_t agent) {
  EventRecord ev;
  ev.agent = agent;
  ev.t_event = t_;
  ev.x_broadcast = x_[agent];
  ev.t_delivered = t_ + config_.delay;
  ev.error_before = (y_self_[agent] - x_[agent]).norm();

  y_self_[agent] = x_[agent];
  if (config_.delay == 0.0) {
    for (const auto& [holder, slot] : copies_[agent]) {
      held_[holder][slot] = x_[agent];
    }
  } else {
    in_flight_[agent].push_back({agent, t_, x_[agent], ev.t_delivered});
  }
  ev.error_after = (y_self_[agent] - x_[agent]).norm();
  last_event_[agent] = t_;
  trace_.events.push_back(std::move(ev));

  auto& recent = recent_events_[agent];
  recent.push_back(t_);
  while (!recent.empty() && recent.front() < t_ - 1.0) recent.pop_front();
  if (static_cast<double>(recent.size()) > 1.0 / config_.step_h) {
    throw SimulationError(
        t_, "Zeno guard: agent " + std::to_string(agent + 1) + " fired " +
                std::to_string(recent.size()) +
                " events within one second at t = " + std::to_string(t_));
  }
}

void Simulator::advance_to(double target) {
  const double dt = target - t_;
  if (!(dt > 0.0)) return;
  const Mat e = exp_a(dt);
  std::vector<Vec> next(x_.size());
  for (std::size_t i = 0; i < x_.size(); ++i) next[i] = rk4(i, dt);
  x_ = std::move(next);
  for (auto& y : y_self_) y = apply(e, y);
  for (auto& held : held_) {
    for (auto& y : held) y = apply(e, y);
  }
  t_ = target;
  check_finite();
}

double Simulator::next_delivery() const {
  double next = std::numeric_limits<double>::infinity();
  for (const auto& q : in_flight_) {
    if (!q.empty()) next = std::min(next, q.front().deliver_at);
  }
  return next;
}

void Simulator::deliver_due() {
  for (;;) {
    std::size_t src = in_flight_.size();
    double when = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < in_flight_.size(); ++j) {
      const auto& q = in_flight_[j];
      if (!q.empty() && q.front().deliver_at <= t_ && q.front().deliver_at < when) {
        when = q.front().deliver_at;
        src = j;
      }
    }
    if (src == in_flight_.size()) return;
    const Message msg = std::move(in_flight_[src].front());
    in_flight_[src].pop_front();
    const Vec value = apply(exp_delay_, msg.payload);
    for (const auto& [holder, slot] : copies_[src]) {
      held_[holder][slot] = value;
    }
  }
}

void Simulator::update_monitors() {
  RunMonitors& mon = trace_.monitors;
  const bool delayed = config_.delay > 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    const double lambda = config_.lambda_of(i);
    const double err = (y_self_[i] - x_[i]).norm();
    const double excess = err - config_.beta_of(i) * std::exp(-lambda * t_);
    if (excess > mon.max_threshold_excess) {
      mon.max_threshold_excess = excess;
      mon.threshold_excess_time = t_;
      mon.threshold_excess_agent = i;
    }
    if (delayed) {
      const double ed = (held_[i][0] - x_[i]).norm();
      const double ratio = ed / (config_.trigger.gamma * std::exp(-lambda * t_));
      if (ratio > mon.max_delayed_ratio) {
        mon.max_delayed_ratio = ratio;
        mon.delayed_ratio_time = t_;
        mon.delayed_ratio_agent = i;
      }
      if (in_flight_[i].empty() && t_ - last_event_[i] >= config_.delay) {
        const double gap = (held_[i][0] - y_self_[i]).norm() /
                           std::max(y_self_[i].norm(), 1.0);
        mon.max_catch_up_gap = std::max(mon.max_catch_up_gap, gap);
      }
    }
  }
  for (std::size_t src = 0; src < copies_.size(); ++src) {
    const Vec& ref = delayed ? held_[src][0] : y_self_[src];
    for (const auto& [holder, slot] : copies_[src]) {
      const double diff = (held_[holder][slot] - ref).cwiseAbs().maxCoeff();
      mon.max_copy_mismatch = std::max(mon.max_copy_mismatch, diff);
    }
  }
}

void Simulator::record_sample() {
  const auto agents = static_cast<Eigen::Index>(x_.size());
  const auto n = config_.dynamics.state_dim();
  const auto m = config_.dynamics.input_dim();
  Sample s;
  s.t = t_;
  s.x.resize(n, agents);
  s.y_self.resize(n, agents);
  s.y_delayed.resize(n, agents);
  s.u.resize(m, agents);
  s.e_norm.resize(agents);
  s.ed_norm.resize(agents);
  s.threshold.resize(agents);
  for (Eigen::Index i = 0; i < agents; ++i) {
    const auto a = static_cast<std::size_t>(i);
    s.x.col(i) = x_[a];
    s.y_self.col(i) = y_self_[a];
    s.y_delayed.col(i) = held_[a][0];
    s.u.col(i) = control_input(a);
    s.e_norm(i) = (y_self_[a] - x_[a]).norm();
    s.ed_norm(i) = (held_[a][0] - x_[a]).norm();
    s.threshold(i) =
        config_.beta_of(a) * std::exp(-config_.lambda_of(a) * t_);
  }
  trace_.samples.push_back(std::move(s));
}

void Simulator::check_finite() const {
  for (std::size_t i = 0; i < x_.size(); ++i) {
    if (!x_[i].allFinite() || x_[i].cwiseAbs().maxCoeff() > kOverflowLimit) {
      throw SimulationError(t_, "numeric overflow in agent " +
                                    std::to_string(i + 1) + " at t = " +
                                    std::to_string(t_));
    }
  }
}

void Simulator::step() {
  if (finished()) return;
  const double h = config_.step_h;
  double t_next = static_cast<double>(grid_index_ + 1) * h;
  if (t_next > config_.t_end || config_.t_end - t_next < 1e-9 * h) {
    t_next = config_.t_end;
  }
  while (t_ < t_next) {
    const double target = std::min(t_next, next_delivery());
    const double dt = target - t_;
    std::optional<double> earliest;
    std::size_t who = 0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const auto s = detect_event(i, dt);
      if (s && (!earliest || *s < *earliest)) {
        earliest = s;
        who = i;
      }
    }
    if (earliest) {
      if (*earliest > 0.0) advance_to(std::min(t_ + *earliest, target));
      update_monitors();
      fire_event(who);
      continue;
    }
    advance_to(target);
    update_monitors();
    if (next_delivery() <= t_) {
      deliver_due();
      update_monitors();
    }
  }
  ++grid_index_;
  ++trace_.monitors.steps;
  if (grid_index_ % static_cast<std::uint64_t>(config_.sample_every) == 0 ||
      finished()) {
    record_sample();
  }
}

SimTrace Simulator::run() {
  while (!finished()) step();
  return trace_;
}

SimTrace run(const ScenarioConfig& config) {
  Simulator sim(config);
  return sim.run();
}

}  // namespace etcons
