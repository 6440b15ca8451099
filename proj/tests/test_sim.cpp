#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>

#include <gtest/gtest.h>

#include "etcons/error.hpp"
#include "etcons/sim.hpp"
#include "bench_fixture.hpp"

using namespace etcons;

namespace {

ScenarioConfig scalar_pair(double a, double x0, double x1, double beta,
                           double lambda, double t_end, double h = 1e-3) {
  ScenarioConfig cfg;
  cfg.graph = DirectedGraph(2, {{1, 0}});  // agent 0 receives from agent 1
  Mat am(1, 1), bm(1, 1), f(1, 1);
  am << a;
  bm << 1.0;
  f << -1.0;
  cfg.dynamics = LtiDynamics(am, bm);
  cfg.design.f = f;
  cfg.design.c = 1.0;
  cfg.trigger = {beta, lambda, 0.0};
  cfg.x0 = Vec(2);
  cfg.x0 << x0, x1;
  cfg.t_end = t_end;
  cfg.step_h = h;
  return cfg;
}

ScenarioConfig bench_config(double delay, double t_end, double h = 2.5e-4) {
  const DesignArtifact art = fixture::bench_artifact();
  ScenarioConfig cfg;
  cfg.graph = fixture::bench_graph();
  cfg.dynamics = fixture::bench_dynamics();
  cfg.design = art.design;
  cfg.trigger = fixture::bench_trigger();
  cfg.delay = delay;
  cfg.x0 = fixture::bench_x0();
  cfg.t_end = t_end;
  cfg.step_h = h;
  cfg.sample_every = 40;
  return cfg;
}

// Next event of agent 0 in the scalar pair, by hand. Between events
//   e(s) = s e^{a s} z_k, z_k = x_k - y_1(t_k),
// so the crossing solves |z_k| s e^{a s} = beta e^{-lambda (t_k + s)}.
// Returns the crossing time and x_0 there; nullopt past t_end.
std::optional<std::pair<double, double>> next_crossing(double a, double tk, double xk, double x1,
                                                       double beta, double lambda, double t_end) {
  const double zk = xk - x1 * std::exp(a * tk);
  const auto g = [&](double s) {
    return std::abs(zk) * s * std::exp(a * s) - beta * std::exp(-lambda * (tk + s));
  };
  double hi = 1e-6;
  while (g(hi) < 0.0 && tk + hi <= t_end) hi *= 1.01;
  if (tk + hi > t_end) return std::nullopt;
  double lo = hi / 1.01;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) >= 0.0 ? hi : lo) = mid;
  }
  const double x_next = std::exp(a * hi) * (xk - hi * zk);
  return std::make_pair(tk + hi, x_next);
}

std::vector<double> scalar_pair_events(double a, double x0, double x1, double beta,
                                       double lambda, double t_end) {
  std::vector<double> out{0.0};
  double tk = 0.0, xk = x0;
  while (const auto next = next_crossing(a, tk, xk, x1, beta, lambda, t_end)) {
    std::tie(tk, xk) = *next;
    out.push_back(tk);
  }
  return out;
}

}  // namespace

TEST(ControlInput, ScalarExample) {
  Simulator sim(scalar_pair(0.0, 1.0, 0.0, 0.1, 0.05, 1.0));
  EXPECT_DOUBLE_EQ(sim.control_input(0)(0), -1.0);
  EXPECT_DOUBLE_EQ(sim.control_input(1)(0), 0.0);  // no in-neighbors
}

TEST(ControlInput, EqualModelsGiveZero) {
  ScenarioConfig cfg = bench_config(0.0, 1.0);
  for (Eigen::Index k = 0; k < cfg.x0.size(); k += 2) cfg.x0.segment(k, 2) << 3.0, -1.0;
  Simulator sim(cfg);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(sim.control_input(i).norm(), 0.0);
}

TEST(Propagate, Cases) {
  Simulator zoh(scalar_pair(0.0, 1.0, 0.0, 0.1, 0.05, 1.0));
  Vec v(1);
  v << 2.5;
  EXPECT_EQ(zoh.propagate(v, 0.37)(0), 2.5);
  Simulator scalar(scalar_pair(-0.7, 1.0, 0.0, 0.1, 0.05, 1.0));
  for (double dt : {1e-4, 0.01, 0.5, 3.0}) {
    EXPECT_NEAR(scalar.propagate(v, dt)(0), 2.5 * std::exp(-0.7 * dt), 1e-12);
    EXPECT_EQ(scalar.propagate(Vec::Zero(1), dt)(0), 0.0);
  }
  EXPECT_THROW(scalar.propagate(v, -1.0), std::invalid_argument);
}

TEST(DetectEvent, NoneWhenErrorStaysZero) {
  ScenarioConfig cfg = scalar_pair(0.4, 1.0, 0.0, 0.1, 0.05, 1.0);
  cfg.graph = DirectedGraph(2);
  Simulator sim(cfg);
  EXPECT_FALSE(sim.detect_event(0, 0.5).has_value());
  EXPECT_LT(sim.trigger_function(0), 0.0);
}

TEST(DetectEvent, MatchesAnalyticCrossing) {
  for (double a : {0.0, 0.3, -0.5}) {
    const ScenarioConfig cfg = scalar_pair(a, 1.0, 0.5, 0.02, 0.05, 8.0);
    const SimTrace trace = run(cfg);
    // Each crossing from the realized previous event; the bisection keeps
    // the upper end of a 1e-9 bracket.
    const double tol = a == 0.0 ? 1e-9 : 1e-8;
    std::size_t checked = 0;
    for (const auto& e : trace.events) {
      if (e.agent != 0) continue;
      const auto next = next_crossing(a, e.t_event, e.x_broadcast(0), 0.5, 0.02, 0.05, 8.0);
      if (!next) break;
      const auto later = std::find_if(trace.events.begin(), trace.events.end(), [&](const EventRecord& r) {
        return r.agent == 0 && r.t_event > e.t_event;
      });
      ASSERT_NE(later, trace.events.end());
      EXPECT_NEAR(later->t_event, next->first + 0.5e-9, 0.5e-9 + tol) << "a = " << a;
      EXPECT_GE(later->t_event, next->first - 1e-12);
      ++checked;
    }
    EXPECT_GE(checked, 10u) << "a = " << a;
    // The whole sequence from the analytic recursion alone; bracket offsets
    // accumulate and grow on the long late gaps, hence the looser bound.
    const auto got = trace.event_times(0);
    const auto want = scalar_pair_events(a, 1.0, 0.5, 0.02, 0.05, 8.0);
    ASSERT_EQ(got.size(), want.size()) << "a = " << a;
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-5) << "event " << k;
    EXPECT_EQ(trace.event_times(1), std::vector<double>{0.0});
  }
}

TEST(Run, SingleAgentFollowsFreeResponse) {
  ScenarioConfig cfg;
  cfg.graph = DirectedGraph(1);
  cfg.dynamics = fixture::bench_dynamics();
  cfg.design.f = Mat::Zero(1, 2);
  cfg.design.c = 1.0;
  cfg.trigger = {0.5, 0.05, 0.0};
  cfg.x0 = Vec(2);
  cfg.x0 << 1.0, -2.0;
  cfg.t_end = 5.0;
  cfg.step_h = 1e-3;
  const SimTrace trace = run(cfg);
  ASSERT_EQ(trace.events.size(), 1u);
  EXPECT_EQ(trace.events[0].t_event, 0.0);
  for (const Sample& s : trace.samples) {
    EXPECT_EQ(s.u.norm(), 0.0);
    const Vec want = expm(Mat(cfg.dynamics.a * s.t)) * cfg.x0;
    EXPECT_LT((s.x.col(0) - want).norm(), 1e-10 * want.norm());
  }
}

TEST(Run, InvariantsDelayFree) {
  const ScenarioConfig cfg = bench_config(0.0, 3.0);
  const SimTrace trace = run(cfg);
  EXPECT_GT(trace.events.size(), 6u);
  EXPECT_EQ(trace.monitors.max_copy_mismatch, 0.0);
  EXPECT_LE(trace.monitors.max_threshold_excess, 1e-6 * cfg.trigger.beta);
  std::vector<double> last(6, -1.0);
  double prev = 0.0;
  for (const auto& e : trace.events) {
    EXPECT_EQ(e.error_after, 0.0);
    EXPECT_EQ(e.t_delivered, e.t_event);
    EXPECT_GT(e.t_event, last[e.agent]);
    EXPECT_GE(e.t_event, prev);
    last[e.agent] = e.t_event;
    prev = e.t_event;
  }
  for (std::size_t k = 1; k < trace.samples.size(); ++k) {
    EXPECT_GT(trace.samples[k].t, trace.samples[k - 1].t);
    EXPECT_TRUE(trace.samples[k].x.allFinite());
    EXPECT_EQ((trace.samples[k].y_self - trace.samples[k].y_delayed).norm(), 0.0);
  }
  EXPECT_EQ(trace.samples.back().t, 3.0);
}

TEST(Run, DelayedCatchUpAndDelivery) {
  const ScenarioConfig cfg = bench_config(0.004, 2.0);
  Simulator sim(cfg);
  // Before the first delivery the delayed self-model is e^{At} x(0).
  while (sim.time() < 0.003) sim.step();
  for (std::size_t i = 0; i < 6; ++i) {
    const Vec want = expm(Mat(cfg.dynamics.a * sim.time())) * cfg.x0.segment(2 * static_cast<Eigen::Index>(i), 2);
    EXPECT_LT((sim.held_model(i, i) - want).norm(), 1e-12 * want.norm());
  }
  const SimTrace trace = sim.run();
  EXPECT_LE(trace.monitors.max_catch_up_gap, 1e-9);
  for (const auto& e : trace.events) {
    EXPECT_EQ(e.t_delivered, e.t_event + 0.004);
    EXPECT_EQ(e.error_after, 0.0);
  }
  EXPECT_LE(trace.monitors.max_threshold_excess, 1e-6 * cfg.trigger.beta);
  EXPECT_EQ(trace.monitors.max_copy_mismatch, 0.0);
}

TEST(Run, DelayLongerThanGapsKeepsFifoOrder) {
  // d far above the inter-event gaps: many messages in flight per source.
  ScenarioConfig cfg = scalar_pair(0.0, 1.0, 0.0, 0.05, 0.05, 3.0);
  cfg.trigger.gamma = 1.0;
  cfg.delay = 0.25;
  const SimTrace trace = run(cfg);
  const auto times = trace.event_times(0);
  ASSERT_GT(times.size(), 5u);
  std::size_t overlapping = 0;
  for (std::size_t k = 1; k < times.size(); ++k) overlapping += times[k] - times[k - 1] < cfg.delay;
  EXPECT_GT(overlapping, 0u);
  EXPECT_LE(trace.monitors.max_catch_up_gap, 1e-9);
}

TEST(Run, DeliveredModelIsPropagatedBroadcast) {
  ScenarioConfig cfg = scalar_pair(0.3, 1.0, 0.5, 0.1, 0.05, 2.0);
  cfg.trigger.gamma = 1.0;
  cfg.delay = 0.01;
  Simulator sim(cfg);
  std::size_t compared = 0;
  while (!sim.finished()) {
    sim.step();
    const EventRecord* last = nullptr;
    for (const auto& e : sim.trace().events)
      if (e.agent == 0) last = &e;
    if (sim.time() < last->t_delivered) continue;
    const double want = std::exp(0.3 * (sim.time() - last->t_event)) * last->x_broadcast(0);
    EXPECT_NEAR(sim.held_model(0, 0)(0), want, 1e-12 * std::abs(want)) << "t = " << sim.time();
    EXPECT_NEAR(sim.held_model(0, 0)(0), sim.own_model(0)(0), 1e-12 * std::abs(want));
    ++compared;
  }
  EXPECT_GT(compared, 1000u);
}

TEST(Run, SimultaneousEventsOrderedByAgent) {
  ScenarioConfig cfg;
  cfg.graph = DirectedGraph(2, {{0, 1}, {1, 0}});
  Mat a(1, 1), b(1, 1), f(1, 1);
  a << 0.0;
  b << 1.0;
  f << -1.0;
  cfg.dynamics = LtiDynamics(a, b);
  cfg.design.f = f;
  cfg.design.c = 1.0;
  cfg.trigger = {0.1, 0.05, 0.0};
  cfg.x0 = Vec(2);
  cfg.x0 << 1.0, -1.0;
  cfg.t_end = 1.0;
  const SimTrace trace = run(cfg);
  ASSERT_GE(trace.events.size(), 4u);
  for (std::size_t k = 0; k + 1 < trace.events.size(); k += 2) {
    EXPECT_EQ(trace.events[k].agent, 0u);
    EXPECT_EQ(trace.events[k + 1].agent, 1u);
    EXPECT_EQ(trace.events[k].t_event, trace.events[k + 1].t_event);
  }
}

TEST(Run, Deterministic) {
  const ScenarioConfig cfg = bench_config(0.004, 1.0);
  const SimTrace a = run(cfg);
  const SimTrace b = run(cfg);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t k = 0; k < a.events.size(); ++k) {
    EXPECT_EQ(a.events[k].t_event, b.events[k].t_event);
    EXPECT_EQ(a.events[k].x_broadcast, b.events[k].x_broadcast);
  }
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t k = 0; k < a.samples.size(); ++k) EXPECT_EQ(a.samples[k].x, b.samples[k].x);
}

TEST(Run, StepHalvingChangesLittle) {
  const SimTrace coarse = run(bench_config(0.0, 2.0, 5e-4));
  const SimTrace fine = run(bench_config(0.0, 2.0, 2.5e-4));
  const Mat& xc = coarse.samples.back().x;
  const Mat& xf = fine.samples.back().x;
  EXPECT_LE((xc - xf).norm(), 1e-6 * xf.norm());
  EXPECT_EQ(coarse.events.size(), fine.events.size());
}

TEST(Run, ZenoGuardTrips) {
  ScenarioConfig cfg = scalar_pair(0.0, 1.0, 0.0, 1e-13, 0.05, 1.0);
  try {
    run(cfg);
    FAIL() << "expected the Zeno guard";
  } catch (const SimulationError& e) {
    EXPECT_NE(std::string(e.what()).find("Zeno"), std::string::npos) << e.what();
  }
}

TEST(Run, OverflowGuardTrips) {
  ScenarioConfig cfg = scalar_pair(200.0, 1.0, 0.0, 0.1, 0.05, 10.0);
  cfg.design.f(0, 0) = 0.0;
  EXPECT_THROW(run(cfg), SimulationError);
}

TEST(Config, Validation) {
  ScenarioConfig cfg = scalar_pair(0.0, 1.0, 0.0, 0.1, 0.05, 1.0);
  cfg.delay = 0.01;
  cfg.trigger.gamma = 0.1;
  EXPECT_THROW(Simulator{cfg}, std::invalid_argument);  // gamma <= beta
  cfg = scalar_pair(0.0, 1.0, 0.0, 0.1, 0.05, 1.0);
  cfg.x0 = Vec::Zero(3);
  EXPECT_THROW(Simulator{cfg}, std::invalid_argument);
  cfg = scalar_pair(0.0, 1.0, 0.0, 0.1, 0.05, 1.0);
  cfg.delay = -1.0;
  EXPECT_THROW(Simulator{cfg}, std::invalid_argument);
  cfg = scalar_pair(0.0, 1.0, 0.0, 0.1, 0.05, 1.0);
  cfg.agent_beta = {0.1};
  EXPECT_THROW(Simulator{cfg}, std::invalid_argument);
  cfg.agent_beta = {0.1, 0.3};
  cfg.agent_lambda = {0.2, 0.05};
  EXPECT_EQ(cfg.effective_trigger().beta, 0.3);
  EXPECT_EQ(cfg.effective_trigger().lambda, 0.05);
}

TEST(Run, ZeroHorizon) {
  const SimTrace trace = run(scalar_pair(0.0, 1.0, 0.0, 0.1, 0.05, 0.0));
  EXPECT_EQ(trace.events.size(), 2u);
  ASSERT_FALSE(trace.samples.empty());
  EXPECT_EQ(trace.samples.back().t, 0.0);
}
