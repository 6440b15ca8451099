#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "etcons/analysis.hpp"
#include "etcons/error.hpp"
#include "bench_fixture.hpp"

using namespace etcons;

namespace {

ScenarioConfig bench_config(double delay, double t_end) {
  const DesignArtifact art = fixture::bench_artifact();
  ScenarioConfig cfg;
  cfg.graph = fixture::bench_graph();
  cfg.dynamics = fixture::bench_dynamics();
  cfg.design = art.design;
  cfg.trigger = fixture::bench_trigger();
  cfg.delay = delay;
  cfg.x0 = fixture::bench_x0();
  cfg.t_end = t_end;
  cfg.step_h = 2.5e-4;
  cfg.sample_every = 40;
  return cfg;
}

ScenarioConfig integrator_pair(double t_end) {
  ScenarioConfig cfg;
  cfg.graph = DirectedGraph(2, {{1, 0}});
  Mat a(1, 1), b(1, 1), f(1, 1);
  a << 0.0;
  b << 1.0;
  f << -1.0;
  cfg.dynamics = LtiDynamics(a, b);
  cfg.design.f = f;
  cfg.design.c = 1.0;
  cfg.trigger = {0.02, 0.05, 0.0};
  cfg.x0 = Vec(2);
  cfg.x0 << 1.0, 0.5;
  cfg.t_end = t_end;
  cfg.step_h = 1e-3;
  return cfg;
}

SimTrace periodic_trace(double delta, int count) {
  SimTrace t;
  t.n_agents = 3;
  t.state_dim = 1;
  for (int k = 0; k < count; ++k) {
    EventRecord e;
    e.agent = 0;
    e.t_event = k * delta;
    t.events.push_back(e);
  }
  EventRecord single;
  single.agent = 1;
  t.events.push_back(single);
  return t;
}

}  // namespace

TEST(Disagreement, Examples) {
  Mat same(2, 3);
  same << 1, 1, 1, 2, 2, 2;
  EXPECT_EQ(disagreement(same), 0.0);
  Mat pair(1, 2);
  pair << 0.0, 1.0;
  EXPECT_EQ(disagreement(pair), 1.0);
  Mat three(2, 3);
  three << 0, 3, 0, 0, 0, 4;
  EXPECT_DOUBLE_EQ(disagreement(three), 5.0);
}

TEST(Disagreement, RelabelingAndZero) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    Mat x(2, 5);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = nd(rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 5, rng);
    EXPECT_EQ(disagreement(x), disagreement(Mat(x * perm)));
    EXPECT_GT(disagreement(x), 0.0);
  }
}

TEST(TransformedDisagreement, KernelAndInitialValue) {
  const DesignArtifact art = fixture::bench_artifact();
  Mat consensus(2, 6);
  for (Eigen::Index i = 0; i < 6; ++i) consensus.col(i) << 4.0, -7.0;
  EXPECT_LT(transformed_disagreement(consensus, art.spectral), 1e-12);
  const Vec x0 = fixture::bench_x0();
  const Mat xs = Eigen::Map<const Mat>(x0.data(), 2, 6);
  const BoundConstants c = fixture::bench_constants(art);
  EXPECT_NEAR(transformed_disagreement(xs, art.spectral), c.x_hat_0, 1e-12 * c.x_hat_0);
}

TEST(InterEventStats, PeriodicSynthetic) {
  const auto stats = inter_event_stats(periodic_trace(0.125, 9));
  ASSERT_EQ(stats.size(), 3u);
  EXPECT_EQ(stats[0].count, 9u);
  EXPECT_DOUBLE_EQ(*stats[0].min_gap, 0.125);
  EXPECT_DOUBLE_EQ(*stats[0].mean_gap, 0.125);
  EXPECT_EQ(stats[1].count, 1u);
  EXPECT_FALSE(stats[1].min_gap.has_value());
  EXPECT_EQ(stats[2].count, 0u);
  EXPECT_FALSE(stats[2].mean_gap.has_value());
}

TEST(ExactOracle, DecoupledAgentFreeResponse) {
  ScenarioConfig cfg;
  cfg.graph = DirectedGraph(1);
  cfg.dynamics = fixture::bench_dynamics();
  cfg.design.f = Mat::Zero(1, 2);
  cfg.design.c = 1.0;
  cfg.trigger = {0.5, 0.05, 0.0};
  cfg.x0 = Vec(2);
  cfg.x0 << 1.0, -2.0;
  cfg.t_end = 4.0;
  const OracleResult r = exact_oracle(cfg, {0.0, 1.0, 2.5, 4.0});
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].time, 0.0);
  ASSERT_EQ(r.states.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    const Vec want = expm(Mat(cfg.dynamics.a * r.sample_times[k])) * cfg.x0;
    EXPECT_LT((r.states[k].col(0) - want).norm(), 1e-10 * want.norm());
  }
}

// Single integrators: agent 0 moves at slope -(y_0 - y_1) between its
// events, so the k-th crossing solves |z_k| s = beta e^{-lambda (t_k + s)}
// with z_k = x_0(t_k) - 0.5, and x_0 restarts from x_k - s z_k.
TEST(ExactOracle, IntegratorPairClosedForm) {
  const ScenarioConfig cfg = integrator_pair(6.0);
  const OracleResult r = exact_oracle(cfg);
  std::vector<double> want{0.0};
  double tk = 0.0, xk = 1.0;
  while (true) {
    const double zk = xk - 0.5;
    const auto g = [&](double s) { return std::abs(zk) * s - 0.02 * std::exp(-0.05 * (tk + s)); };
    double lo = 0.0, hi = 0.02 / std::abs(zk);  // g(hi) >= 0 always
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) >= 0.0 ? hi : lo) = mid;
    }
    if (tk + hi > cfg.t_end) break;
    xk -= hi * zk;
    tk += hi;
    want.push_back(tk);
  }
  std::vector<double> got;
  for (const auto& e : r.events)
    if (e.agent == 0) got.push_back(e.time);
  ASSERT_GE(want.size(), 10u);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-9) << "event " << k;
}

TEST(ExactOracle, AgreesWithSimulatorOnSmallScenarios) {
  std::vector<ScenarioConfig> configs{integrator_pair(6.0), bench_config(0.0, 1.0)};
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd;
  while (configs.size() < 5) {
    Mat a(2, 2), b(2, 1);
    for (Eigen::Index k = 0; k < 4; ++k) a.data()[k] = nd(rng);
    for (Eigen::Index k = 0; k < 2; ++k) b.data()[k] = nd(rng);
    const LtiDynamics dyn(a, b);
    if (!is_controllable(dyn)) continue;
    const DirectedGraph g(3, {{0, 1}, {1, 2}, {2, 0}});
    const DesignArtifact art = synthesize(dyn, g);
    ScenarioConfig cfg;
    cfg.graph = g;
    cfg.dynamics = dyn;
    cfg.design = art.design;
    cfg.trigger = {0.05, 0.5 * art.certificate->lambda_hat, 0.0};
    cfg.x0 = Vec(6);
    for (Eigen::Index k = 0; k < 6; ++k) cfg.x0(k) = nd(rng);
    cfg.t_end = 2.0;
    cfg.step_h = 2.5e-4;
    configs.push_back(cfg);
  }
  for (std::size_t n = 0; n < configs.size(); ++n) {
    const SimTrace trace = run(configs[n]);
    const OracleResult ref = exact_oracle(configs[n]);
    ASSERT_EQ(trace.events.size(), ref.events.size()) << "scenario " << n;
    EXPECT_GT(ref.events.size(), configs[n].n_agents()) << "scenario " << n;
    for (std::size_t k = 0; k < ref.events.size(); ++k) {
      EXPECT_EQ(trace.events[k].agent, ref.events[k].agent) << "scenario " << n << " event " << k;
      EXPECT_NEAR(trace.events[k].t_event, ref.events[k].time, 1e-6) << "scenario " << n << " event " << k;
    }
  }
}

TEST(ExactOracle, RejectsDelay) {
  EXPECT_THROW(exact_oracle(bench_config(0.004, 1.0)), std::invalid_argument);
  EXPECT_THROW(exact_oracle(bench_config(0.0, 1.0), {}, 0.0), std::invalid_argument);
}

class BenchVerification : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    art_ = new DesignArtifact(fixture::bench_artifact());
    constants_ = new BoundConstants(fixture::bench_constants(*art_));
    config_ = new ScenarioConfig(bench_config(0.0, 4.0));
    trace_ = new SimTrace(run(*config_));
  }
  static void TearDownTestSuite() {
    delete art_;
    delete constants_;
    delete config_;
    delete trace_;
  }
  static VerificationReport verify(const SimTrace& t) {
    return verify_trace(t, *config_, art_->spectral, *constants_);
  }
  static DesignArtifact* art_;
  static BoundConstants* constants_;
  static ScenarioConfig* config_;
  static SimTrace* trace_;
};
DesignArtifact* BenchVerification::art_ = nullptr;
BoundConstants* BenchVerification::constants_ = nullptr;
ScenarioConfig* BenchVerification::config_ = nullptr;
SimTrace* BenchVerification::trace_ = nullptr;

TEST_F(BenchVerification, CompliantRunPasses) {
  const VerificationReport r = verify(*trace_);
  for (const auto& c : r.checks) {
    if (c.gating) EXPECT_TRUE(c.passed) << c.name << " " << c.detail;
  }
  EXPECT_TRUE(r.all_passed());
  EXPECT_EQ(r.find("delayed envelope"), nullptr);
  ASSERT_TRUE(r.min_gap.has_value());
  EXPECT_GE(*r.min_gap, r.tau_uniform);
  for (const auto& p : r.series) EXPECT_LE(p.transformed, p.envelope * (1 + 1e-6));
  EXPECT_NEAR(r.series.front().transformed, constants_->x_hat_0, 1e-9 * constants_->x_hat_0);
  EXPECT_FALSE(summary_text(r).empty());
}

TEST_F(BenchVerification, InjectedShortGapFailsZeno) {
  SimTrace bad = *trace_;
  const double tau = verify(*trace_).tau_uniform;
  // Pull agent 3's second event to a tenth of tau after its first.
  std::size_t seen = 0;
  double first = 0.0;
  for (auto& e : bad.events) {
    if (e.agent != 2) continue;
    if (seen++ == 0) {
      first = e.t_event;
    } else {
      e.t_event = first + 0.1 * tau;
      break;
    }
  }
  const VerificationReport r = verify(bad);
  const VerificationCheck* z = r.find("zeno");
  ASSERT_NE(z, nullptr);
  EXPECT_FALSE(z->passed);
  ASSERT_TRUE(z->agent.has_value());
  EXPECT_EQ(*z->agent, 2u);
  EXPECT_LT(z->worst, 1.0);
  EXPECT_FALSE(r.all_passed());
}

TEST_F(BenchVerification, InjectedStateFailsEnvelope) {
  SimTrace bad = *trace_;
  bad.samples.back().x(0, 0) += 1e4;
  const VerificationReport r = verify(bad);
  ASSERT_NE(r.find("envelope domination"), nullptr);
  EXPECT_FALSE(r.find("envelope domination")->passed);
  EXPECT_NEAR(r.find("envelope domination")->time, bad.samples.back().t, 1e-12);
}

TEST_F(BenchVerification, NonFiniteSampleFails) {
  SimTrace bad = *trace_;
  bad.samples[3].x(1, 2) = std::nan("");
  EXPECT_FALSE(verify(bad).find("finite samples")->passed);
}

TEST_F(BenchVerification, AgentCountMismatchThrows) {
  SimTrace bad = *trace_;
  bad.n_agents = 5;
  EXPECT_THROW(verify(bad), std::invalid_argument);
}
