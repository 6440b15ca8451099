#include <charconv>
#include <cstring>
#include <filesystem>
#include <functional>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "etcons/error.hpp"
#include "etcons/io.hpp"
#include "bench_fixture.hpp"

using namespace etcons;
namespace fs = std::filesystem;

namespace {

const fs::path kData = ETCONS_DATA_DIR;

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("etcons_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.what();
  }
  return "<no ParseError>";
}

const char* kMinimal = R"({
  "schema": "etcons-scenario/1",
  "graph": {"agents": 2, "edges": [[2, 1]]},
  "A": [[0]],
  "B": [[1]],
  "trigger": {"beta": 0.5, "lambda": 0.05},
  "t_end": 1
})";

std::string with(const std::string& base, const std::string& from, const std::string& to) {
  std::string s = base;
  const auto at = s.find(from);
  EXPECT_NE(at, std::string::npos) << from;
  return s.replace(at, from.size(), to);
}

}  // namespace

TEST(FormatDouble, RoundTrips) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  int checked = 0;
  while (checked < 10000) {
    const std::uint64_t b = bits(rng);
    double v;
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v)) continue;
    const std::string text = format_double(v);
    double back = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), back);
    EXPECT_EQ(back, v) << text;
    ++checked;
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(3.0), "3");
}

TEST(GraphFile, BenchGraph) {
  const DirectedGraph g = read_graph(kData / "paper" / "six_agents.graph");
  EXPECT_EQ(g, fixture::bench_graph());
  EXPECT_EQ(parse_graph(format_graph(g)), g);
}

TEST(GraphFile, ErrorsNameTheLine) {
  EXPECT_NE(message_of([] { parse_graph("1 2\n", "g"); }).find("g:1:"), std::string::npos);
  EXPECT_NE(message_of([] { parse_graph("agents 3\n1 2\n2 2\n", "g"); }).find("g:3: self-loop"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_graph("agents 3\n1 4\n", "g"); }).find("g:2:"), std::string::npos);
  EXPECT_NE(message_of([] { parse_graph("agents 3\n1 x\n", "g"); }).find("g:2:"), std::string::npos);
  EXPECT_NE(message_of([] { parse_graph("# etcons-graph/9\nagents 2\n", "g"); }).find("schema"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_graph("# only comments\n", "g"); }).find("agents N"), std::string::npos);
}

TEST(ScenarioFile, BenchScenariosLoad) {
  const Scenario s = read_scenario(kData / "paper" / "delayed.json");
  EXPECT_EQ(s.graph, fixture::bench_graph());
  EXPECT_EQ(s.dynamics.a, fixture::bench_dynamics().a);
  EXPECT_EQ(s.dynamics.b, fixture::bench_dynamics().b);
  ASSERT_TRUE(s.design.p_override.has_value());
  EXPECT_EQ(*s.design.p_override, fixture::bench_p());
  EXPECT_EQ(s.trigger.beta, 3.0);
  EXPECT_EQ(s.trigger.lambda, 0.03);
  EXPECT_EQ(s.trigger.gamma, 12.0);
  EXPECT_EQ(s.delay, 0.004);
  ASSERT_TRUE(s.x0.has_value());
  EXPECT_EQ(*s.x0, fixture::bench_x0());
  ASSERT_TRUE(s.reference_certificate.has_value());
  EXPECT_EQ(s.reference_certificate->lambda_hat, 0.24);
  EXPECT_EQ(s.reference_certificate->beta_hat, 2.0);
  const Scenario free = read_scenario(kData / "paper" / "delay_free.json");
  EXPECT_EQ(free.delay, 0.0);
  EXPECT_NE(scenario_hash(s), scenario_hash(free));
  EXPECT_NO_THROW(read_scenario(kData / "zoh" / "single_integrators.json"));
}

TEST(ScenarioFile, CanonicalRoundTrip) {
  for (const char* name : {"paper/delayed.json", "paper/delay_free.json", "zoh/single_integrators.json"}) {
    const Scenario s = read_scenario(kData / name);
    const std::string dumped = scenario_to_json(s).dump(2);
    const Scenario back = parse_scenario(dumped);
    EXPECT_EQ(scenario_to_json(back).dump(2), dumped) << name;
    EXPECT_EQ(scenario_hash(back), scenario_hash(s)) << name;
  }
  const Scenario m = parse_scenario(kMinimal);
  EXPECT_EQ(scenario_to_json(parse_scenario(scenario_to_json(m).dump())), scenario_to_json(m));
}

TEST(ScenarioFile, PerAgentThresholdsReduce) {
  const Scenario s = parse_scenario(
      with(kMinimal, R"("beta": 0.5, "lambda": 0.05)", R"("beta": [0.5, 0.7], "lambda": [0.05, 0.02])"));
  EXPECT_EQ(s.trigger.beta, 0.7);
  EXPECT_EQ(s.trigger.lambda, 0.02);
  EXPECT_EQ(s.agent_beta.size(), 2u);
  EXPECT_EQ(parse_scenario(scenario_to_json(s).dump()).agent_lambda, s.agent_lambda);
}

TEST(ScenarioFile, ErrorsNameTheField) {
  const auto msg = [](const std::string& text) { return message_of([&] { parse_scenario(text, {}, "s.json"); }); };
  EXPECT_NE(msg(with(kMinimal, R"("t_end": 1)", R"("t_end": 1, "speed": 2)")).find("'speed': unknown key"),
            std::string::npos);
  EXPECT_NE(msg(with(kMinimal, R"("t_end": 1)", R"("t_end": 1, "delay": 0.01)")).find("'trigger.gamma'"),
            std::string::npos);
  EXPECT_NE(msg(with(kMinimal, R"("A": [[0]])", R"("A": [[0, 1]])")).find("'A': must be square"),
            std::string::npos);
  EXPECT_NE(msg(with(kMinimal, R"("lambda": 0.05)", R"("lambda": -1)")).find("'trigger.lambda'"),
            std::string::npos);
  EXPECT_NE(msg(with(kMinimal, R"(,
  "t_end": 1)", "")).find("'t_end': missing"),
            std::string::npos);
  EXPECT_NE(msg(with(kMinimal, "etcons-scenario/1", "etcons-scenario/2")).find("'schema'"), std::string::npos);
  EXPECT_NE(msg(with(kMinimal, R"("B": [[1]])", R"("B": [[1], [2, 3]])")).find("'B'"), std::string::npos);
  EXPECT_NE(msg(with(kMinimal, R"("edges": [[2, 1]])", R"("edges": [[2, 5]])")).find("graph"), std::string::npos);
  EXPECT_NE(msg(with(kMinimal, "\"t_end\": 1\n}", "\"t_end\": 1,\n}")).find("s.json:8:1: malformed JSON"), std::string::npos);
  EXPECT_NE(msg(with(kMinimal, R"("graph": {"agents": 2, "edges": [[2, 1]]})", R"("graph": "missing.graph")"))
                .find("file not found"),
            std::string::npos);
}

TEST(InitialState, SeededAndScaled) {
  Scenario s = parse_scenario(kMinimal);
  s.seed = 42;
  s.x0_scale = 3.0;
  const Vec a = initial_state(s);
  EXPECT_EQ(a.size(), 2);
  EXPECT_EQ(initial_state(s), a);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 3.0);
  s.seed = 43;
  EXPECT_NE(initial_state(s), a);
}

TEST(MakeConfig, StepRules) {
  Scenario s = parse_scenario(kMinimal);
  s.x0 = Vec::Ones(2);
  ControllerDesign d;
  d.f = Mat::Constant(1, 1, -1.0);
  d.c = 1.0;
  EXPECT_EQ(make_config(s, d).step_h, 1e-3);
  EXPECT_EQ(make_config(s, d, 1e-3).step_h, 2.5e-4);
  EXPECT_EQ(make_config(s, d, 1e-3).sample_every, 40);
  s.step_h = 5e-3;
  EXPECT_EQ(make_config(s, d, 1e-3).step_h, 5e-3);
  EXPECT_EQ(make_config(s, d, 1e-3).sample_every, 2);
}

TEST(DesignFile, RoundTrip) {
  const Scenario s = read_scenario(kData / "paper" / "delay_free.json");
  const DesignArtifact art = fixture::bench_artifact();
  const nlohmann::json j = design_to_json(art, scenario_hash(s));
  const DesignArtifact back = design_from_json(nlohmann::json::parse(j.dump()), s);
  EXPECT_EQ(back.design.p, art.design.p);
  EXPECT_EQ(back.design.f, art.design.f);
  EXPECT_EQ(back.design.c, art.design.c);
  EXPECT_EQ(back.design.alpha, art.design.alpha);
  EXPECT_EQ(back.certificate->lambda_hat, art.certificate->lambda_hat);
  EXPECT_EQ(back.certificate->beta_hat, art.certificate->beta_hat);
  EXPECT_TRUE(back.report.all_passed());
}

TEST(TraceFiles, WriteReadIdentityAndDeterminism) {
  const Scenario s = read_scenario(kData / "paper" / "delayed.json");
  const DesignArtifact art = fixture::bench_artifact();
  ScenarioConfig cfg = make_config(s, art.design);
  cfg.t_end = 0.5;
  cfg.sample_every = 100;
  const SimTrace trace = run(cfg);
  const fs::path a = fresh_dir("a"), b = fresh_dir("b");
  const RunMetadata meta{scenario_hash(s), cfg.step_h, 0.0};
  write_trace(a, trace, meta);
  write_trace(b, run(cfg), meta);
  for (const char* f : {"states.csv", "events.csv", "run.json"}) EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;

  const LoadedTrace back = read_trace(a);
  EXPECT_EQ(back.scenario_hash, scenario_hash(s));
  EXPECT_EQ(back.step_h, cfg.step_h);
  const SimTrace& t = back.trace;
  EXPECT_EQ(t.n_agents, trace.n_agents);
  EXPECT_EQ(t.delay, trace.delay);
  ASSERT_EQ(t.samples.size(), trace.samples.size());
  for (std::size_t k = 0; k < t.samples.size(); ++k) {
    EXPECT_EQ(t.samples[k].t, trace.samples[k].t);
    EXPECT_EQ(t.samples[k].x, trace.samples[k].x);
    EXPECT_EQ(t.samples[k].y_delayed, trace.samples[k].y_delayed);
    EXPECT_EQ(t.samples[k].u, trace.samples[k].u);
    EXPECT_EQ(t.samples[k].threshold, trace.samples[k].threshold);
  }
  ASSERT_EQ(t.events.size(), trace.events.size());
  for (std::size_t k = 0; k < t.events.size(); ++k) {
    EXPECT_EQ(t.events[k].agent, trace.events[k].agent);
    EXPECT_EQ(t.events[k].t_event, trace.events[k].t_event);
    EXPECT_EQ(t.events[k].t_delivered, trace.events[k].t_delivered);
    EXPECT_EQ(t.events[k].x_broadcast, trace.events[k].x_broadcast);
  }
  EXPECT_EQ(t.monitors.max_copy_mismatch, trace.monitors.max_copy_mismatch);
  EXPECT_EQ(t.monitors.max_catch_up_gap, trace.monitors.max_catch_up_gap);
}

TEST(TraceFiles, HashMismatchIsRejected) {
  const Scenario s = parse_scenario(kMinimal);
  ScenarioConfig cfg;
  cfg.graph = s.graph;
  cfg.dynamics = s.dynamics;
  cfg.design.f = Mat::Constant(1, 1, -1.0);
  cfg.design.c = 1.0;
  cfg.trigger = s.trigger;
  cfg.x0 = Vec::Ones(2);
  cfg.x0(1) = 0.0;
  cfg.t_end = 0.2;
  const fs::path dir = fresh_dir("hash");
  write_trace(dir, run(cfg), {scenario_hash(s), cfg.step_h, 0.0});
  std::string states = read_text(dir / "states.csv");
  states.replace(states.find("scenario=") + 9, 4, "0000");
  write_text(dir / "states.csv", states);
  EXPECT_NE(message_of([&] { read_trace(dir); }).find("scenario hash differs"), std::string::npos);
}
