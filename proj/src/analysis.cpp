#include "etcons/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "etcons/error.hpp"

namespace etcons {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Relative slack for comparisons that are exact in theory.
constexpr double kEnvelopeSlack = 1e-6;
constexpr double kCatchUpTol = 1e-9;

Vec stacked(const Mat& states) {
  return Eigen::Map<const Vec>(states.data(), states.size());
}

bool sample_finite(const Sample& s) {
  return s.x.allFinite() && s.y_self.allFinite() && s.y_delayed.allFinite() &&
         s.u.allFinite() && s.e_norm.allFinite() && s.ed_norm.allFinite();
}

}  // namespace

double disagreement(const Mat& states) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < states.cols(); ++j) {
      worst = std::max(worst, (states.col(i) - states.col(j)).norm());
    }
  }
  return worst;
}

double disagreement(const Sample& sample) { return disagreement(sample.x); }

double transformed_disagreement(const Mat& states,
                                const SpectralDecomposition& spectral) {
  return transformed_tail(spectral, stacked(states), states.rows()).norm();
}

double transformed_disagreement(const Sample& sample,
                                const SpectralDecomposition& spectral) {
  return transformed_disagreement(sample.x, spectral);
}

std::vector<InterEventStats> inter_event_stats(const SimTrace& trace) {
  std::vector<InterEventStats> out(trace.n_agents);
  for (std::size_t i = 0; i < trace.n_agents; ++i) {
    const auto times = trace.event_times(i);
    out[i].count = times.size();
    if (times.size() < 2) continue;
    double lo = kInf;
    for (std::size_t k = 1; k < times.size(); ++k) {
      lo = std::min(lo, times[k] - times[k - 1]);
    }
    out[i].min_gap = lo;
    out[i].mean_gap =
        (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  }
  return out;
}

OracleResult exact_oracle(const ScenarioConfig& config,
                          const std::vector<double>& sample_times,
                          double scan_step) {
  config.validate();
  if (config.delay != 0.0) {
    throw std::invalid_argument("exact_oracle: delay-free scenarios only");
  }
  if (!(scan_step > 0.0)) {
    throw std::invalid_argument("exact_oracle: scan_step must be > 0");
  }
  const auto agents = static_cast<Eigen::Index>(config.n_agents());
  const auto n = config.dynamics.state_dim();
  const auto dim = agents * n;
  const Mat eye = Mat::Identity(agents, agents);
  const Mat bf = config.dynamics.b * config.design.f;

  Mat m = Mat::Zero(2 * dim, 2 * dim);
  m.topLeftCorner(dim, dim) = kron(eye, config.dynamics.a);
  m.topRightCorner(dim, dim) =
      config.design.c * kron(laplacian(config.graph), bf);
  m.bottomRightCorner(dim, dim) = kron(eye, config.dynamics.a);
  const Mat scan = expm(Mat(m * scan_step));

  Vec z(2 * dim);
  z << config.x0, config.x0;
  double t = 0.0;

  OracleResult out;
  for (Eigen::Index i = 0; i < agents; ++i) {
    out.events.push_back({static_cast<std::size_t>(i), 0.0});
  }
  std::vector<double> pending = sample_times;
  std::sort(pending.begin(), pending.end());
  std::size_t next_sample = 0;

  const auto g = [&](const Vec& state, Eigen::Index i, double time) {
    const auto a = static_cast<std::size_t>(i);
    const double err =
        (state.segment(dim + i * n, n) - state.segment(i * n, n)).norm();
    return err - config.beta_of(a) * std::exp(-config.lambda_of(a) * time);
  };
  const auto record = [&](const Vec& state, double time) {
    out.sample_times.push_back(time);
    out.states.push_back(
        Eigen::Map<const Mat>(state.data(), n, agents));
  };
  const auto fire_ready = [&]() {
    // Lowest index first; a reset agent has g < 0 so this terminates.
    for (;;) {
      Eigen::Index who = -1;
      for (Eigen::Index i = 0; i < agents; ++i) {
        if (g(z, i, t) >= 0.0) {
          who = i;
          break;
        }
      }
      if (who < 0) return;
      z.segment(dim + who * n, n) = z.segment(who * n, n);
      out.events.push_back({static_cast<std::size_t>(who), t});
      if (out.events.size() > kOracleEventLimit) {
        throw SimulationError(t, "exact_oracle: event limit exceeded");
      }
    }
  };

  while (next_sample < pending.size() && pending[next_sample] <= 0.0) {
    record(z, 0.0);
    ++next_sample;
  }
  while (t < config.t_end) {
    double target = std::min(t + scan_step, config.t_end);
    if (next_sample < pending.size()) {
      target = std::min(target, pending[next_sample]);
    }
    const double dt = target - t;
    const bool full = dt == scan_step;
    const Vec z_end = full ? Vec(scan * z) : Vec(expm(Mat(m * dt)) * z);

    // Earliest crossing inside (t, target].
    double t_hit = kInf;
    for (Eigen::Index i = 0; i < agents; ++i) {
      if (g(z_end, i, target) < 0.0) continue;
      double lo = 0.0;
      double hi = dt;
      while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const Vec zm = expm(Mat(m * mid)) * z;
        (g(zm, i, t + mid) >= 0.0 ? hi : lo) = mid;
      }
      t_hit = std::min(t_hit, hi);
    }
    if (t_hit < kInf && t_hit < dt) {
      z = expm(Mat(m * t_hit)) * z;
      t += t_hit;
    } else {
      z = z_end;
      t = target;
    }
    if (!z.allFinite()) {
      throw SimulationError(t, "exact_oracle: numeric overflow");
    }
    fire_ready();
    while (next_sample < pending.size() && pending[next_sample] <= t) {
      record(z, t);
      ++next_sample;
    }
  }
  return out;
}

bool VerificationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) {
    return c.passed || !c.gating;
  });
}

const VerificationCheck* VerificationReport::find(
    const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

VerificationReport verify_trace(const SimTrace& trace,
                                const ScenarioConfig& config,
                                const SpectralDecomposition& spectral,
                                const BoundConstants& constants) {
  if (trace.n_agents != config.n_agents() ||
      spectral.n_agents() != config.n_agents()) {
    throw std::invalid_argument("verify_trace: agent count mismatch");
  }
  VerificationReport r;
  const bool delayed = trace.delay > 0.0;
  r.delay = trace.delay;
  r.event_count = trace.events.size();
  const BoundsReport bounds = bounds_report(constants);
  r.tau_uniform = delayed ? bounds.delayed_tau_uniform : bounds.tau_uniform;
  r.tau_asymptotic =
      delayed ? bounds.delayed_tau_asymptotic : bounds.tau_asymptotic;
  r.epsilon_uniform = delayed ? bounds.epsilon_uniform : kNaN;
  r.epsilon_asymptotic = delayed ? bounds.epsilon_asymptotic : kNaN;
  const double beta = constants.params.beta;
  const double gamma = constants.params.gamma;

  {
    VerificationCheck c;
    c.name = "finite samples";
    c.passed = true;
    for (const auto& s : trace.samples) {
      if (!sample_finite(s)) {
        c.passed = false;
        c.time = s.t;
        c.detail = "non-finite value in sample";
        break;
      }
    }
    r.checks.push_back(c);
  }
  {
    VerificationCheck c;
    c.name = "threshold envelope";
    c.limit = kEnvelopeSlack * beta;
    c.worst = trace.monitors.max_threshold_excess;
    c.time = trace.monitors.threshold_excess_time;
    c.agent = trace.monitors.threshold_excess_agent;
    for (const auto& s : trace.samples) {
      for (Eigen::Index i = 0; i < s.e_norm.size(); ++i) {
        const double excess = s.e_norm(i) - s.threshold(i);
        if (excess > c.worst) {
          c.worst = excess;
          c.time = s.t;
          c.agent = static_cast<std::size_t>(i);
        }
      }
    }
    c.passed = c.worst <= c.limit;
    c.detail = "max ‖e_i‖ - beta_i e^{-lambda_i t}";
    r.checks.push_back(c);
  }
  if (delayed) {
    VerificationCheck c;
    c.name = "delayed envelope";
    c.limit = 1.0 + kEnvelopeSlack;
    c.worst = trace.monitors.max_delayed_ratio;
    c.time = trace.monitors.delayed_ratio_time;
    c.agent = trace.monitors.delayed_ratio_agent;
    for (const auto& s : trace.samples) {
      for (Eigen::Index i = 0; i < s.ed_norm.size(); ++i) {
        const double lam = config.lambda_of(static_cast<std::size_t>(i));
        const double ratio = s.ed_norm(i) / (gamma * std::exp(-lam * s.t));
        if (ratio > c.worst) {
          c.worst = ratio;
          c.time = s.t;
          c.agent = static_cast<std::size_t>(i);
        }
      }
    }
    c.passed = c.worst <= c.limit;
    c.detail = "max ‖e_i^d‖ / (gamma e^{-lambda_i t})";
    r.checks.push_back(c);
  }
  {
    VerificationCheck c;
    c.name = "event reset";
    for (const auto& e : trace.events) {
      if (e.error_after > c.worst) {
        c.worst = e.error_after;
        c.time = e.t_event;
        c.agent = e.agent;
      }
    }
    c.passed = c.worst == 0.0;
    c.detail = "‖e_i‖ right after each broadcast";
    r.checks.push_back(c);
  }
  {
    VerificationCheck c;
    c.name = "model agreement";
    c.worst = trace.monitors.max_copy_mismatch;
    c.passed = c.worst == 0.0;
    c.detail = "held model copies vs. reference, bitwise";
    r.checks.push_back(c);
  }
  if (delayed) {
    VerificationCheck c;
    c.name = "delayed catch-up";
    c.worst = trace.monitors.max_catch_up_gap;
    c.limit = kCatchUpTol;
    c.passed = c.worst <= c.limit;
    c.detail = "relative ‖y_i^d - y_i‖ once t - t_k >= d";
    r.checks.push_back(c);
  }
  {
    VerificationCheck c;
    c.name = "zeno";
    c.worst = kInf;
    c.limit = 1.0;
    for (std::size_t i = 0; i < trace.n_agents; ++i) {
      const auto times = trace.event_times(i);
      for (std::size_t k = 1; k < times.size(); ++k) {
        const double t_k = times[k - 1];
        const double bound =
            delayed ? delayed_tau_bound(h3(constants, t_k), constants)
                    : tau_bound(k3(constants, t_k), constants);
        const double gap = times[k] - t_k;
        const double ratio = gap / bound;
        if (ratio < c.worst) {
          c.worst = ratio;
          c.time = t_k;
          c.agent = i;
        }
      }
    }
    c.passed = c.worst >= c.limit;
    if (c.worst == kInf) c.detail = "no inter-event gaps";
    else c.detail = "min gap / tau(t_k)";
    r.checks.push_back(c);
  }
  {
    VerificationCheck c;
    c.name = "envelope domination";
    c.worst = 0.0;
    c.limit = 1.0 + kEnvelopeSlack;
    for (const auto& s : trace.samples) {
      DisagreementPoint p;
      p.t = s.t;
      p.disagreement = disagreement(s);
      p.transformed = transformed_disagreement(s, spectral);
      p.envelope = disagreement_envelope(constants, s.t, delayed);
      r.series.push_back(p);
      const double ratio = p.transformed / p.envelope;
      if (ratio > c.worst) {
        c.worst = ratio;
        c.time = s.t;
      }
    }
    c.passed = c.worst <= c.limit;
    c.detail = "max ‖x_hat_{2:N}‖ / envelope";
    r.checks.push_back(c);
  }

  r.stats = inter_event_stats(trace);
  for (const auto& s : r.stats) {
    if (s.min_gap) r.min_gap = std::min(r.min_gap.value_or(kInf), *s.min_gap);
  }

  if (delayed) {
    VerificationCheck c;
    c.name = "delay admissibility";
    c.gating = false;
    c.worst = trace.delay;
    c.limit = r.epsilon_uniform;
    c.passed = trace.delay <= r.epsilon_uniform;
    c.detail = "d <= epsilon (uniform); the delayed guarantees assume it";
    r.checks.push_back(c);
  }
  if (!r.series.empty()) {
    VerificationCheck c;
    c.name = "disagreement decay";
    c.gating = false;
    const double first = r.series.front().disagreement;
    const double last = r.series.back().disagreement;
    c.worst = first > 0.0 ? last / first : 0.0;
    c.limit = 1.0;
    c.time = r.series.back().t;
    c.passed = c.worst < c.limit;
    c.detail = "disagreement(t_end) / disagreement(0)";
    r.checks.push_back(c);
  }
  return r;
}

std::string summary_text(const VerificationReport& report) {
  std::ostringstream os;
  char buf[256];
  for (const auto& c : report.checks) {
    const char* status = c.passed ? "PASS" : (c.gating ? "FAIL" : "note");
    std::snprintf(buf, sizeof buf, "%-4s  %-22s worst=%-13.6g limit=%-11.6g",
                  status, c.name.c_str(), c.worst, c.limit);
    os << buf;
    if (c.agent) os << " agent=" << (*c.agent + 1);
    if (c.time != 0.0) os << " t=" << c.time;
    os << "  (" << c.detail << ")\n";
  }
  std::snprintf(buf, sizeof buf,
                "events %zu, min gap %s, tau uniform %.6g, tau asymptotic "
                "%.6g\n",
                report.event_count,
                report.min_gap ? std::to_string(*report.min_gap).c_str()
                               : "n/a",
                report.tau_uniform, report.tau_asymptotic);
  os << buf;
  if (report.delay > 0.0) {
    std::snprintf(buf, sizeof buf,
                  "delay %.6g, epsilon uniform %.6g, epsilon asymptotic "
                  "%.6g\n",
                  report.delay, report.epsilon_uniform,
                  report.epsilon_asymptotic);
    os << buf;
  }
  for (std::size_t i = 0; i < report.stats.size(); ++i) {
    const auto& s = report.stats[i];
    os << "agent " << (i + 1) << ": " << s.count << " events";
    if (s.min_gap) os << ", min gap " << *s.min_gap << ", mean " << *s.mean_gap;
    os << '\n';
  }
  os << (report.all_passed() ? "verdict: PASS\n" : "verdict: FAIL\n");
  return os.str();
}

}  // namespace etcons
