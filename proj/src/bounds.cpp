#include "etcons/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "etcons/error.hpp"

namespace etcons {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_ratio_bound(double numerator_gap, double denominator,
                       const BoundConstants& c) {
  return std::log1p(numerator_gap / denominator) / (c.a_norm + c.lambda_hat);
}

}  // namespace

TriggerParams reduce_agent_params(const std::vector<double>& betas,
                                  const std::vector<double>& lambdas,
                                  double gamma) {
  if (betas.empty() || lambdas.empty()) {
    throw std::invalid_argument("reduce_agent_params: empty parameter list");
  }
  TriggerParams p;
  p.beta = *std::max_element(betas.begin(), betas.end());
  p.lambda = *std::min_element(lambdas.begin(), lambdas.end());
  p.gamma = gamma;
  return p;
}

double threshold(const TriggerParams& params, double t) {
  if (t < 0.0) throw std::invalid_argument("threshold: negative time");
  return params.beta * std::exp(-params.lambda * t);
}

FamilyConstants family_constants(const BoundConstants& c, double amplitude) {
  const double sqrt_n = std::sqrt(static_cast<double>(c.n_agents));
  const double forced = sqrt_n * amplitude * c.beta_hat * c.b_hat_norm /
                        (c.lambda_hat - c.params.lambda);
  FamilyConstants f;
  f.first = c.theta_hat * (c.beta_hat * c.x_hat_0 - forced);
  f.second = c.theta_hat * forced + c.l_norm * sqrt_n * amplitude;
  return f;
}

CVec transformed_tail(const SpectralDecomposition& spectral,
                      const Vec& stacked_state, Eigen::Index state_dim) {
  const auto n_agents = static_cast<Eigen::Index>(spectral.n_agents());
  if (stacked_state.size() != n_agents * state_dim) {
    throw std::invalid_argument("transformed_tail: state has wrong size");
  }
  const Eigen::Map<const Mat> agents(stacked_state.data(), state_dim,
                                     n_agents);
  const CMat hat = agents.cast<Complex>() * spectral.s_left_inverse().transpose();
  const CMat tail = hat.rightCols(n_agents - 1);
  return Eigen::Map<const CVec>(tail.data(), tail.size());
}

CMat theta_matrix(const SpectralDecomposition& spectral) {
  const auto n = spectral.l_reduced.cols();
  return spectral.s_left * spectral.l_reduced.rightCols(n - 1);
}

CMat delta_matrix(const SpectralDecomposition& spectral) {
  const auto n = spectral.l_reduced.rows();
  return spectral.l_reduced.bottomRows(n - 1) * spectral.s_left_inverse();
}

BoundConstants bound_constants(const LtiDynamics& dyn,
                               const ControllerDesign& design,
                               const DecayCertificate& cert,
                               const SpectralDecomposition& spectral,
                               const TriggerParams& params, const Vec& x0) {
  if (!(params.lambda > 0.0) || !(params.lambda < cert.lambda_hat)) {
    throw std::invalid_argument(
        "bound_constants: need 0 < lambda < lambda_hat (lambda = " +
        std::to_string(params.lambda) +
        ", lambda_hat = " + std::to_string(cert.lambda_hat) + ")");
  }
  if (params.beta < 0.0) {
    throw std::invalid_argument("bound_constants: beta must be >= 0");
  }
  if (spectral.n_agents() < 2) {
    throw std::invalid_argument("bound_constants: need at least two agents");
  }
  const Mat bf = dyn.b * design.f;
  BoundConstants c;
  c.n_agents = spectral.n_agents();
  c.params = params;
  c.beta_hat = cert.beta_hat;
  c.lambda_hat = cert.lambda_hat;
  c.theta_hat = spectral_norm(theta_matrix(spectral));
  c.b_hat_norm = spectral_norm(
      CMat(design.c * kron(delta_matrix(spectral), CMat(bf.cast<Complex>()))));
  c.x_hat_0 = transformed_tail(spectral, x0, dyn.state_dim()).norm();
  c.cbf_norm = spectral_norm(Mat(design.c * bf));
  c.l_norm = spectral_norm(spectral.laplacian);
  c.a_norm = spectral_norm(dyn.a);

  const FamilyConstants k = family_constants(c, params.beta);
  c.k1 = k.first;
  c.k2 = k.second;
  const FamilyConstants h = family_constants(c, params.gamma);
  c.h1 = h.first;
  c.h2 = h.second;
  if (c.k1 < 0.0) {
    c.diagnostics.push_back(
        "K1 < 0 (small initial disagreement); |K1| used in K3");
  }
  if (params.gamma > 0.0 && c.h1 < 0.0) {
    c.diagnostics.push_back("H1 < 0; |H1| used in H3");
  }
  return c;
}

double family_k3(const BoundConstants& c, const FamilyConstants& fam,
                 double t_k) {
  if (t_k < 0.0) throw std::invalid_argument("k3: negative event time");
  return c.cbf_norm *
         (std::abs(fam.first) *
              std::exp((c.params.lambda - c.lambda_hat) * t_k) /
              (c.a_norm + c.lambda_hat) +
          fam.second / (c.a_norm + c.params.lambda));
}

double family_k3_signed(const BoundConstants& c, const FamilyConstants& fam,
                        double t_k) {
  if (t_k < 0.0) throw std::invalid_argument("k3: negative event time");
  return c.cbf_norm *
         (fam.first * std::exp((c.params.lambda - c.lambda_hat) * t_k) /
              (c.a_norm + c.lambda_hat) +
          fam.second / (c.a_norm + c.params.lambda));
}

double k3(const BoundConstants& c, double t_k) {
  return family_k3(c, {c.k1, c.k2}, t_k);
}

double h3(const BoundConstants& c, double t_k) {
  return family_k3(c, {c.h1, c.h2}, t_k);
}

double k3_asymptote(const BoundConstants& c) {
  return c.cbf_norm * c.k2 / (c.a_norm + c.params.lambda);
}

double h3_asymptote(const BoundConstants& c) {
  return c.cbf_norm * c.h2 / (c.a_norm + c.params.lambda);
}

double tau_bound(double k3_value, const BoundConstants& c) {
  if (!(k3_value > 0.0)) {
    throw BoundDegeneracy("tau_bound: K3 = " + std::to_string(k3_value) +
                          " is not positive");
  }
  return log_ratio_bound(c.params.beta, k3_value, c);
}

double epsilon_bound(double h3_value, const BoundConstants& c) {
  if (!(c.params.gamma > c.params.beta)) {
    throw std::invalid_argument("epsilon_bound: need gamma > beta");
  }
  if (!(h3_value > 0.0)) {
    throw BoundDegeneracy("epsilon_bound: H3 = " + std::to_string(h3_value) +
                          " is not positive");
  }
  return log_ratio_bound(c.params.gamma - c.params.beta,
                         c.params.beta + h3_value, c);
}

double delayed_tau_bound(double h3_value, const BoundConstants& c) {
  return tau_bound(h3_value, c);
}

double disagreement_envelope(const BoundConstants& c, double t,
                             bool delayed) {
  const double lambda = c.params.lambda;
  if (!(lambda > 0.0) || !(lambda < c.lambda_hat)) {
    throw std::invalid_argument(
        "disagreement_envelope: need 0 < lambda < lambda_hat");
  }
  const double amp = delayed ? c.params.gamma : c.params.beta;
  const double sqrt_n = std::sqrt(static_cast<double>(c.n_agents));
  return c.beta_hat * c.x_hat_0 * std::exp(-c.lambda_hat * t) +
         sqrt_n * amp * c.beta_hat * c.b_hat_norm / (c.lambda_hat - lambda) *
             (std::exp(-lambda * t) - std::exp(-c.lambda_hat * t));
}

BoundsReport bounds_report(const BoundConstants& c) {
  BoundsReport r;
  r.constants = c;
  r.k3_at_zero = k3(c, 0.0);
  r.k3_limit = k3_asymptote(c);
  r.tau_uniform = tau_bound(r.k3_at_zero, c);
  r.tau_asymptotic = tau_bound(r.k3_limit, c);
  const double k3_signed = family_k3_signed(c, {c.k1, c.k2}, 0.0);
  r.tau_uniform_signed = k3_signed > 0.0 ? tau_bound(k3_signed, c) : kNaN;

  const bool delayed = c.params.gamma > c.params.beta;
  if (delayed) {
    r.h3_at_zero = h3(c, 0.0);
    r.h3_limit = h3_asymptote(c);
    r.delayed_tau_uniform = delayed_tau_bound(r.h3_at_zero, c);
    r.delayed_tau_asymptotic = delayed_tau_bound(r.h3_limit, c);
    r.epsilon_uniform = epsilon_bound(r.h3_at_zero, c);
    r.epsilon_asymptotic = epsilon_bound(r.h3_limit, c);
    const double h3_signed = family_k3_signed(c, {c.h1, c.h2}, 0.0);
    r.delayed_tau_uniform_signed =
        h3_signed > 0.0 ? delayed_tau_bound(h3_signed, c) : kNaN;
    r.epsilon_uniform_signed =
        h3_signed > 0.0 ? epsilon_bound(h3_signed, c) : kNaN;
  } else {
    r.h3_at_zero = r.h3_limit = kNaN;
    r.delayed_tau_uniform = r.delayed_tau_asymptotic = kNaN;
    r.epsilon_uniform = r.epsilon_asymptotic = kNaN;
    r.delayed_tau_uniform_signed = r.epsilon_uniform_signed = kNaN;
  }
  return r;
}

std::vector<BoundsGridRow> bounds_grid(const BoundConstants& c, double t_max,
                                       int points) {
  if (!(t_max > 1e-3) || points < 2) {
    throw std::invalid_argument("bounds_grid: bad range");
  }
  const bool delayed = c.params.gamma > c.params.beta;
  std::vector<BoundsGridRow> rows;
  rows.reserve(static_cast<std::size_t>(points) + 1);
  auto add = [&](double t) {
    BoundsGridRow row{};
    row.t_k = t;
    row.k3 = k3(c, t);
    row.tau = tau_bound(row.k3, c);
    if (delayed) {
      row.h3 = h3(c, t);
      row.delayed_tau = delayed_tau_bound(row.h3, c);
      row.epsilon = epsilon_bound(row.h3, c);
    } else {
      row.h3 = row.delayed_tau = row.epsilon = kNaN;
    }
    rows.push_back(row);
  };
  add(0.0);
  const double lo = std::log10(1e-3);
  const double hi = std::log10(t_max);
  for (int k = 0; k < points; ++k) {
    add(std::pow(10.0, lo + (hi - lo) * k / (points - 1)));
  }
  return rows;
}

}  // namespace etcons
