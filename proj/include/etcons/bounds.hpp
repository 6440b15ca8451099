#pragma once

#include <string>
#include <vector>

#include "etcons/design.hpp"
#include "etcons/graph.hpp"
#include "etcons/linalg.hpp"

namespace etcons {

/// Trigger threshold beta e^{-lambda t} and, for delayed runs, the envelope
/// amplitude gamma of the delayed errors.
struct TriggerParams {
  double beta = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
};

/// Reduction for per-agent thresholds: beta = max_i beta_i,
/// lambda = min_i lambda_i.
TriggerParams reduce_agent_params(const std::vector<double>& betas,
                                  const std::vector<double>& lambdas,
                                  double gamma);

/// beta e^{-lambda t}. Throws std::invalid_argument for t < 0.
double threshold(const TriggerParams& params, double t);

/// Everything the guarantee formulas consume. The K and H families differ
/// only in the amplitude (beta vs gamma) and share one code path.
struct BoundConstants {
  std::size_t n_agents = 0;
  double theta_hat = 0.0;   // ‖Theta‖, Theta = S_L L_J(:, 2:N)
  double b_hat_norm = 0.0;  // ‖c Delta kron BF‖
  double x_hat_0 = 0.0;     // ‖x_hat_{2:N}(0)‖
  double cbf_norm = 0.0;
  double l_norm = 0.0;
  double a_norm = 0.0;
  double beta_hat = 0.0;
  double lambda_hat = 0.0;
  TriggerParams params;
  double k1 = 0.0;
  double k2 = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  std::vector<std::string> diagnostics;
};

struct FamilyConstants {
  double first = 0.0;   // K1 / H1
  double second = 0.0;  // K2 / H2
};

/// The K-family display evaluated with the given amplitude; K for beta, H
/// for gamma.
FamilyConstants family_constants(const BoundConstants& c, double amplitude);

/// x_hat = (S_L^{-1} kron I_n) x, returns the trailing (N-1)n block.
CVec transformed_tail(const SpectralDecomposition& spectral,
                      const Vec& stacked_state, Eigen::Index state_dim);

/// Theta = S_L L_J(:, 2:N); Delta = L_J(2:N, :) S_L^{-1}.
CMat theta_matrix(const SpectralDecomposition& spectral);
CMat delta_matrix(const SpectralDecomposition& spectral);

/// Throws std::invalid_argument unless 0 < lambda < lambda_hat and the
/// dimensions agree.
BoundConstants bound_constants(const LtiDynamics& dyn,
                               const ControllerDesign& design,
                               const DecayCertificate& cert,
                               const SpectralDecomposition& spectral,
                               const TriggerParams& params, const Vec& x0);

/// ‖cBF‖ (|first| e^{(lambda - lambda_hat) t_k} / (‖A‖ + lambda_hat)
///        + second / (‖A‖ + lambda)).
/// The |first| substitution keeps the bound conservative when K1 < 0.
double family_k3(const BoundConstants& c, const FamilyConstants& fam,
                 double t_k);
/// Same with the signed first constant.
double family_k3_signed(const BoundConstants& c, const FamilyConstants& fam,
                        double t_k);

double k3(const BoundConstants& c, double t_k);
double h3(const BoundConstants& c, double t_k);
double k3_asymptote(const BoundConstants& c);
double h3_asymptote(const BoundConstants& c);

/// ln(1 + beta/K3) / (‖A‖ + lambda_hat). Throws BoundDegeneracy for K3 <= 0.
double tau_bound(double k3_value, const BoundConstants& c);
/// ln((gamma + H3)/(beta + H3)) / (‖A‖ + lambda_hat). Throws
/// std::invalid_argument when gamma <= beta, BoundDegeneracy for H3 <= 0.
double epsilon_bound(double h3_value, const BoundConstants& c);
/// ln(1 + beta/H3) / (‖A‖ + lambda_hat).
double delayed_tau_bound(double h3_value, const BoundConstants& c);

/// beta_hat x0 e^{-lambda_hat t}
///   + sqrt(N) amp beta_hat ‖B_hat‖ / (lambda_hat - lambda)
///     (e^{-lambda t} - e^{-lambda_hat t}),
/// amp = gamma when delayed, beta otherwise.
double disagreement_envelope(const BoundConstants& c, double t, bool delayed);

/// Summary of every guarantee. "uniform" values are the worst case over
/// t_k >= 0 (t_k = 0 since the |K1| form is nonincreasing); "asymptotic"
/// values are the t_k -> infinity limits.
struct BoundsReport {
  BoundConstants constants;
  double k3_at_zero = 0.0;
  double h3_at_zero = 0.0;
  double k3_limit = 0.0;
  double h3_limit = 0.0;
  double tau_uniform = 0.0;
  double tau_asymptotic = 0.0;
  double delayed_tau_uniform = 0.0;
  double delayed_tau_asymptotic = 0.0;
  double epsilon_uniform = 0.0;
  double epsilon_asymptotic = 0.0;
  /// Signed-K1 variants at t_k = 0; NaN when the bound degenerates.
  double tau_uniform_signed = 0.0;
  double delayed_tau_uniform_signed = 0.0;
  double epsilon_uniform_signed = 0.0;
};

BoundsReport bounds_report(const BoundConstants& c);

struct BoundsGridRow {
  double t_k;
  double k3;
  double h3;
  double tau;
  double delayed_tau;
  double epsilon;
};

/// t_k = 0 followed by `points` log-spaced values on [1e-3, t_max].
std::vector<BoundsGridRow> bounds_grid(const BoundConstants& c,
                                       double t_max = 100.0,
                                       int points = 200);

}  // namespace etcons
