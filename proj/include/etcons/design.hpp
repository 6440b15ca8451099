#pragma once

#include <optional>
#include <string>
#include <vector>

#include "etcons/graph.hpp"
#include "etcons/linalg.hpp"

namespace etcons {

/// Shared agent dynamics x' = A x + B u.
struct LtiDynamics {
  Mat a;
  Mat b;

  LtiDynamics() = default;
  /// Throws std::invalid_argument unless A is square and B has A's rows.
  LtiDynamics(Mat a_matrix, Mat b_matrix);

  Eigen::Index state_dim() const { return a.rows(); }
  Eigen::Index input_dim() const { return b.cols(); }
};

/// [B, AB, ..., A^{n-1}B].
Mat controllability_matrix(const LtiDynamics& dyn);
bool is_controllable(const LtiDynamics& dyn, double rel_tol = 1e-9);

/// 0.1 * (1 + spectral abscissa of A) when A is unstable, 0.1 otherwise.
double default_alpha(const Mat& a);

/// PA + A'P - 2PBB'P + 2 alpha P.
Mat lmi_residual(const LtiDynamics& dyn, const Mat& p, double alpha);
double lmi_margin(const LtiDynamics& dyn, const Mat& p, double alpha);

/// Solves P(A+aI) + (A+aI)'P - 2PBB'P = -eps I, eps = 1e-6 max(‖A‖, 1), from
/// the stable invariant subspace of the Hamiltonian. The result satisfies
/// the design inequality strictly with margin eps.
/// Throws InfeasibleError("stabilizing solution") when the Hamiltonian has
/// eigenvalues on the imaginary axis.
Mat solve_design_inequality(const LtiDynamics& dyn, double alpha);

/// Supremum of alpha > 0 for which the residual of a given P stays negative
/// definite, by bisection. Empty when no alpha > 0 works (or P is not
/// positive definite).
std::optional<double> max_lmi_alpha(const LtiDynamics& dyn, const Mat& p);

/// F = -B'P.
Mat feedback_gain(const Mat& p, const Mat& b);

inline constexpr double kCouplingSafetyFactor = 1.1;

/// c = safety_factor / Re(lambda_2).
double coupling_gain(double lambda2_real,
                     double safety_factor = kCouplingSafetyFactor);

/// (I_{N-1} kron A) + c (J_{2:N} kron BF), of size (N-1)n.
CMat closed_loop_matrix(const LtiDynamics& dyn, const Mat& f, double c,
                        const SpectralDecomposition& spectral);

struct ControllerDesign {
  Mat p;
  double alpha = 0.0;
  Mat f;
  double c = 0.0;
  CMat a_hat;
};

/// ‖exp(A_hat t)‖ <= beta_hat exp(-lambda_hat t).
struct DecayCertificate {
  double beta_hat = 1.0;
  double lambda_hat = 0.0;
};

inline constexpr int kCertificateSamples = 2000;

/// t = 0 followed by samples-1 log-spaced points on [horizon 1e-6, horizon].
std::vector<double> certificate_grid(double horizon, int samples);

/// max over the grid on [0, 50/lambda_hat] of
/// ‖exp(A_hat t)‖ exp(lambda_hat t) / beta_hat; <= 1 means the certificate
/// holds there.
double certificate_violation(const CMat& a_hat, const DecayCertificate& cert,
                             int samples = kCertificateSamples);

/// lambda_hat = 0.9 |abscissa|, beta_hat = 1.05 * grid supremum, re-checked
/// on a 4x finer grid. Throws InfeasibleError("Hurwitz closed loop") when
/// A_hat is not Hurwitz.
DecayCertificate decay_certificate(const CMat& a_hat);

struct DesignCheck {
  std::string name;
  bool passed = false;
  double residual = 0.0;
  std::string detail;
};

struct DesignReport {
  std::vector<DesignCheck> checks;

  bool all_passed() const;
  const DesignCheck* find(const std::string& name) const;
};

/// Evaluates every design invariant and reports its residual. Never throws
/// on a failing invariant.
DesignReport verify_design(const LtiDynamics& dyn,
                           const ControllerDesign& design,
                           double lambda2_real,
                           const std::optional<DecayCertificate>& cert = {});

struct DesignOptions {
  std::optional<double> alpha;
  double c_safety_factor = kCouplingSafetyFactor;
  /// Use a given P (e.g. a known solution) instead of solving.
  std::optional<Mat> p_override;
};

struct DesignArtifact {
  ControllerDesign design;
  std::optional<DecayCertificate> certificate;
  SpectralDecomposition spectral;
  DesignReport report;
};

/// Full controller synthesis. Throws InfeasibleError naming the failed
/// hypothesis for uncontrollable pairs or graphs without a spanning tree;
/// other invariant failures are left in the report.
DesignArtifact synthesize(const LtiDynamics& dyn, const DirectedGraph& graph,
                          const DesignOptions& options = {});

}  // namespace etcons
