#include "etcons/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

#include "etcons/error.hpp"

namespace etcons {
namespace {

double max_sym_eigenvalue(const Mat& m) {
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double min_sym_eigenvalue(const Mat& m) {
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double sup_ratio(const CMat& a_hat, double lambda_hat,
                 const std::vector<double>& grid) {
  double sup = 0.0;
  for (const double t : grid) {
    const double value =
        spectral_norm(expm(CMat(a_hat * t))) * std::exp(lambda_hat * t);
    sup = std::max(sup, value);
  }
  return sup;
}

}  // namespace

LtiDynamics::LtiDynamics(Mat a_matrix, Mat b_matrix)
    : a(std::move(a_matrix)), b(std::move(b_matrix)) {
  if (a.rows() == 0 || a.rows() != a.cols()) {
    throw std::invalid_argument("LtiDynamics: A must be square and nonempty");
  }
  if (b.rows() != a.rows() || b.cols() == 0) {
    throw std::invalid_argument(
        "LtiDynamics: B must have as many rows as A and at least one column");
  }
}

Mat controllability_matrix(const LtiDynamics& dyn) {
  const auto n = dyn.state_dim();
  const auto m = dyn.input_dim();
  Mat c(n, n * m);
  Mat block = dyn.b;
  for (Eigen::Index k = 0; k < n; ++k) {
    c.middleCols(k * m, m) = block;
    block = dyn.a * block;
  }
  return c;
}

bool is_controllable(const LtiDynamics& dyn, double rel_tol) {
  const Mat c = controllability_matrix(dyn);
  if (c.isZero(0.0)) return false;
  return numerical_rank(c, rel_tol) == dyn.state_dim();
}

double default_alpha(const Mat& a) {
  const double abscissa = spectral_abscissa(a);
  return abscissa > 0.0 ? 0.1 * (1.0 + abscissa) : 0.1;
}

Mat lmi_residual(const LtiDynamics& dyn, const Mat& p, double alpha) {
  const Mat pb = p * dyn.b;
  return p * dyn.a + dyn.a.transpose() * p - 2.0 * pb * pb.transpose() +
         2.0 * alpha * p;
}

double lmi_margin(const LtiDynamics& dyn, const Mat& p, double alpha) {
  return max_sym_eigenvalue(lmi_residual(dyn, p, alpha));
}

Mat solve_design_inequality(const LtiDynamics& dyn, double alpha) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("solve_design_inequality: alpha must be > 0");
  }
  const auto n = dyn.state_dim();
  const Mat ident = Mat::Identity(n, n);
  const Mat shifted = dyn.a + alpha * ident;
  const double eps = 1e-6 * std::max(spectral_norm(dyn.a), 1.0);

  Mat ham(2 * n, 2 * n);
  ham.topLeftCorner(n, n) = shifted;
  ham.topRightCorner(n, n) = -2.0 * dyn.b * dyn.b.transpose();
  ham.bottomLeftCorner(n, n) = -eps * ident;
  ham.bottomRightCorner(n, n) = -shifted.transpose();

  const double axis_tol = 1e-9 * std::max(spectral_norm(ham), 1.0);
  SchurForm form = ordered_schur(ham.cast<Complex>(),
                                 [](Complex z) { return z.real() < 0.0; });
  Eigen::Index stable = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    const double re = form.t(i, i).real();
    if (std::abs(re) <= axis_tol) {
      throw InfeasibleError(
          "stabilizing solution",
          "Hamiltonian has an eigenvalue on the imaginary axis; alpha too "
          "large or (A, B) not stabilizable");
    }
    if (re < 0.0) ++stable;
  }
  if (stable != n) {
    throw InfeasibleError("stabilizing solution",
                          "Hamiltonian stable subspace has wrong dimension");
  }

  const CMat u1 = form.q.topLeftCorner(n, n);
  const CMat u2 = form.q.bottomLeftCorner(n, n);
  Eigen::FullPivLU<CMat> lu(u1);
  if (!lu.isInvertible()) {
    throw InfeasibleError("stabilizing solution",
                          "stable invariant subspace is not a graph over x");
  }
  const CMat pc = u2 * lu.inverse();
  if (pc.imag().norm() > 1e-8 * std::max(pc.real().norm(), 1.0)) {
    throw InfeasibleError("stabilizing solution",
                          "Riccati solution is not real");
  }
  Mat p = pc.real();
  p = 0.5 * (p + p.transpose()).eval();
  if (!(min_sym_eigenvalue(p) > 0.0)) {
    throw InfeasibleError("stabilizing solution",
                          "Riccati solution is not positive definite");
  }
  return p;
}

std::optional<double> max_lmi_alpha(const LtiDynamics& dyn, const Mat& p) {
  if (p.rows() != dyn.state_dim() || p.cols() != dyn.state_dim()) {
    throw std::invalid_argument("max_lmi_alpha: P has wrong dimensions");
  }
  if (!(min_sym_eigenvalue(p) > 0.0)) return std::nullopt;
  if (!(lmi_margin(dyn, p, 0.0) < 0.0)) return std::nullopt;
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < 64 && lmi_margin(dyn, p, hi) < 0.0; ++i) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (lmi_margin(dyn, p, mid) < 0.0 ? lo : hi) = mid;
  }
  if (lo == 0.0) return std::nullopt;
  return lo;
}

Mat feedback_gain(const Mat& p, const Mat& b) {
  if (p.rows() != p.cols() || b.rows() != p.rows()) {
    throw std::invalid_argument("feedback_gain: dimension mismatch");
  }
  return -b.transpose() * p;
}

double coupling_gain(double lambda2_real, double safety_factor) {
  if (!(lambda2_real > 0.0) || !std::isfinite(lambda2_real)) {
    throw std::invalid_argument(
        "coupling_gain: Re(lambda_2) must be positive and finite");
  }
  if (!(safety_factor >= 1.0)) {
    throw std::invalid_argument("coupling_gain: safety factor must be >= 1");
  }
  return safety_factor / lambda2_real;
}

CMat closed_loop_matrix(const LtiDynamics& dyn, const Mat& f, double c,
                        const SpectralDecomposition& spectral) {
  if (f.rows() != dyn.input_dim() || f.cols() != dyn.state_dim()) {
    throw std::invalid_argument("closed_loop_matrix: F has wrong dimensions");
  }
  const auto reduced = static_cast<Eigen::Index>(spectral.n_agents()) - 1;
  const CMat bf = (dyn.b * f).cast<Complex>();
  const CMat a = dyn.a.cast<Complex>();
  return kron(CMat(CMat::Identity(reduced, reduced)), a) +
         c * kron(spectral.stabilized_block(), bf);
}

std::vector<double> certificate_grid(double horizon, int samples) {
  if (!(horizon > 0.0) || samples < 2) {
    throw std::invalid_argument("certificate_grid: bad horizon or count");
  }
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(samples));
  grid.push_back(0.0);
  const int log_points = samples - 1;
  for (int k = 0; k < log_points; ++k) {
    const double frac =
        log_points == 1 ? 1.0 : static_cast<double>(k) / (log_points - 1);
    grid.push_back(horizon * std::pow(10.0, -6.0 + 6.0 * frac));
  }
  return grid;
}

double certificate_violation(const CMat& a_hat, const DecayCertificate& cert,
                             int samples) {
  const auto grid = certificate_grid(50.0 / cert.lambda_hat, samples);
  return sup_ratio(a_hat, cert.lambda_hat, grid) / cert.beta_hat;
}

DecayCertificate decay_certificate(const CMat& a_hat) {
  if (a_hat.rows() == 0 || a_hat.rows() != a_hat.cols()) {
    throw std::invalid_argument("decay_certificate: need a nonempty square "
                                "matrix");
  }
  const double abscissa = spectral_abscissa(a_hat);
  if (!(abscissa < 0.0)) {
    throw InfeasibleError("Hurwitz closed loop",
                          "closed-loop matrix is not Hurwitz (abscissa " +
                              std::to_string(abscissa) + ")");
  }
  DecayCertificate cert;
  cert.lambda_hat = 0.9 * std::abs(abscissa);
  const double horizon = 50.0 / cert.lambda_hat;
  const double coarse = sup_ratio(
      a_hat, cert.lambda_hat, certificate_grid(horizon, kCertificateSamples));
  cert.beta_hat = 1.05 * coarse;
  const double fine =
      sup_ratio(a_hat, cert.lambda_hat,
                certificate_grid(horizon, 4 * kCertificateSamples));
  if (fine > cert.beta_hat) cert.beta_hat = 1.05 * fine;
  return cert;
}

bool DesignReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const DesignCheck& c) { return c.passed; });
}

const DesignCheck* DesignReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

DesignReport verify_design(const LtiDynamics& dyn,
                           const ControllerDesign& design, double lambda2_real,
                           const std::optional<DecayCertificate>& cert) {
  DesignReport report;
  auto add = [&report](std::string name, bool passed, double residual,
                       std::string detail) {
    report.checks.push_back(
        {std::move(name), passed, residual, std::move(detail)});
  };
  const Mat& p = design.p;
  const auto n = dyn.state_dim();

  const Mat ctrb = controllability_matrix(dyn);
  const auto rank = ctrb.isZero(0.0) ? 0 : numerical_rank(ctrb, 1e-9);
  add("controllability", rank == n, static_cast<double>(n - rank),
      "rank " + std::to_string(rank) + " of " + std::to_string(n));

  if (p.rows() != n || p.cols() != n) {
    add("P dimensions", false, 0.0, "P is not n x n");
    return report;
  }
  const double asym = (p - p.transpose()).cwiseAbs().maxCoeff();
  add("P symmetric", asym <= 1e-12 * std::max(p.norm(), 1.0), asym,
      "max |P - P'|");
  const double min_eig = min_sym_eigenvalue(p);
  add("P positive definite", min_eig > 0.0, min_eig, "min eig(P)");
  const double margin = lmi_margin(dyn, p, design.alpha);
  add("design inequality", margin < 0.0, margin,
      "max eig(PA + A'P - 2PBB'P + 2 alpha P), alpha = " +
          std::to_string(design.alpha));

  if (design.f.rows() == dyn.input_dim() && design.f.cols() == n) {
    const double gap = (design.f + dyn.b.transpose() * p).cwiseAbs().maxCoeff();
    add("F = -B'P", gap == 0.0, gap, "max |F + B'P|");
  } else {
    add("F = -B'P", false, 0.0, "F has wrong dimensions");
  }

  const double c_gap = design.c - 1.0 / lambda2_real;
  add("coupling gain", c_gap >= 0.0 && design.c > 0.0, c_gap,
      "c - 1/Re(lambda_2)");

  if (design.a_hat.size() > 0) {
    const double abscissa = spectral_abscissa(design.a_hat);
    add("A_hat Hurwitz", abscissa < 0.0, abscissa, "max Re eig(A_hat)");
  }
  if (cert) {
    const double violation = certificate_violation(design.a_hat, *cert);
    add("decay certificate", violation <= 1.0, violation,
        "max ‖exp(A_hat t)‖ e^{lambda_hat t} / beta_hat on the grid");
  }
  return report;
}

DesignArtifact synthesize(const LtiDynamics& dyn, const DirectedGraph& graph,
                          const DesignOptions& options) {
  if (!is_controllable(dyn)) {
    throw InfeasibleError("controllability",
                          "the pair (A, B) is not controllable");
  }
  if (!has_spanning_tree(graph)) {
    throw InfeasibleError("spanning tree",
                          "the communication graph has no directed spanning "
                          "tree");
  }
  if (graph.n_agents() < 2) {
    throw std::invalid_argument("synthesize: need at least two agents");
  }
  DesignArtifact out;
  out.spectral = spectral_transform(laplacian(graph));

  ControllerDesign& d = out.design;
  if (options.p_override) {
    d.p = *options.p_override;
    if (options.alpha) {
      d.alpha = *options.alpha;
    } else {
      const auto sup = max_lmi_alpha(dyn, d.p);
      if (!sup) {
        throw InfeasibleError("design inequality",
                              "given P satisfies the design inequality for "
                              "no alpha > 0");
      }
      d.alpha = 0.5 * *sup;
    }
  } else {
    d.alpha = options.alpha.value_or(default_alpha(dyn.a));
    d.p = solve_design_inequality(dyn, d.alpha);
  }
  d.f = feedback_gain(d.p, dyn.b);
  d.c = coupling_gain(out.spectral.lambda2_real, options.c_safety_factor);
  d.a_hat = closed_loop_matrix(dyn, d.f, d.c, out.spectral);

  if (spectral_abscissa(d.a_hat) < 0.0) {
    out.certificate = decay_certificate(d.a_hat);
  }
  out.report = verify_design(dyn, d, out.spectral.lambda2_real,
                             out.certificate);
  const double recon = out.spectral.reconstruction_error();
  out.report.checks.push_back({"spectral reconstruction", recon <= 1e-10,
                               recon, "‖S L_J S^-1 - L‖ / ‖L‖"});
  return out;
}

}  // namespace etcons
