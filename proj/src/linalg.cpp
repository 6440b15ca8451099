#include "etcons/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace etcons {
namespace {

constexpr std::array<double, 4> kPade3{120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kPade5{30240.0, 15120.0, 3360.0,
                                       420.0,   30.0,    1.0};
constexpr std::array<double, 8> kPade7{17297280.0, 8648640.0, 1995840.0,
                                       277200.0,   25200.0,   1512.0,
                                       56.0,       1.0};
constexpr std::array<double, 10> kPade9{
    17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
    2162160.0,     110880.0,     3960.0,       90.0,        1.0};
constexpr std::array<double, 14> kPade13{64764752532480000.0,
                                         32382376266240000.0,
                                         7771770303897600.0,
                                         1187353796428800.0,
                                         129060195264000.0,
                                         10559470521600.0,
                                         670442572800.0,
                                         33522128640.0,
                                         1323241920.0,
                                         40840800.0,
                                         960960.0,
                                         16380.0,
                                         182.0,
                                         1.0};

// Backward-error thresholds on the 1-norm for each Padé degree.
constexpr double kTheta3 = 1.495585217958292e-2;
constexpr double kTheta5 = 2.539398330063230e-1;
constexpr double kTheta7 = 9.504178996162932e-1;
constexpr double kTheta9 = 2.097847961257068e0;
constexpr double kTheta13 = 5.371920351148152e0;

template <class M>
double one_norm(const M& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

// Low-degree approximant: U holds the odd part, V the even part.
template <class M, std::size_t K>
M pade_low(const M& a, const std::array<double, K>& b) {
  const auto n = a.rows();
  const M ident = M::Identity(n, n);
  const M a2 = a * a;
  M power = ident;
  M u_inner = M::Zero(n, n);
  M v = M::Zero(n, n);
  for (std::size_t k = 0; k + 1 < K; k += 2) {
    v += b[k] * power;
    u_inner += b[k + 1] * power;
    power = power * a2;
  }
  const M u = a * u_inner;
  return (v - u).partialPivLu().solve(v + u);
}

template <class M>
M pade13(const M& a) {
  const auto& b = kPade13;
  const auto n = a.rows();
  const M ident = M::Identity(n, n);
  const M a2 = a * a;
  const M a4 = a2 * a2;
  const M a6 = a4 * a2;
  const M u =
      a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 +
           b[5] * a4 + b[3] * a2 + b[1] * ident);
  const M v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 +
              b[4] * a4 + b[2] * a2 + b[0] * ident;
  return (v - u).partialPivLu().solve(v + u);
}

template <class M>
M expm_impl(const M& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("expm: matrix must be square");
  }
  if (a.size() == 0) return a;
  if (!a.allFinite()) {
    throw std::invalid_argument("expm: non-finite input");
  }
  const double norm = one_norm(a);
  if (norm <= kTheta3) return pade_low(a, kPade3);
  if (norm <= kTheta5) return pade_low(a, kPade5);
  if (norm <= kTheta7) return pade_low(a, kPade7);
  if (norm <= kTheta9) return pade_low(a, kPade9);
  int squarings = 0;
  if (norm > kTheta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / kTheta13)));
  }
  const M scaled = a / std::ldexp(1.0, squarings);
  M r = pade13(scaled);
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

template <class M>
double spectral_norm_impl(const M& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<M> svd(m);
  return svd.singularValues()(0);
}

template <class M>
M kron_impl(const M& a, const M& b) {
  M out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

// Real Schur form turned into a complex triangular one by rotating each
// 2x2 block (rsf2csf).
SchurForm real_to_complex_schur(const Mat& m) {
  Eigen::RealSchur<Mat> rs(m);
  if (rs.info() != Eigen::Success) {
    throw std::runtime_error("Schur iteration did not converge");
  }
  SchurForm f;
  f.q = rs.matrixU().cast<Complex>();
  f.t = rs.matrixT().cast<Complex>();
  const auto n = f.t.rows();
  for (Eigen::Index k = n - 1; k >= 1; --k) {
    if (f.t(k, k - 1) == Complex(0.0, 0.0)) continue;
    const Complex a = f.t(k - 1, k - 1);
    const Complex b = f.t(k - 1, k);
    const Complex c = f.t(k, k - 1);
    const Complex d = f.t(k, k);
    const Complex mu =
        0.5 * (a + d) + std::sqrt(0.25 * (a - d) * (a - d) + b * c) - d;
    const double r = std::hypot(std::abs(mu), std::abs(c));
    const Complex cs = mu / r;
    const Complex sn = c / r;
    // G = [conj(cs) sn; -sn cs]
    for (Eigen::Index j = k - 1; j < n; ++j) {
      const Complex r0 = f.t(k - 1, j);
      const Complex r1 = f.t(k, j);
      f.t(k - 1, j) = std::conj(cs) * r0 + sn * r1;
      f.t(k, j) = -sn * r0 + cs * r1;
    }
    for (Eigen::Index i = 0; i <= k; ++i) {
      const Complex c0 = f.t(i, k - 1);
      const Complex c1 = f.t(i, k);
      f.t(i, k - 1) = c0 * cs + c1 * std::conj(sn);
      f.t(i, k) = -c0 * sn + c1 * std::conj(cs);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const Complex c0 = f.q(i, k - 1);
      const Complex c1 = f.q(i, k);
      f.q(i, k - 1) = c0 * cs + c1 * std::conj(sn);
      f.q(i, k) = -c0 * sn + c1 * std::conj(cs);
    }
    f.t(k, k - 1) = Complex(0.0, 0.0);
  }
  return f;
}

// Eigen's ComplexSchur keeps real shifts on real input and can stall on a
// complex-conjugate pair, so real input goes through the real Schur form.
SchurForm complex_schur(const CMat& m) {
  SchurForm f;
  if (m.imag().isZero(0.0)) {
    f = real_to_complex_schur(m.real());
  } else {
    Eigen::ComplexSchur<CMat> schur(m);
    if (schur.info() != Eigen::Success) {
      throw std::runtime_error("Schur iteration did not converge");
    }
    f.q = schur.matrixU();
    f.t = schur.matrixT();
  }
  // Strictly lower part is not guaranteed to be exactly zero.
  f.t.triangularView<Eigen::StrictlyLower>().setZero();
  return f;
}

}  // namespace

Mat expm(const Mat& m) { return expm_impl(m); }
CMat expm(const CMat& m) { return expm_impl(m); }

double spectral_norm(const Mat& m) { return spectral_norm_impl(m); }
double spectral_norm(const CMat& m) { return spectral_norm_impl(m); }

double spectral_abscissa(const Mat& m) {
  if (m.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<Mat> es(m, false);
  return es.eigenvalues().real().maxCoeff();
}

double spectral_abscissa(const CMat& m) {
  if (m.size() == 0) return -std::numeric_limits<double>::infinity();
  return complex_schur(m).t.diagonal().real().maxCoeff();
}

Mat kron(const Mat& a, const Mat& b) { return kron_impl(a, b); }
CMat kron(const CMat& a, const CMat& b) { return kron_impl(a, b); }

void swap_schur_diagonal(SchurForm& form, Eigen::Index k) {
  CMat& t = form.t;
  CMat& q = form.q;
  const auto n = t.rows();
  if (k < 0 || k + 1 >= n) {
    throw std::out_of_range("swap_schur_diagonal: index out of range");
  }
  const Complex a = t(k, k);
  const Complex c = t(k + 1, k + 1);
  if (a == c) return;
  // Eigenvector of the 2x2 block for eigenvalue c becomes the leading column.
  const Complex x = t(k, k + 1);
  const Complex y = c - a;
  const double r = std::hypot(std::abs(x), std::abs(y));
  const Complex v0 = x / r;
  const Complex v1 = y / r;

  for (Eigen::Index j = k; j < n; ++j) {
    const Complex r0 = t(k, j);
    const Complex r1 = t(k + 1, j);
    t(k, j) = std::conj(v0) * r0 + std::conj(v1) * r1;
    t(k + 1, j) = -v1 * r0 + v0 * r1;
  }
  for (Eigen::Index i = 0; i <= k + 1; ++i) {
    const Complex c0 = t(i, k);
    const Complex c1 = t(i, k + 1);
    t(i, k) = c0 * v0 + c1 * v1;
    t(i, k + 1) = -c0 * std::conj(v1) + c1 * std::conj(v0);
  }
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Complex c0 = q(i, k);
    const Complex c1 = q(i, k + 1);
    q(i, k) = c0 * v0 + c1 * v1;
    q(i, k + 1) = -c0 * std::conj(v1) + c1 * std::conj(v0);
  }
  t(k + 1, k) = Complex(0.0, 0.0);
  t(k, k) = c;
  t(k + 1, k + 1) = a;
}

SchurForm ordered_schur(const CMat& m,
                        const std::function<bool(Complex)>& select) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("ordered_schur: matrix must be square");
  }
  SchurForm form;
  if (m.size() == 0) {
    form.q = m;
    form.t = m;
    return form;
  }
  form = complex_schur(m);

  Eigen::Index filled = 0;
  for (Eigen::Index j = 0; j < form.t.rows(); ++j) {
    if (!select(form.t(j, j))) continue;
    for (Eigen::Index k = j; k > filled; --k) swap_schur_diagonal(form, k - 1);
    ++filled;
  }
  return form;
}

Eigen::Index numerical_rank(const Mat& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  const double cutoff = rel_tol * s(0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) ++rank;
  }
  return rank;
}

}  // namespace etcons
