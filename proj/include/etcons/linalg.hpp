#pragma once

#include <complex>
#include <functional>

#include <Eigen/Dense>

namespace etcons {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// Matrix exponential by scaling and squaring with a degree 3..13 Padé
/// approximant (Higham 2005). Works for real and complex dense matrices.
Mat expm(const Mat& m);
CMat expm(const CMat& m);

/// Largest singular value (induced 2-norm). Zero for empty matrices.
double spectral_norm(const Mat& m);
double spectral_norm(const CMat& m);

/// max Re(eig(m)); -inf for an empty matrix.
double spectral_abscissa(const Mat& m);
double spectral_abscissa(const CMat& m);

Mat kron(const Mat& a, const Mat& b);
CMat kron(const CMat& a, const CMat& b);

/// Unitary similarity m = q * t * q^H with t upper triangular.
struct SchurForm {
  CMat q;
  CMat t;
};

/// Complex Schur form with every eigenvalue satisfying `select` moved to the
/// leading diagonal positions; relative order inside each group is kept.
SchurForm ordered_schur(const CMat& m,
                        const std::function<bool(Complex)>& select);

/// Swap the adjacent diagonal entries k and k+1 of an upper-triangular t,
/// updating q so that q * t * q^H is unchanged.
void swap_schur_diagonal(SchurForm& form, Eigen::Index k);

/// Numerical rank with singular values above rel_tol * sigma_max.
Eigen::Index numerical_rank(const Mat& m, double rel_tol);

}  // namespace etcons
