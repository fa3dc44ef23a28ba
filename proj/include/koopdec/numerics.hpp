#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "koopdec/error.hpp"

namespace koopdec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace numerics {

/// Stability margin for the infinite-horizon Gramian sums.
inline constexpr double kDefaultStabilityMargin = 1e-6;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
    detail::require(m.allFinite(), "non_finite", what + " contains NaN or Inf");
}

inline std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// ||a - b||_F / max(||b||_F, tiny)
inline double relative_difference(const Matrix& a, const Matrix& b) {
    const double denom = std::max(b.norm(), 1e-300);
    return (a - b).norm() / denom;
}

/// Largest eigenvalue modulus. Eigen's real EigenSolver performs the
/// Hessenberg reduction followed by shifted (Francis) QR sweeps.
inline double spectral_radius(const Matrix& a) {
    detail::require(a.rows() == a.cols() && a.rows() >= 1, "dimension_mismatch",
                    "spectral_radius needs a non-empty square matrix, got " + shape(a));
    require_finite(a, "spectral_radius input");
    if (a.rows() == 1) return std::abs(a(0, 0));
    Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        detail::fail("internal", "QR iteration did not converge (||A||_F = " +
                                     std::to_string(a.norm()) + ")");
    }
    double rho = 0.0;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
        rho = std::max(rho, std::abs(solver.eigenvalues()[i]));
    }
    return rho;
}

/// Moore-Penrose pseudo-inverse; singular values below tol_rel * sigma_max are
/// treated as zero.
inline Matrix pseudo_inverse(const Matrix& a, double tol_rel = 1e-12) {
    require_finite(a, "pseudo_inverse input");
    detail::require(tol_rel > 0.0, "invalid_argument", "pseudo_inverse tolerance must be positive");
    if (a.size() == 0) return Matrix::Zero(a.cols(), a.rows());
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double cutoff = tol_rel * (s.size() > 0 ? s(0) : 0.0);
    Vector inv_s = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff && s(i) > 0.0) inv_s(i) = 1.0 / s(i);
    }
    return svd.matrixV() * inv_s.asDiagonal() * svd.matrixU().transpose();
}

struct LeastSquaresResult {
    Matrix solution;
    /// Set when ridge == 0 and the regressors lack full row rank; `solution`
    /// is then the minimum-norm solution.
    bool rank_deficient = false;
};

/// Minimizes ||targets - X * regressors||_F^2 + ridge * ||X||_F^2 over X.
/// Snapshots are columns: targets is p x N, regressors is q x N.
inline LeastSquaresResult solve_least_squares(const Matrix& targets, const Matrix& regressors,
                                              double ridge) {
    detail::require(targets.cols() == regressors.cols(), "dimension_mismatch",
                    "least squares: targets " + shape(targets) + " vs regressors " +
                        shape(regressors));
    detail::require(regressors.cols() >= 1, "dimension_mismatch",
                    "least squares needs at least one snapshot");
    detail::require(ridge >= 0.0 && std::isfinite(ridge), "invalid_argument",
                    "ridge must be a finite nonnegative number");
    require_finite(targets, "least squares targets");
    require_finite(regressors, "least squares regressors");

    const Eigen::Index q = regressors.rows();
    const Eigen::Index n = regressors.cols();
    LeastSquaresResult out;

    if (ridge > 0.0) {
        // Augmented system [R^T; sqrt(ridge) I] X^T = [T^T; 0] keeps the
        // conditioning of R rather than squaring it.
        Matrix lhs(n + q, q);
        lhs.topRows(n) = regressors.transpose();
        lhs.bottomRows(q) = std::sqrt(ridge) * Matrix::Identity(q, q);
        Matrix rhs = Matrix::Zero(n + q, targets.rows());
        rhs.topRows(n) = targets.transpose();
        Eigen::ColPivHouseholderQR<Matrix> qr(lhs);
        out.solution = qr.solve(rhs).transpose();
        return out;
    }

    Matrix rt = regressors.transpose();
    Eigen::ColPivHouseholderQR<Matrix> qr(rt);
    qr.setThreshold(1e-12);
    if (qr.rank() < q) {
        out.rank_deficient = true;
        out.solution = targets * pseudo_inverse(regressors, 1e-12);
        return out;
    }
    out.solution = qr.solve(targets.transpose()).transpose();
    return out;
}

/// Solves X = A X A^T + Q by squared-Smith doubling:
///   X_{k+1} = X_k + A_k X_k A_k^T,  A_{k+1} = A_k^2,
/// so after k rounds X_k holds the first 2^k terms of sum_t A^t Q (A^T)^t.
inline Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& q,
                                      double stability_margin = kDefaultStabilityMargin) {
    detail::require(a.rows() == a.cols(), "dimension_mismatch",
                    "lyapunov: A must be square, got " + shape(a));
    detail::require(q.rows() == a.rows() && q.cols() == a.cols(), "dimension_mismatch",
                    "lyapunov: Q " + shape(q) + " does not match A " + shape(a));
    require_finite(q, "lyapunov Q");
    const double rho = spectral_radius(a);
    if (rho >= 1.0 - stability_margin) {
        detail::fail("unstable_lifted_dynamics",
                     "unstable lifted dynamics (spectral radius " + std::to_string(rho) +
                         "); use finite-horizon Gramian");
    }

    Matrix x = 0.5 * (q + q.transpose());
    Matrix ak = a;
    constexpr int kMaxRounds = 80;
    for (int round = 0; round < kMaxRounds; ++round) {
        Matrix increment = ak * x * ak.transpose();
        x += increment;
        const double inc = increment.norm();
        if (inc <= 1e-18 * std::max(1.0, x.norm())) break;
        ak = ak * ak;
        if (!ak.allFinite()) detail::fail("internal", "Smith doubling overflowed");
    }
    x = 0.5 * (x + x.transpose());

    // A few fixed-point sweeps polish the round-off left by the doubling.
    for (int sweep = 0; sweep < 4; ++sweep) {
        const double residual = (a * x * a.transpose() + q - x).norm();
        if (residual <= 1e-12 * std::max(1.0, x.norm())) break;
        x = a * x * a.transpose() + q;
        x = 0.5 * (x + x.transpose());
    }
    return x;
}

/// Frobenius residual ||A X A^T + Q - X||_F.
inline double lyapunov_residual(const Matrix& a, const Matrix& q, const Matrix& x) {
    return (a * x * a.transpose() + q - x).norm();
}

inline double min_symmetric_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

}  // namespace numerics
}  // namespace koopdec
