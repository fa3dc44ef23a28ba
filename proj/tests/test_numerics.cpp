#include <gtest/gtest.h>

#include <random>

#include "koopdec/koopdec.hpp"

using namespace koopdec;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
    return m;
}

Matrix scaled_to_radius(Matrix a, double rho) {
    return a * (rho / numerics::spectral_radius(a));
}

// sum_t A^t Q (A^T)^t by plain iteration.
Matrix truncated_sum(const Matrix& a, const Matrix& q, int terms) {
    Matrix x = Matrix::Zero(a.rows(), a.cols());
    Matrix p = Matrix::Identity(a.rows(), a.cols());
    for (int t = 0; t < terms; ++t) {
        x += p * q * p.transpose();
        p = a * p;
    }
    return x;
}

}  // namespace

TEST(LeastSquares, MatchesNormalEquations) {
    const Matrix r = random_matrix(4, 60, 1);
    const Matrix t = random_matrix(3, 60, 2);
    const Matrix expect = t * r.transpose() * (r * r.transpose()).inverse();
    const auto ls = numerics::solve_least_squares(t, r, 0.0);
    EXPECT_FALSE(ls.rank_deficient);
    EXPECT_LT(numerics::relative_difference(ls.solution, expect), 1e-12);
}

TEST(LeastSquares, RidgeMatchesRegularizedNormalEquations) {
    const Matrix r = random_matrix(5, 30, 3);
    const Matrix t = random_matrix(2, 30, 4);
    const double ridge = 0.7;
    const Matrix expect = t * r.transpose() * (r * r.transpose() + ridge * Matrix::Identity(5, 5)).inverse();
    EXPECT_LT(numerics::relative_difference(numerics::solve_least_squares(t, r, ridge).solution, expect), 1e-12);
}

TEST(LeastSquares, SmallRidgeApproachesPlainSolution) {
    const Matrix r = random_matrix(4, 50, 5);
    const Matrix t = random_matrix(2, 50, 6);
    const Matrix plain = numerics::solve_least_squares(t, r, 0.0).solution;
    EXPECT_LT(numerics::relative_difference(numerics::solve_least_squares(t, r, 1e-10).solution, plain), 1e-9);
}

TEST(LeastSquares, RankDeficientFallsBackToMinimumNorm) {
    Matrix r = random_matrix(3, 20, 7);
    r.row(2) = r.row(0) + r.row(1);
    const Matrix t = random_matrix(1, 20, 8);
    const auto ls = numerics::solve_least_squares(t, r, 0.0);
    EXPECT_TRUE(ls.rank_deficient);
    const Matrix expect = t * numerics::pseudo_inverse(r);
    EXPECT_LT(numerics::relative_difference(ls.solution, expect), 1e-9);
}

TEST(LeastSquares, RejectsMismatchedSnapshotCounts) {
    EXPECT_THROW(numerics::solve_least_squares(Matrix::Zero(1, 3), Matrix::Zero(2, 4), 0.0), Error);
    EXPECT_THROW(numerics::solve_least_squares(Matrix::Zero(1, 3), Matrix::Zero(2, 3), -1.0), Error);
}

TEST(Lyapunov, AgreesWithTruncatedSeries) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Matrix a = scaled_to_radius(random_matrix(6, 6, 10 + s), 0.8);
        const Matrix b = random_matrix(6, 2, 20 + s);
        const Matrix q = b * b.transpose();
        const Matrix x = numerics::solve_discrete_lyapunov(a, q);
        EXPECT_LT(numerics::relative_difference(x, truncated_sum(a, q, 400)), 1e-10);
        EXPECT_LT(numerics::lyapunov_residual(a, q, x), 1e-12);
    }
}

TEST(Lyapunov, AgreesWithKroneckerSolve) {
    const Matrix a = scaled_to_radius(random_matrix(4, 4, 31), 0.95);
    const Matrix c = random_matrix(4, 4, 32);
    const Matrix q = c * c.transpose();
    Matrix kron(16, 16);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) kron.block(4 * i, 4 * j, 4, 4) = a(i, j) * a;
    const Matrix lhs = Matrix::Identity(16, 16) - kron;
    const Vector vec_q = Eigen::Map<const Vector>(q.data(), 16);
    const Vector vec_x = lhs.partialPivLu().solve(vec_q);
    const Matrix expect = Eigen::Map<const Matrix>(vec_x.data(), 4, 4);
    EXPECT_LT(numerics::relative_difference(numerics::solve_discrete_lyapunov(a, q), expect), 1e-10);
}

TEST(Lyapunov, RejectsUnstableMatrix) {
    const Matrix a = 1.01 * Matrix::Identity(3, 3);
    try {
        numerics::solve_discrete_lyapunov(a, Matrix::Identity(3, 3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "unstable_lifted_dynamics");
    }
}

TEST(SpectralRadius, MatchesKnownEigenvalues) {
    Matrix rot(2, 2);
    rot << 0.0, -0.9, 0.9, 0.0;
    EXPECT_NEAR(numerics::spectral_radius(rot), 0.9, 1e-14);
    Matrix tri(3, 3);
    tri << 0.5, 3.0, -1.0, 0.0, -0.7, 2.0, 0.0, 0.0, 0.2;
    EXPECT_NEAR(numerics::spectral_radius(tri), 0.7, 1e-12);
}

TEST(SpectralRadius, AgreesWithPowerIteration) {
    Matrix a = random_matrix(7, 7, 41);
    a = a * a.transpose();  // symmetric PSD: dominant eigenvalue is real and positive
    Vector v = Vector::Ones(7);
    double lambda = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const Vector w = a * v;
        lambda = w.norm() / v.norm();
        v = w.normalized();
    }
    EXPECT_NEAR(numerics::spectral_radius(a), lambda, 1e-9 * lambda);
}

TEST(PseudoInverse, SatisfiesPenroseConditions) {
    Matrix a = random_matrix(5, 3, 51) * random_matrix(3, 6, 52);  // rank 3
    const Matrix p = numerics::pseudo_inverse(a);
    EXPECT_LT((a * p * a - a).norm(), 1e-10);
    EXPECT_LT((p * a * p - p).norm(), 1e-10);
    EXPECT_LT(((a * p).transpose() - a * p).norm(), 1e-10);
    EXPECT_LT(((p * a).transpose() - p * a).norm(), 1e-10);
}

TEST(MinEigenvalue, OfDiagonalMatrix) {
    const Matrix d = Vector((Vector(3) << 2.0, -0.5, 1.0).finished()).asDiagonal();
    EXPECT_NEAR(numerics::min_symmetric_eigenvalue(d), -0.5, 1e-14);
}
