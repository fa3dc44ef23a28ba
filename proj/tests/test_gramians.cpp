#include <gtest/gtest.h>

#include <random>

#include "koopdec/koopdec.hpp"

using namespace koopdec;

namespace {

// Sum of A^t Q (A^T)^t by direct iteration.
Matrix series(const Matrix& a, const Matrix& q, int terms) {
    Matrix x = Matrix::Zero(a.rows(), a.cols()), p = Matrix::Identity(a.rows(), a.cols());
    for (int t = 0; t < terms; ++t) {
        x += p * q * p.transpose();
        p = a * p;
    }
    return x;
}

Vector indicator_vector(Eigen::Index n, const StateSubset& s) {
    Vector v = Vector::Zero(n);
    for (auto i : s) v(static_cast<Eigen::Index>(i)) = 1.0;
    return v;
}

}  // namespace

TEST(Gramians, StableModelMatchesSeries) {
    const auto model = random_fitted_model(4, 101);
    const auto g = compute_gramians(model);
    EXPECT_EQ(g.method, GramianMethod::lyapunov_exact);
    const Matrix b = model.input_matrix();
    EXPECT_LT(numerics::relative_difference(g.X_c, series(model.K_x, b * b.transpose(), 500)), 1e-9);
    EXPECT_LT(numerics::relative_difference(
                  g.X_o, series(model.K_x.transpose(), model.W_h.transpose() * model.W_h, 500)),
              1e-9);
}

TEST(Gramians, AreSymmetricPositiveSemidefinite) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto model = random_fitted_model(5, 200 + s, 2);
        const auto g = compute_gramians(model);
        EXPECT_LT((g.X_o - g.X_o.transpose()).norm(), 1e-12 * g.X_o.norm());
        EXPECT_GT(numerics::min_symmetric_eigenvalue(g.X_o), -1e-9 * g.X_o.norm());
        EXPECT_GT(numerics::min_symmetric_eigenvalue(g.X_c), -1e-9 * g.X_c.norm());
    }
}

TEST(Gramians, HorizonOverrideUsesTruncatedSum) {
    const auto model = random_fitted_model(3, 55);
    const auto g = compute_gramians(model, 7);
    EXPECT_EQ(g.method, GramianMethod::finite_horizon);
    EXPECT_EQ(g.horizon, 7u);
    const Matrix b = model.input_matrix();
    EXPECT_LT(numerics::relative_difference(g.X_c, series(model.K_x, b * b.transpose(), 7)), 1e-13);
}

TEST(Gramians, UnstableModelFallsBackToFiniteHorizon) {
    auto model = random_fitted_model(3, 56);
    model.K_x = 1.001 * model.K_x / numerics::spectral_radius(model.K_x);
    const auto g = compute_gramians(model);
    EXPECT_EQ(g.method, GramianMethod::finite_horizon);
    EXPECT_EQ(g.horizon, kDefaultGramianHorizon);
}

TEST(Gramians, ControllabilityIncludesCrossBlock) {
    auto model = random_fitted_model(2, 57);
    const auto without = compute_gramians(model);
    model.cross_dict = ObservableDictionary::mixed_polynomial(2, 2, 2);
    model.K_xw = Matrix::Constant(2, model.cross_dict->lifted_dim(), 0.1);
    const auto with = compute_gramians(model);
    const Matrix extra = series(model.K_x, *model.K_xw * model.K_xw->transpose(), 500);
    EXPECT_LT(numerics::relative_difference(with.X_c, without.X_c + extra), 1e-9);
    EXPECT_EQ(with.X_o, without.X_o);
}

TEST(Kappa, IdentityDictionaryRatioOfQuadraticForms) {
    const auto model = random_fitted_model(4, 303);
    const auto g = compute_gramians(model);
    const StateSubset s{0, 2};
    const Vector in = indicator_vector(4, s);
    const Vector out = Vector::Ones(4) - in;
    EXPECT_NEAR(kappa_o(model, g, s), in.dot(g.X_o * in) / out.dot(g.X_o * out), 1e-12);
    const Matrix pinv = g.X_c.completeOrthogonalDecomposition().pseudoInverse();
    EXPECT_NEAR(kappa_c(model, g, s), in.dot(pinv * in) / out.dot(pinv * out), 1e-9);
}

TEST(Kappa, ComplementInvertsEveryProperSubset) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto model = random_fitted_model(5, 400 + seed, 2);
        const auto g = compute_gramians(model);
        for (unsigned mask = 1; mask + 1 < (1u << 5); ++mask) {
            StateSubset s, c;
            for (std::size_t i = 0; i < 5; ++i) (mask >> i & 1u ? s : c).push_back(i);
            EXPECT_NEAR(kappa_o(model, g, s) * kappa_o(model, g, c), 1.0, 1e-12);
            EXPECT_NEAR(kappa_c(model, g, s) * kappa_c(model, g, c), 1.0, 1e-12);
        }
    }
}

TEST(Kappa, CombinedScoreUsesSingletonMeans) {
    const auto model = random_fitted_model(3, 501);
    const auto g = compute_gramians(model);
    double mo = 0.0, mc = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        mo += kappa_o(model, g, {i}) / 3.0;
        mc += kappa_c(model, g, {i}) / 3.0;
    }
    const auto norm = singleton_normalization(model, g);
    EXPECT_NEAR(norm.mean_o, mo, 1e-14);
    EXPECT_NEAR(norm.mean_c, mc, 1e-14);
    const auto score = kappa_combined(model, g, {0, 1}, 0.5, norm);
    EXPECT_NEAR(score.kappa, kappa_o(model, g, {0, 1}) / mo + 0.5 * kappa_c(model, g, {0, 1}) / mc, 1e-12);
}

TEST(Kappa, RejectsInvalidSubsets) {
    const auto model = random_fitted_model(3, 502);
    const auto g = compute_gramians(model);
    EXPECT_THROW(kappa_o(model, g, {}), Error);
    EXPECT_THROW(kappa_o(model, g, {0, 1, 2}), Error);
    EXPECT_THROW(kappa_o(model, g, {1, 0}), Error);
    EXPECT_THROW(kappa_o(model, g, {3}), Error);
}

TEST(Energy, OutputEnergyMatchesSimulatedSum) {
    const auto model = random_fitted_model(3, 600);
    const auto g = compute_gramians(model);
    const Vector x0 = (Vector(3) << 0.3, -0.2, 0.5).finished();
    Vector z = model.state_dict.lift(x0);
    double e = 0.0;
    for (int t = 0; t < 2000; ++t) {
        e += (model.W_h * z).squaredNorm();
        z = model.K_x * z;
    }
    EXPECT_NEAR(output_energy(model, g, x0), e, 1e-9 * e);
}

TEST(Kappa, IdentityGramiansClosedForm) {
    const KoopmanModel model{ObservableDictionary::identity(4),
                             ObservableDictionary::identity(4),
                             std::nullopt,
                             Matrix::Zero(4, 4),
                             Matrix::Identity(4, 4),
                             std::nullopt,
                             Matrix::Identity(4, 4),
                             Normalization::identity(4, 4),
                             {}};
    const auto g = compute_gramians(model);
    EXPECT_NEAR(kappa_o(model, g, {0}), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(kappa_c(model, g, {0}), 1.0 / 3.0, 1e-15);
    const auto norm = singleton_normalization(model, g);
    EXPECT_NEAR(norm.mean_o, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(kappa_combined(model, g, {0}, 1.0, norm).kappa, 2.0, 1e-14);
}
