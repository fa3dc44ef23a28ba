#include <gtest/gtest.h>

#include <cmath>

#include "koopdec/koopdec.hpp"

using namespace koopdec;

TEST(Dictionary, IdentityLiftsToItself) {
    const auto d = ObservableDictionary::identity(3);
    const Vector v = (Vector(3) << 1.0, -2.0, 0.5).finished();
    EXPECT_EQ(d.lift(v), v);
    EXPECT_EQ(d.lifted_dim(), 3);
}

TEST(Dictionary, PolynomialFeaturesInGradedOrder) {
    const auto d = ObservableDictionary::polynomial(2, 3, true);
    // x, y, x^2, xy, y^2, x^3, x^2 y, x y^2, y^3, 1
    ASSERT_EQ(d.lifted_dim(), 10);
    const double x = 1.5, y = -2.0;
    const Vector expect = (Vector(10) << x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y, 1.0)
                              .finished();
    EXPECT_LT((d.lift((Vector(2) << x, y).finished()) - expect).norm(), 1e-14);
}

TEST(Dictionary, PolynomialFeatureCountIsBinomial) {
    for (int n = 1; n <= 4; ++n)
        for (int deg = 1; deg <= 4; ++deg) {
            // C(n + deg, deg) - 1 monomials of degree 1..deg.
            double c = 1.0;
            for (int i = 1; i <= deg; ++i) c = c * (n + i) / i;
            EXPECT_EQ(ObservableDictionary::polynomial(n, deg).lifted_dim(), static_cast<Eigen::Index>(c) - 1);
        }
}

TEST(Dictionary, MixedPolynomialKeepsOnlyCrossTerms) {
    const auto d = ObservableDictionary::mixed_polynomial(2, 1, 2);
    // x1 w, x2 w
    ASSERT_EQ(d.lifted_dim(), 2);
    const Vector v = (Vector(3) << 2.0, 3.0, 5.0).finished();
    EXPECT_EQ(d.lift(v), (Vector(2) << 10.0, 15.0).finished());
    EXPECT_FALSE(d.state_inclusive());
}

TEST(Dictionary, ThinPlateValues) {
    Matrix centers(1, 2);
    centers << 0.0, 1.0;
    const auto d = ObservableDictionary::thin_plate_rbf(centers, 2.0);
    const Vector v = Vector::Constant(1, 3.0);
    const Vector z = d.lift(v);
    ASSERT_EQ(z.size(), 3);
    EXPECT_EQ(z(0), 3.0);
    EXPECT_NEAR(z(1), 1.5 * 1.5 * std::log(1.5), 1e-14);
    EXPECT_NEAR(z(2), 1.0 * std::log(1.0), 1e-14);
    EXPECT_EQ(d.lift(Vector::Zero(1))(1), 0.0);
}

TEST(Dictionary, JacobianMatchesFiniteDifferences) {
    std::vector<ObservableDictionary> dicts{
        ObservableDictionary::polynomial(3, 3),
        ObservableDictionary::thin_plate_rbf((Matrix(3, 2) << 0.1, -0.4, 0.2, 0.3, -0.5, 0.0).finished(), 1.3),
        ObservableDictionary::neural(3, 4, 8, 3, Activation::elu, 5),
        ObservableDictionary::neural(3, 4, 8, 2, Activation::tanh, 6, true),
    };
    const Vector v = (Vector(3) << 0.3, -0.7, 1.1).finished();
    for (const auto& d : dicts) {
        const Matrix j = d.lift_jacobian(v);
        Matrix fd(d.lifted_dim(), 3);
        for (Eigen::Index k = 0; k < 3; ++k) {
            Vector a = v, b = v;
            a(k) += 1e-6;
            b(k) -= 1e-6;
            fd.col(k) = (d.lift(a) - d.lift(b)) / 2e-6;
        }
        EXPECT_LT((j - fd).norm() / fd.norm(), 1e-7) << to_string(d.kind());
    }
}

TEST(Dictionary, AnchoredNeuralVanishesAtZero) {
    const auto d = ObservableDictionary::neural(2, 5, 16, 2, Activation::elu, 9, true);
    EXPECT_LT(d.lift(Vector::Zero(2)).norm(), 1e-15);
    const auto free = ObservableDictionary::neural(2, 5, 16, 2, Activation::elu, 9, false);
    EXPECT_GT(free.lift(Vector::Zero(2)).norm(), 0.0);
}

TEST(Dictionary, NeuralParameterGradientMatchesPerturbation) {
    for (auto act : {Activation::tanh, Activation::elu}) {
        const auto d = ObservableDictionary::neural(2, 3, 5, 3, act, 12, act == Activation::tanh);
        const Vector v = (Vector(2) << 0.4, -1.2).finished();
        const Vector up = (Vector(5) << 0.3, -0.2, 1.0, 0.5, -0.8).finished();
        const auto grad = d.parameter_gradient(v, up);
        const NetworkParams base = d.network();
        double worst = 0.0;
        for (std::size_t l = 0; l < base.weights.size(); ++l) {
            for (Eigen::Index i = 0; i < base.weights[l].size(); ++i) {
                auto eval = [&](double delta) {
                    NetworkParams p = base;
                    p.weights[l].data()[i] += delta;
                    return up.dot(d.with_network(p).lift(v));
                };
                const double fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                worst = std::max(worst, std::abs(fd - grad.weights[l].data()[i]));
            }
            for (Eigen::Index i = 0; i < base.biases[l].size(); ++i) {
                auto eval = [&](double delta) {
                    NetworkParams p = base;
                    p.biases[l](i) += delta;
                    return up.dot(d.with_network(p).lift(v));
                };
                const double fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                worst = std::max(worst, std::abs(fd - grad.biases[l](i)));
            }
        }
        EXPECT_LT(worst, 1e-8) << to_string(act);
    }
}

TEST(Dictionary, BatchLiftMatchesColumnLift) {
    const auto d = ObservableDictionary::neural(2, 4, 6, 2, Activation::tanh, 3);
    Matrix v(2, 3);
    v << 0.1, 0.2, -0.3, 1.0, -1.0, 0.0;
    const Matrix z = d.lift_batch(v);
    for (Eigen::Index c = 0; c < 3; ++c) EXPECT_LT((z.col(c) - d.lift(v.col(c))).norm(), 1e-14);
}

TEST(Dictionary, JsonRoundTrip) {
    std::vector<ObservableDictionary> dicts{
        ObservableDictionary::identity(2),
        ObservableDictionary::polynomial(2, 3, true),
        ObservableDictionary::mixed_polynomial(2, 1, 3),
        ObservableDictionary::thin_plate_rbf((Matrix(2, 2) << 0.1, 0.2, 0.3, 0.4).finished(), 0.5),
        ObservableDictionary::neural(2, 3, 4, 2, Activation::elu, 1, true),
    };
    for (const auto& d : dicts) {
        const auto back = ObservableDictionary::from_json(d.to_json());
        const Vector v = Vector::LinSpaced(d.input_dim(), -0.3, 0.9);
        EXPECT_EQ(back.kind(), d.kind());
        EXPECT_EQ(back.lift(v), d.lift(v)) << to_string(d.kind());
    }
}

TEST(Dictionary, RejectsWrongInputLength) {
    const auto d = ObservableDictionary::polynomial(2, 2);
    EXPECT_THROW(d.lift(Vector::Zero(3)), Error);
    EXPECT_THROW(ObservableDictionary::polynomial(0, 2), Error);
    EXPECT_THROW(ObservableDictionary::mixed_polynomial(1, 1, 1), Error);
}
