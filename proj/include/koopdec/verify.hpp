#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "koopdec/deep.hpp"
#include "koopdec/partition.hpp"
#include "koopdec/systems.hpp"

namespace koopdec {

/// EDMD model fitted on a random mildly nonlinear stable system
/// x' = A x + 0.1 sin(x) + B w (rho(A) = 0.7), used by property checks.
inline KoopmanModel random_fitted_model(Eigen::Index n, std::uint64_t seed, int degree = 1, Eigen::Index m = 2,
                                        std::size_t snapshots = 400) {
    const auto sys = random_stable_lti(n, m, 1, 0.7, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const std::size_t per = 20;
    TrajectoryDataset data;
    for (std::size_t k = 0; k * per < snapshots; ++k) {
        Trajectory tr{Matrix(n, static_cast<Eigen::Index>(per) + 1), Matrix(m, static_cast<Eigen::Index>(per))};
        for (Eigen::Index i = 0; i < n; ++i) tr.states(i, 0) = 0.5 * normal(rng);
        for (std::size_t t = 0; t < per; ++t) {
            const auto c = static_cast<Eigen::Index>(t);
            for (Eigen::Index i = 0; i < m; ++i) tr.inputs(i, c) = uni(rng);
            tr.states.col(c + 1) = sys.A * tr.states.col(c) + 0.1 * tr.states.col(c).array().sin().matrix() +
                                   sys.B * tr.inputs.col(c);
        }
        append_trajectory(data, tr.states, tr.inputs, k);
    }
    split_first(data, data.snapshots.size());
    const auto sd = degree <= 1 ? ObservableDictionary::identity(n) : ObservableDictionary::polynomial(n, degree);
    return fit_edmd(data, sd, ObservableDictionary::identity(m), std::nullopt, {1e-8, false});
}

/// Max relative deviation of a dictionary's parameter gradient from central
/// differences of upstream . psi(v), over all parameters.
inline double gradient_check(const ObservableDictionary& dict, const Vector& v, const Vector& upstream,
                             double step = 1e-6) {
    const auto grad = dict.parameter_gradient(v, upstream);
    NetworkParams base = dict.network();
    const auto count = static_cast<Eigen::Index>(base.parameter_count());
    Vector flat(count), analytic(count);
    Eigen::Index pos = 0;
    deep_detail::pack(base.weights, base.biases, flat, pos);
    pos = 0;
    deep_detail::pack(grad.weights, grad.biases, analytic, pos);
    Vector numeric(count);
    for (Eigen::Index i = 0; i < count; ++i) {
        auto eval = [&](double delta) {
            Vector f = flat;
            f(i) += delta;
            NetworkParams p = base;
            Eigen::Index q = 0;
            deep_detail::unpack(f, q, p);
            return upstream.dot(dict.with_network(p).lift(v));
        };
        numeric(i) = (eval(step) - eval(-step)) / (2.0 * step);
    }
    const double scale = std::max(numeric.norm(), 1e-12);
    return (analytic - numeric).norm() / scale;
}

/// Worst relative deviation of kappa(S^c) * kappa(S) from 1 over all proper
/// nonempty subsets, for both variants.
inline double complement_inversion_error(const KoopmanModel& model, const KoopmanGramians& grams) {
    const auto n = static_cast<std::size_t>(model.state_dim());
    double worst = 0.0;
    for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << n); ++mask) {
        StateSubset s, c;
        for (std::size_t i = 0; i < n; ++i) (mask >> i & 1U ? s : c).push_back(i);
        const double o = kappa_o(model, grams, s) * kappa_o(model, grams, c);
        const double ctl = kappa_c(model, grams, s) * kappa_c(model, grams, c);
        worst = std::max({worst, std::abs(o - 1.0), std::abs(ctl - 1.0)});
    }
    return worst;
}

inline bool is_valid_partition(const Partition& p, std::size_t n, std::size_t k) {
    if (p.clusters.size() != k) return false;
    std::vector<int> seen(n, 0);
    for (const auto& c : p.clusters)
        for (auto i : c) {
            if (i >= n || seen[i]++) return false;
        }
    for (auto s : seen)
        if (s != 1) return false;
    return true;
}

/// Small lossless or damped network used by the integrator checks.
inline SwingNetworkParams toy_swing_network(bool lossless) {
    SwingNetworkParams p;
    p.M = (Vector(3) << 2.0, 3.0, 4.0).finished();
    p.D = lossless ? Vector::Zero(3) : Vector((Vector(3) << 0.5, 0.4, 0.6).finished());
    p.Pm = (Vector(3) << 0.3, -0.1, -0.2).finished();
    p.V = (Vector(3) << 1.0, 1.02, 0.98).finished();
    p.B = (Matrix(3, 3) << 0.0, 1.5, 0.8, 1.5, 0.0, 1.1, 0.8, 1.1, 0.0).finished();
    p.G = lossless ? Matrix::Zero(3, 3) : Matrix((Matrix(3, 3) << 0.1, -0.05, -0.03, -0.05, 0.1, -0.04, -0.03, -0.04, 0.1).finished());
    p.reference = 2;
    p.h = 0.01;
    return p;
}

/// ||x_h - x_{h/2}|| / ||x_{h/2} - x_{h/4}|| over sampled states; ~16 for RK4.
inline double rk4_halving_ratio(const SwingNetworkParams& p, const Vector& s0, std::size_t seconds, double h) {
    const auto sig = InputSignal::zero(p.input_dim());
    const Matrix a = swing_absolute_samples(p, s0, sig, seconds, h);
    const Matrix b = swing_absolute_samples(p, s0, sig, seconds, h / 2.0);
    const Matrix c = swing_absolute_samples(p, s0, sig, seconds, h / 4.0);
    return (a - b).norm() / (b - c).norm();
}

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline std::vector<SuiteResult> run_invariant_suites(std::uint64_t seed = 1) {
    std::vector<std::pair<std::string, std::function<std::string()>>> suites;
    auto fmt = [](double v) { return io::format_real(v); };

    suites.emplace_back("lyapunov_residual", [&] {
        double worst = 0.0;
        for (std::uint64_t k = 0; k < 20; ++k) {
            const auto sys = random_stable_lti(6, 2, 2, 0.9, seed + k);
            const Matrix q = sys.B * sys.B.transpose();
            const Matrix x = numerics::solve_discrete_lyapunov(sys.A, q);
            worst = std::max(worst, numerics::lyapunov_residual(sys.A, q, x));
        }
        detail::require(worst <= 1e-10, "invariant", "residual " + fmt(worst));
        return "max relative residual " + fmt(worst);
    });
    suites.emplace_back("gramian_psd", [&] {
        for (std::uint64_t k = 0; k < 5; ++k) {
            const auto model = random_fitted_model(4, seed + k, 2);
            const auto g = compute_gramians(model);
            const double scale_o = std::max(1.0, g.X_o.norm()), scale_c = std::max(1.0, g.X_c.norm());
            detail::require(numerics::min_symmetric_eigenvalue(g.X_o) >= -1e-9 * scale_o &&
                                numerics::min_symmetric_eigenvalue(g.X_c) >= -1e-9 * scale_c,
                            "invariant", "Gramian not positive semidefinite");
        }
        return std::string("5 fitted models");
    });
    suites.emplace_back("kappa_complement_inversion", [&] {
        double worst = 0.0;
        for (std::uint64_t k = 0; k < 3; ++k) {
            const auto model = random_fitted_model(6, seed + 100 + k);
            worst = std::max(worst, complement_inversion_error(model, compute_gramians(model)));
        }
        detail::require(worst <= 1e-12, "invariant", "deviation " + fmt(worst));
        return "max deviation " + fmt(worst);
    });
    suites.emplace_back("neural_gradient", [&] {
        double worst = 0.0;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::uint64_t k = 0; k < 5; ++k) {
            const auto act = k % 2 ? Activation::elu : Activation::tanh;
            const auto dict = ObservableDictionary::neural(3, 4, 6, 2, act, seed + k, k % 3 == 0);
            Vector v(3), up(dict.lifted_dim());
            for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
            for (Eigen::Index i = 0; i < up.size(); ++i) up(i) = normal(rng);
            worst = std::max(worst, gradient_check(dict, v, up));
        }
        detail::require(worst <= 1e-4, "invariant", "gradient deviation " + fmt(worst));
        return "max relative deviation " + fmt(worst);
    });
    suites.emplace_back("partition_validity", [&] {
        std::size_t instances = 0;
        for (std::uint64_t k = 0; k < 4; ++k) {
            const auto n = static_cast<std::size_t>(4 + k);
            const auto model = random_fitted_model(static_cast<Eigen::Index>(n), seed + 200 + k);
            const auto g = compute_gramians(model);
            for (std::size_t parts : {std::size_t{2}, std::size_t{3}}) {
                const auto a = multiway_partition(model, g, parts);
                const auto b = multiway_partition(model, g, parts);
                detail::require(is_valid_partition(a, n, parts), "invariant", "invalid partition");
                detail::require(a.clusters == b.clusters, "invariant", "partition not deterministic");
                detail::require(a.stats.merge_rounds == n - 1, "invariant", "wrong number of merge rounds");
                PartitionOptions any_k;
                any_k.oracle_exact_k = false;
                const auto best = brute_force_partition(model, g, parts, PartitionObjective::spread, any_k);
                detail::require(a.objective_spread >= best.objective_spread - 1e-12, "invariant",
                                "heuristic beat the spread optimum");
                const auto best_mm = brute_force_partition(model, g, parts, PartitionObjective::maximin, any_k);
                detail::require(a.objective_maximin <= best_mm.objective_maximin + 1e-12, "invariant",
                                "heuristic beat the maximin optimum");
                ++instances;
            }
        }
        return std::to_string(instances) + " instances";
    });
    suites.emplace_back("two_state_determinism", [&] {
        const Vector x0 = (Vector(2) << 0.5, -0.1).finished();
        const auto sig = InputSignal::step(250, Vector::Constant(1, -1.0));
        const auto a = two_state_trajectory({}, x0, sig, 500);
        const auto b = two_state_trajectory({}, x0, sig, 500);
        detail::require(a.states == b.states, "invariant", "two-state map not reproducible");
        const auto z = two_state_trajectory({}, Vector::Zero(2), InputSignal::zero(1), 50);
        detail::require(z.states.isZero(0.0), "invariant", "origin is not a fixed point");
        return std::string("bit-identical");
    });
    suites.emplace_back("swing_energy", [&] {
        const auto p = toy_swing_network(true);
        Vector s0 = Vector::Zero(6);
        s0.head(3) << 0.2, -0.1, 0.05;
        s0.tail(3) << 0.05, 0.0, -0.02;
        const Matrix traj = swing_absolute_samples(p, s0, InputSignal::zero(2), 100, 0.01);
        const double e0 = swing_energy(p, traj.col(0));
        double drift = 0.0;
        for (Eigen::Index t = 0; t < traj.cols(); ++t)
            drift = std::max(drift, std::abs(swing_energy(p, traj.col(t)) - e0) / std::abs(e0));
        detail::require(drift < 1e-6, "invariant", "energy drift " + fmt(drift));
        return "relative drift " + fmt(drift);
    });
    suites.emplace_back("rk4_order", [&] {
        const auto p = toy_swing_network(false);
        Vector s0 = Vector::Zero(6);
        s0.head(3) << 0.4, -0.3, 0.1;
        s0.tail(3) << 0.2, -0.1, 0.0;
        const double ratio = rk4_halving_ratio(p, s0, 20, 0.1);
        detail::require(ratio >= 12.0 && ratio <= 20.0, "invariant", "halving ratio " + fmt(ratio));
        return "halving ratio " + fmt(ratio);
    });

    std::vector<SuiteResult> results;
    for (const auto& [name, fn] : suites) {
        SuiteResult r{name, false, ""};
        try {
            r.detail = fn();
            r.passed = true;
        } catch (const std::exception& e) {
            r.detail = e.what();
        }
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace koopdec
