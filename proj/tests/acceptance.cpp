// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopdec/koopdec.hpp"

using namespace koopdec;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool passed = false;
    std::string detail;
    std::vector<std::string> info;
};

std::string fmt(double v) { return io::format_real(v); }

/// Classical discrete Gramian by vectorization: (I - A (x) A) vec X = vec Q.
Matrix kronecker_lyapunov(const Matrix& a, const Matrix& q) {
    const auto n = a.rows();
    Matrix big = Matrix::Identity(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) big.block(i * n, j * n, n, n) -= a(i, j) * a;
    const Vector vec_q = Eigen::Map<const Vector>(q.data(), n * n);
    const Vector vec_x = big.partialPivLu().solve(vec_q);
    return Eigen::Map<const Matrix>(vec_x.data(), n, n);
}

Outcome lti_equivalence() {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(s % 7);
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(s % 3);
        const Eigen::Index p = 1 + static_cast<Eigen::Index>((s / 3) % 3);
        const auto sys = random_stable_lti(n, m, p, 0.8, 1000 + s);
        std::mt19937_64 rng(s);
        std::normal_distribution<double> normal(0.0, 1.0);
        TrajectoryDataset data;
        for (std::size_t k = 0; k < 4; ++k) {
            Vector x0(n);
            for (Eigen::Index i = 0; i < n; ++i) x0(i) = normal(rng);
            Matrix w(m, 30);
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                for (Eigen::Index i = 0; i < m; ++i) w(i, c) = normal(rng);
            const auto tr = simulate_lti(sys, x0, w);
            append_trajectory(data, tr.states, tr.inputs, k);
        }
        split_first(data, data.snapshots.size());
        auto model = fit_edmd(data, ObservableDictionary::identity(n), ObservableDictionary::identity(m), std::nullopt,
                              {0.0, false});
        std::vector<Vector> y;
        for (const auto& snap : data.snapshots) y.push_back(sys.C * snap.x);
        model.W_h = fit_output_map(data, model, y);
        const auto g = compute_gramians(model);
        const Matrix xo = kronecker_lyapunov(sys.A.transpose(), sys.C.transpose() * sys.C);
        const Matrix xc = kronecker_lyapunov(sys.A, sys.B * sys.B.transpose());
        worst = std::max({worst, numerics::relative_difference(g.X_o, xo), numerics::relative_difference(g.X_c, xc)});
    }
    return {worst <= 1e-8, "max relative Frobenius deviation " + fmt(worst) + " over 20 systems (tol 1e-8)", {}};
}

/// Random i.i.d. inputs, several short trajectories from random states.
TrajectoryDataset random_input_data(const std::function<Vector(const Vector&, double)>& f, std::size_t snapshots,
                                    double x_spread, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> w(-0.2, 0.2), x(-x_spread, x_spread);
    const std::size_t per = 50;
    TrajectoryDataset data;
    for (std::size_t k = 0; k * per < snapshots; ++k) {
        Matrix states(2, per + 1), inputs(1, per);
        states.col(0) << x(rng), x(rng);
        for (std::size_t t = 0; t < per; ++t) {
            const auto c = static_cast<Eigen::Index>(t);
            inputs(0, c) = w(rng);
            states.col(c + 1) = f(states.col(c), inputs(0, c));
        }
        append_trajectory(data, states, inputs, k);
    }
    split_first(data, data.snapshots.size());
    return data;
}

double fitted_cross_ratio(const TrajectoryDataset& data) {
    const auto model = fit_edmd(data, ObservableDictionary::identity(2), ObservableDictionary::polynomial(1, 3),
                                ObservableDictionary::mixed_polynomial(2, 1, 2), {1e-10, false});
    return cross_term_ratio(model);
}

Outcome cross_terms() {
    const Matrix a = (Matrix(2, 2) << 0.6, 0.2, -0.3, 0.7).finished();
    auto additive = [&](const Vector& x, double u) {
        Vector next = a * x;
        next(0) += 0.1 * x(1) * x(1) + std::sin(u);
        next(1) += 0.5 * u * u;
        return next;
    };
    TwoStateParams p;
    auto example1 = [&](const Vector& x, double u) { return two_state_step(p, x, u); };
    const auto sep = random_input_data(additive, 2000, 0.5, 21);
    const auto mix = random_input_data(example1, 2000, 0.5, 21);
    const double r_sep = fitted_cross_ratio(sep);
    const double r_mix = fitted_cross_ratio(mix);
    return {r_sep < 0.05 && r_mix > r_sep,
            "additive system ratio " + fmt(r_sep) + " (< 0.05), Example 1 ratio " + fmt(r_mix) + " on matched data",
            {}};
}

Outcome example1() {
    Outcome out;
    const TwoStateParams p;
    const Vector x0 = (Vector(2) << 0.5, -0.1).finished();
    DeepOptions deep;
    deep.epochs = 150;
    deep.seed = 5;
    auto deep_fit = [&](const TrajectoryDataset& data) {
        return fit_deep(data, ObservableDictionary::neural(2, 8, 32, 2, Activation::tanh, 5),
                        ObservableDictionary::identity(1), deep);
    };
    auto rollout_error = [&](const KoopmanModel& m, const TrajectoryDataset& data, std::size_t start, std::size_t steps,
                             RolloutMode mode) {
        std::vector<Vector> ws;
        for (std::size_t t = 0; t < steps; ++t) ws.push_back(data.snapshots[start + t].w);
        const auto pred = predict_multistep(m, data.snapshots[start].x, ws, steps, mode);
        double err = 0.0;
        for (std::size_t t = 0; t < steps; ++t) {
            const Vector& truth = data.snapshots[start + t].x_next;
            err += (truth - pred[t]).norm() / truth.norm();
        }
        return err / static_cast<double>(steps);
    };

    try {
        auto data = simulate_two_state(p, x0, InputSignal::step(250, Vector::Constant(1, 1.0)), 500);
        split_first(data, 250);
        const auto model = deep_fit(data);
        const double err = rollout_error(model, data, 250, 120, RolloutMode::lifted);
        out.passed = err <= 0.02;
        out.detail = "120-step rollout mean relative error " + fmt(err) + " (tol 0.02)";
    } catch (const Error& e) {
        out.passed = false;
        out.detail = std::string("printed protocol cannot run: ") + e.what() +
                     " (the map diverges under the +1 step; see README)";
    }

    // Same map and protocol with u = 0 throughout: train on the first 250
    // points and roll out 120 steps from the held-out x_250.
    auto data = simulate_two_state(p, x0, InputSignal::zero(1), 500);
    split_first(data, 250);
    const auto model = deep_fit(data);
    out.info.push_back("unforced variant, deep fit, lifted rollout: mean relative error " +
                       fmt(rollout_error(model, data, 250, 120, RolloutMode::lifted)));
    out.info.push_back("unforced variant, deep fit, re-lifted rollout: mean relative error " +
                       fmt(rollout_error(model, data, 250, 120, RolloutMode::relift)));
    const auto poly = fit_edmd(data, ObservableDictionary::polynomial(2, 7), ObservableDictionary::identity(1),
                               std::nullopt, {1e-10, false});
    out.info.push_back("unforced variant, degree-7 polynomial EDMD, re-lifted rollout: mean relative error " +
                       fmt(rollout_error(poly, data, 250, 120, RolloutMode::relift)));
    return out;
}

Outcome gradients() {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> dim(1, 4), feat(1, 6), width(2, 8), depth(1, 3), coin(0, 1);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const Eigen::Index n = dim(rng);
        const auto act = coin(rng) ? Activation::elu : Activation::tanh;
        const auto dict = ObservableDictionary::neural(n, feat(rng), width(rng), static_cast<std::size_t>(depth(rng)), act,
                                                       rng(), coin(rng) == 1);
        Vector v(n), up(dict.lifted_dim());
        for (Eigen::Index j = 0; j < n; ++j) v(j) = normal(rng);
        for (Eigen::Index j = 0; j < up.size(); ++j) up(j) = normal(rng);
        worst = std::max(worst, gradient_check(dict, v, up));
    }
    return {worst <= 1e-4, "max relative deviation " + fmt(worst) + " over 50 configurations (tol 1e-4)", {}};
}

Outcome complement_inversion() {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Eigen::Index n = 4 + static_cast<Eigen::Index>(s % 7);
        const auto model = random_fitted_model(n, 300 + s, n <= 5 ? 2 : 1);
        worst = std::max(worst, complement_inversion_error(model, compute_gramians(model)));
    }
    return {worst <= 1e-12, "max deviation " + fmt(worst) + " over all subsets of 10 models, n = 4..10 (tol 1e-12)", {}};
}

Outcome partition_oracle() {
    std::size_t instances = 0, valid = 0, within = 0;
    double worst = 1.0;
    for (std::size_t n = 6; n <= 9; ++n) {
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto model = random_fitted_model(static_cast<Eigen::Index>(n), 5000 + 100 * n + s);
            const auto g = compute_gramians(model);
            for (std::size_t k : {std::size_t{2}, std::size_t{3}}) {
                const auto h = multiway_partition(model, g, k);
                const auto best = brute_force_partition(model, g, k, PartitionObjective::spread);
                ++instances;
                if (is_valid_partition(h, n, k)) ++valid;
                const double ratio = best.objective_spread > 0.0 ? h.objective_spread / best.objective_spread : 1.0;
                worst = std::max(worst, ratio);
                if (ratio <= 2.0) ++within;
            }
        }
    }
    const double frac = static_cast<double>(within) / static_cast<double>(instances);
    return {valid == instances && frac >= 0.8,
            std::to_string(valid) + "/" + std::to_string(instances) + " valid; " + std::to_string(within) + "/" +
                std::to_string(instances) + " within 2x of the optimal spread (" + fmt(100.0 * frac) +
                "%, need 80%); worst ratio " + fmt(worst),
            {}};
}

Outcome swing_pipeline() {
    auto c = load_pipeline_config(std::string(KOOPDEC_CONFIG_DIR) + "/swing9.json");
    c.output = (std::filesystem::temp_directory_path() / "koopdec-acceptance-swing").string();
    const auto r = run_pipeline(c);
    const double err = r.model->report.test_state_error;
    const auto& part = r.partition.partition;
    const double oracle = r.partition.oracle_spread.value_or(0.0);
    const double ratio = oracle > 0.0 ? part.objective_spread / oracle : 1.0;
    const bool covers = is_valid_partition(part, static_cast<std::size_t>(r.model->state_dim()), c.k) &&
                        part.unit_clusters.size() == 3;
    Outcome out;
    out.passed = covers && err < 0.01 && ratio <= 2.0;
    out.detail = std::string("(a) completed, ") + (covers ? "3 clusters cover 9 generators" : "invalid partition") +
                 "; (b) one-step test error " + fmt(err) + " (< 0.01); (c) heuristic spread " +
                 fmt(part.objective_spread) + " vs optimum " + fmt(oracle) + ", ratio " + fmt(ratio) + " (<= 2)";
    out.info.push_back("multi-step rollout mean relative error on a test trajectory " + fmt(r.prediction_error));
    return out;
}

Outcome lyapunov_and_rk4() {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(s % 15);
        const auto sys = random_stable_lti(n, 2, 2, 0.5 + 0.49 * static_cast<double>(s % 10) / 9.0, 7000 + s);
        const Matrix q = sys.B * sys.B.transpose() + Matrix::Identity(n, n);
        const Matrix x = numerics::solve_discrete_lyapunov(sys.A, q);
        worst = std::max(worst, numerics::lyapunov_residual(sys.A, q, x));
    }
    const auto p = swing_params_from_json(io::read_json_file(std::string(KOOPDEC_CONFIG_DIR) + "/swing9_network.json"));
    Vector s0 = swing_equilibrium(p);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 0.1);
    for (Eigen::Index i = 0; i < s0.size(); ++i) s0(i) += normal(rng);
    const double ratio = rk4_halving_ratio(p, s0, 20, 0.01);
    return {worst <= 1e-10 && ratio >= 12.0 && ratio <= 20.0,
            "max relative residual " + fmt(worst) + " over 100 instances (tol 1e-10); RK4 halving ratio " + fmt(ratio) +
                " at h = 0.01 (need [12, 20])",
            {}};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"lti_gramian_equivalence", lti_equivalence},
        {"cross_term_vanishing", cross_terms},
        {"example1_reproduction", example1},
        {"gradient_correctness", gradients},
        {"kappa_complement_inversion", complement_inversion},
        {"partition_oracle_comparison", partition_oracle},
        {"swing_pipeline", swing_pipeline},
        {"lyapunov_and_rk4", lyapunov_and_rk4},
    };
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        const auto start = Clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what(), {}};
        }
        const double secs = std::chrono::duration<double>(Clock::now() - start).count();
        std::printf("%s %s: %s [%.1f s]\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
        for (const auto& line : o.info) std::printf("  info: %s\n", line.c_str());
        std::fflush(stdout);
        if (!o.passed) ++failures;
    }
    return failures ? 1 : 0;
}
