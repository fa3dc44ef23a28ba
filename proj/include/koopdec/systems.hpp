#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "koopdec/dataset.hpp"
#include "koopdec/parallel.hpp"

namespace koopdec {

inline constexpr double kDivergenceBound = 1e6;

/// One simulated trajectory: states n x (T+1), inputs m x T.
struct Trajectory {
    Matrix states;
    Matrix inputs;
};

inline TrajectoryDataset to_dataset(const std::vector<Trajectory>& trajectories) {
    TrajectoryDataset data;
    for (std::size_t i = 0; i < trajectories.size(); ++i)
        append_trajectory(data, trajectories[i].states, trajectories[i].inputs, i);
    return data;
}

/// Exogenous input evaluated at integer times t >= 0 (held constant over
/// [t, t+1) by continuous-time simulators).
struct InputSignal {
    enum class Kind { zero, step, impulse, recorded };
    Kind kind = Kind::zero;
    std::size_t t0 = 0;
    Vector amplitude;
    /// channels x samples; zero beyond the last sample.
    Matrix samples;

    static InputSignal zero(Eigen::Index channels) { return {Kind::zero, 0, Vector::Zero(channels), {}}; }
    static InputSignal step(std::size_t t0, Vector amplitude) { return {Kind::step, t0, std::move(amplitude), {}}; }
    static InputSignal impulse(std::size_t t0, Vector amplitude) {
        return {Kind::impulse, t0, std::move(amplitude), {}};
    }
    static InputSignal recorded(Matrix samples) {
        InputSignal s{Kind::recorded, 0, Vector::Zero(samples.rows()), std::move(samples)};
        numerics::require_finite(s.samples, "recorded input");
        return s;
    }

    Eigen::Index channels() const { return kind == Kind::recorded ? samples.rows() : amplitude.size(); }

    Vector at(std::size_t t) const {
        switch (kind) {
            case Kind::zero: return Vector::Zero(channels());
            case Kind::step: return t >= t0 ? amplitude : Vector::Zero(channels());
            case Kind::impulse: return t == t0 ? amplitude : Vector::Zero(channels());
            case Kind::recorded:
                return static_cast<Eigen::Index>(t) < samples.cols() ? Vector(samples.col(static_cast<Eigen::Index>(t)))
                                                                      : Vector::Zero(channels());
        }
        return {};
    }

    Matrix sequence(std::size_t steps) const {
        Matrix out(channels(), static_cast<Eigen::Index>(steps));
        for (std::size_t t = 0; t < steps; ++t) out.col(static_cast<Eigen::Index>(t)) = at(t);
        return out;
    }
};

/// Piecewise-constant i.i.d. uniform samples in [-amplitude, amplitude],
/// redrawn every `hold` steps.
inline InputSignal random_signal(Eigen::Index channels, std::size_t steps, double amplitude, std::size_t hold,
                                 std::uint64_t seed) {
    detail::require(hold >= 1, "invalid_argument", "hold must be at least 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-amplitude, amplitude);
    Matrix s(channels, static_cast<Eigen::Index>(steps));
    for (std::size_t t = 0; t < steps; ++t) {
        if (t % hold == 0)
            for (Eigen::Index c = 0; c < channels; ++c) s(c, static_cast<Eigen::Index>(t)) = dist(rng);
        else
            s.col(static_cast<Eigen::Index>(t)) = s.col(static_cast<Eigen::Index>(t) - 1);
    }
    return InputSignal::recorded(std::move(s));
}

inline io::json signal_to_json(const InputSignal& s) {
    switch (s.kind) {
        case InputSignal::Kind::zero: return {{"kind", "zero"}, {"channels", s.channels()}};
        case InputSignal::Kind::step:
            return {{"kind", "step"}, {"t0", s.t0}, {"amplitude", io::vector_to_json(s.amplitude)}};
        case InputSignal::Kind::impulse:
            return {{"kind", "impulse"}, {"t0", s.t0}, {"amplitude", io::vector_to_json(s.amplitude)}};
        case InputSignal::Kind::recorded:
            return {{"kind", "recorded"}, {"samples", io::matrix_to_json_exact(s.samples)}};
    }
    return {};
}

/// Example 1 map parameters.
struct TwoStateParams {
    double a1 = -0.96;
    double a2 = 0.88;
    double a3 = -0.95;
    double omega = -2.0;
};

inline Vector two_state_step(const TwoStateParams& p, const Vector& x, double u) {
    Vector next(2);
    next(0) = -p.a1 * x(1) + p.a3 * x(0) * std::sin(p.omega * u);
    next(1) = std::sin(p.omega * x(0)) + p.a2 * x(1) + x(0) * x(1) * u;
    return next;
}

inline void check_divergence(const Vector& x, std::size_t step) {
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceBound)
        detail::fail("divergence", "trajectory diverged (|x| > 1e6) at step " + std::to_string(step));
}

/// Iterates the discrete two-state map for T steps.
inline Trajectory two_state_trajectory(const TwoStateParams& p, const Vector& x0, const InputSignal& signal,
                                       std::size_t steps) {
    detail::require(steps >= 1, "invalid_argument", "T must be at least 1");
    detail::require(x0.size() == 2 && signal.channels() == 1, "dimension_mismatch",
                    "two-state system has 2 states and 1 input");
    Trajectory tr{Matrix(2, static_cast<Eigen::Index>(steps) + 1), signal.sequence(steps)};
    tr.states.col(0) = x0;
    for (std::size_t t = 0; t < steps; ++t) {
        const auto c = static_cast<Eigen::Index>(t);
        tr.states.col(c + 1) = two_state_step(p, tr.states.col(c), tr.inputs(0, c));
        check_divergence(tr.states.col(c + 1), t + 1);
    }
    return tr;
}

inline TrajectoryDataset simulate_two_state(const TwoStateParams& p, const Vector& x0, const InputSignal& signal,
                                            std::size_t steps) {
    return to_dataset({two_state_trajectory(p, x0, signal, steps)});
}

/// Generators 1..G with absolute rotor angles/speeds; one of them is the
/// reference frame. `reference` is 0-based here and 1-based in files.
struct SwingNetworkParams {
    Vector M;
    Vector D;
    Vector Pm;
    Vector V;
    Matrix G;
    Matrix B;
    std::size_t reference = 0;
    double h = 0.01;

    Eigen::Index generators() const { return M.size(); }
    /// Relative (angle, speed) pairs of the non-reference generators.
    Eigen::Index state_dim() const { return 2 * (generators() - 1); }
    Eigen::Index input_dim() const { return generators() - 1; }

    void validate() const {
        const auto g = generators();
        detail::require(g >= 2, "invalid_swing_params", "need at least two generators");
        detail::require(D.size() == g && Pm.size() == g && V.size() == g, "invalid_swing_params",
                        "M, D, Pm and V must have one entry per generator");
        detail::require(G.rows() == g && G.cols() == g && B.rows() == g && B.cols() == g, "invalid_swing_params",
                        "G and B must be generators x generators");
        detail::require((M.array() > 0.0).all(), "invalid_swing_params", "inertias must be positive");
        detail::require(G.isApprox(G.transpose(), 1e-12) && B.isApprox(B.transpose(), 1e-12),
                        "invalid_swing_params", "G and B must be symmetric");
        detail::require(static_cast<Eigen::Index>(reference) < g, "invalid_swing_params",
                        "reference generator out of range");
        detail::require(h > 0.0 && std::isfinite(h), "invalid_swing_params", "integration step must be positive");
        const double per_second = 1.0 / h;
        detail::require(std::abs(per_second - std::round(per_second)) < 1e-9, "invalid_swing_params",
                        "1 / h must be an integer (1 s sampling)");
        for (const auto* v : {&M, &D, &Pm, &V}) numerics::require_finite(*v, "swing parameter");
        numerics::require_finite(G, "G");
        numerics::require_finite(B, "B");
    }

    /// Maps non-reference generator index (0-based among G-1) to generator index.
    std::vector<Eigen::Index> others() const {
        std::vector<Eigen::Index> out;
        for (Eigen::Index i = 0; i < generators(); ++i)
            if (i != static_cast<Eigen::Index>(reference)) out.push_back(i);
        return out;
    }
};

inline SwingNetworkParams swing_params_from_json(const io::json& j) {
    static const std::vector<std::string> allowed{"M", "D", "Pm", "V", "G", "B", "reference", "h", "description"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        detail::require(std::find(allowed.begin(), allowed.end(), key) != allowed.end(), "invalid_swing_params",
                        "unknown key '" + key + "' in swing parameter file");
    }
    auto vec = [&](const char* key) {
        const auto& a = j.at(key);
        Vector v(static_cast<Eigen::Index>(a.size()));
        for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
        return v;
    };
    auto mat = [&](const char* key) {
        const auto& a = j.at(key);
        const auto rows = static_cast<Eigen::Index>(a.size());
        Matrix m(rows, rows ? static_cast<Eigen::Index>(a[0].size()) : 0);
        for (Eigen::Index r = 0; r < rows; ++r) {
            detail::require(static_cast<Eigen::Index>(a[static_cast<std::size_t>(r)].size()) == m.cols(),
                            "invalid_swing_params", std::string(key) + " is ragged");
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                m(r, c) = a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
        }
        return m;
    };
    SwingNetworkParams p;
    try {
        p.M = vec("M");
        p.D = vec("D");
        p.Pm = vec("Pm");
        p.V = vec("V");
        p.G = mat("G");
        p.B = mat("B");
        const auto ref = j.at("reference").get<long>();
        detail::require(ref >= 1, "invalid_swing_params", "reference is a 1-based generator index");
        p.reference = static_cast<std::size_t>(ref - 1);
        if (j.contains("h")) p.h = j.at("h").get<double>();
    } catch (const io::json::exception& e) {
        detail::fail("invalid_swing_params", std::string("swing parameter file: ") + e.what());
    }
    p.validate();
    return p;
}

inline io::json swing_params_to_json(const SwingNetworkParams& p) {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    auto mat = [&](const Matrix& m) {
        io::json rows = io::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
        return rows;
    };
    return {{"M", vec(p.M)}, {"D", vec(p.D)}, {"Pm", vec(p.Pm)}, {"V", vec(p.V)},
            {"G", mat(p.G)}, {"B", mat(p.B)}, {"reference", p.reference + 1}, {"h", p.h}};
}

/// Electrical power P_e,i = V_i sum_j V_j (G_ij cos(d_i - d_j) + B_ij sin(d_i - d_j)).
inline Vector swing_electrical_power(const SwingNetworkParams& p, const Vector& delta) {
    const auto g = p.generators();
    Vector pe = Vector::Zero(g);
    for (Eigen::Index i = 0; i < g; ++i)
        for (Eigen::Index j = 0; j < g; ++j) {
            const double d = delta(i) - delta(j);
            pe(i) += p.V(i) * p.V(j) * (p.G(i, j) * std::cos(d) + p.B(i, j) * std::sin(d));
        }
    return pe;
}

/// Absolute state s = [delta_1..delta_G, omega_1..omega_G]; u has one entry
/// per generator and is added to both derivatives.
inline Vector swing_rhs(const SwingNetworkParams& p, const Vector& s, const Vector& u) {
    const auto g = p.generators();
    const Vector delta = s.head(g);
    const Vector omega = s.tail(g);
    const Vector pe = swing_electrical_power(p, delta);
    Vector ds(2 * g);
    ds.head(g) = omega + u;
    ds.tail(g) = (-p.D.cwiseProduct(omega) + p.Pm - pe).cwiseQuotient(p.M) + u;
    return ds;
}

inline Vector rk4_step(const SwingNetworkParams& p, const Vector& s, const Vector& u, double h) {
    const Vector k1 = swing_rhs(p, s, u);
    const Vector k2 = swing_rhs(p, s + 0.5 * h * k1, u);
    const Vector k3 = swing_rhs(p, s + 0.5 * h * k2, u);
    const Vector k4 = swing_rhs(p, s + h * k3, u);
    return s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Absolute states sampled every second for T seconds (2G x (T+1)), with the
/// disturbance of non-reference generator i held over [t, t+1).
inline Matrix swing_absolute_samples(const SwingNetworkParams& p, const Vector& state0, const InputSignal& disturbance,
                                     std::size_t seconds, double h) {
    p.validate();
    const auto g = p.generators();
    detail::require(state0.size() == 2 * g, "dimension_mismatch", "swing state0 must be [delta; omega] for all generators");
    detail::require(disturbance.channels() == p.input_dim(), "dimension_mismatch",
                    "swing disturbance needs one channel per non-reference generator");
    const double per = 1.0 / h;
    detail::require(h > 0.0 && std::abs(per - std::round(per)) < 1e-9, "invalid_argument", "1 / h must be an integer");
    const auto substeps = static_cast<std::size_t>(std::llround(per));
    const auto others = p.others();
    Matrix out(2 * g, static_cast<Eigen::Index>(seconds) + 1);
    Vector s = state0;
    out.col(0) = s;
    for (std::size_t t = 0; t < seconds; ++t) {
        const Vector w = disturbance.at(t);
        Vector u = Vector::Zero(g);
        for (std::size_t k = 0; k < others.size(); ++k) u(others[k]) = w(static_cast<Eigen::Index>(k));
        for (std::size_t k = 0; k < substeps; ++k) s = rk4_step(p, s, u, h);
        check_divergence(s, t + 1);
        out.col(static_cast<Eigen::Index>(t) + 1) = s;
    }
    return out;
}

/// Relative coordinates: interleaved (delta_i - delta_ref, omega_i - omega_ref)
/// for each non-reference generator.
inline Matrix swing_relative(const SwingNetworkParams& p, const Matrix& absolute) {
    const auto g = p.generators();
    const auto ref = static_cast<Eigen::Index>(p.reference);
    const auto others = p.others();
    Matrix rel(p.state_dim(), absolute.cols());
    for (std::size_t k = 0; k < others.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(2 * k);
        rel.row(r) = absolute.row(others[k]) - absolute.row(ref);
        rel.row(r + 1) = absolute.row(g + others[k]) - absolute.row(g + ref);
    }
    return rel;
}

inline Trajectory swing_trajectory(const SwingNetworkParams& p, const Vector& state0, const InputSignal& disturbance,
                                   std::size_t seconds) {
    detail::require(seconds >= 1, "invalid_argument", "T must be at least 1");
    return {swing_relative(p, swing_absolute_samples(p, state0, disturbance, seconds, p.h)),
            disturbance.sequence(seconds)};
}

inline TrajectoryDataset simulate_swing(const SwingNetworkParams& p, const Vector& state0,
                                        const InputSignal& disturbance, std::size_t seconds) {
    return to_dataset({swing_trajectory(p, state0, disturbance, seconds)});
}

/// Units for partitioning swing states: one (angle, speed) pair per
/// non-reference generator.
inline std::vector<std::vector<std::size_t>> swing_generator_units(const SwingNetworkParams& p) {
    std::vector<std::vector<std::size_t>> units;
    for (Eigen::Index k = 0; k < p.input_dim(); ++k)
        units.push_back({static_cast<std::size_t>(2 * k), static_cast<std::size_t>(2 * k + 1)});
    return units;
}

/// Lossless first integral: kinetic energy minus mechanical work plus the
/// power-flow potential. Conserved when D = 0, G = 0 and u = 0.
inline double swing_energy(const SwingNetworkParams& p, const Vector& s) {
    const auto g = p.generators();
    double e = 0.0;
    for (Eigen::Index i = 0; i < g; ++i) {
        e += 0.5 * p.M(i) * s(g + i) * s(g + i) - p.Pm(i) * s(i);
        for (Eigen::Index j = i + 1; j < g; ++j) e -= p.V(i) * p.V(j) * p.B(i, j) * std::cos(s(i) - s(j));
    }
    return e;
}

/// Equilibrium angles with the reference angle pinned to 0 and zero speeds:
/// Newton on P_m,i = P_e,i for the non-reference generators.
inline Vector swing_equilibrium(const SwingNetworkParams& p) {
    p.validate();
    const auto g = p.generators();
    const auto others = p.others();
    const auto n = static_cast<Eigen::Index>(others.size());
    Vector delta = Vector::Zero(g);
    for (int iter = 0; iter < 100; ++iter) {
        const Vector pe = swing_electrical_power(p, delta);
        Vector f(n);
        Matrix jac(n, n);
        for (Eigen::Index a = 0; a < n; ++a) {
            const auto i = others[static_cast<std::size_t>(a)];
            f(a) = pe(i) - p.Pm(i);
            for (Eigen::Index b = 0; b < n; ++b) {
                const auto j = others[static_cast<std::size_t>(b)];
                if (i == j) {
                    double d = 0.0;
                    for (Eigen::Index k = 0; k < g; ++k) {
                        if (k == i) continue;
                        const double x = delta(i) - delta(k);
                        d += p.V(i) * p.V(k) * (-p.G(i, k) * std::sin(x) + p.B(i, k) * std::cos(x));
                    }
                    jac(a, b) = d;
                } else {
                    const double x = delta(i) - delta(j);
                    jac(a, b) = p.V(i) * p.V(j) * (p.G(i, j) * std::sin(x) - p.B(i, j) * std::cos(x));
                }
            }
        }
        if (f.norm() < 1e-13) break;
        const Vector step = jac.colPivHouseholderQr().solve(f);
        for (Eigen::Index a = 0; a < n; ++a) delta(others[static_cast<std::size_t>(a)]) -= step(a);
        detail::require(delta.allFinite(), "no_equilibrium", "equilibrium search diverged");
    }
    Vector s = Vector::Zero(2 * g);
    s.head(g) = delta;
    return s;
}

struct SwingDataOptions {
    std::size_t trajectories = 100;
    std::size_t seconds = 50;
    double angle_spread = 0.1;
    double speed_spread = 0.05;
    double disturbance_amplitude = 0.02;
    std::size_t disturbance_hold = 1;
    std::uint64_t seed = 1;
};

/// Random initial conditions around the equilibrium, each with its own
/// recorded random disturbance. Trajectories run concurrently; results are
/// independent of the worker count.
inline TrajectoryDataset swing_dataset(const SwingNetworkParams& p, const SwingDataOptions& o) {
    const Vector eq = swing_equilibrium(p);
    const auto g = p.generators();
    std::vector<Trajectory> trajectories(o.trajectories);
    parallel_for(o.trajectories, [&](std::size_t k) {
        std::seed_seq seq{static_cast<std::uint64_t>(o.seed), static_cast<std::uint64_t>(k)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal(0.0, 1.0);
        Vector s0 = eq;
        for (Eigen::Index i = 0; i < g; ++i) {
            s0(i) += o.angle_spread * normal(rng);
            s0(g + i) += o.speed_spread * normal(rng);
        }
        const auto signal =
            random_signal(p.input_dim(), o.seconds, o.disturbance_amplitude, o.disturbance_hold, rng());
        trajectories[k] = swing_trajectory(p, s0, signal, o.seconds);
    });
    return to_dataset(trajectories);
}

struct LtiSystem {
    Matrix A;
    Matrix B;
    Matrix C;
};

/// Standard-normal (A, B, C) with A rescaled to spectral radius rho_target.
inline LtiSystem random_stable_lti(Eigen::Index n, Eigen::Index m, Eigen::Index p, double rho_target,
                                   std::uint64_t seed) {
    detail::require(rho_target > 0.0 && rho_target < 1.0, "invalid_argument", "rho_target must be in (0, 1)");
    detail::require(n >= 1 && m >= 1 && p >= 1, "invalid_argument", "dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](Eigen::Index r, Eigen::Index c) {
        Matrix out(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) out(i, j) = normal(rng);
        return out;
    };
    LtiSystem sys;
    sys.A = draw(n, n);
    double rho = numerics::spectral_radius(sys.A);
    while (rho < 1e-8) {
        sys.A = draw(n, n);
        rho = numerics::spectral_radius(sys.A);
    }
    sys.A *= rho_target / rho;
    sys.B = draw(n, m);
    sys.C = draw(p, n);
    return sys;
}

/// x_{t+1} = A x_t + B w_t for the given input columns.
inline Trajectory simulate_lti(const LtiSystem& sys, const Vector& x0, const Matrix& inputs) {
    detail::require(x0.size() == sys.A.rows() && inputs.rows() == sys.B.cols(), "dimension_mismatch",
                    "LTI dimensions do not match");
    Trajectory tr{Matrix(sys.A.rows(), inputs.cols() + 1), inputs};
    tr.states.col(0) = x0;
    for (Eigen::Index t = 0; t < inputs.cols(); ++t) {
        tr.states.col(t + 1) = sys.A * tr.states.col(t) + sys.B * inputs.col(t);
        check_divergence(tr.states.col(t + 1), static_cast<std::size_t>(t) + 1);
    }
    return tr;
}

}  // namespace koopdec
