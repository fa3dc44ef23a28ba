#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "koopdec/koopman.hpp"
#include "koopdec/numerics.hpp"

namespace koopdec {

enum class GramianMethod { lyapunov_exact, finite_horizon };

inline constexpr std::size_t kDefaultGramianHorizon = 200;
inline constexpr double kControllabilityPinvTolerance = 1e-10;

/// Observability / controllability Gramians of the lifted system
/// (K_x, B, W_h) with B = model.input_matrix():
///   X_o = sum_t (K_x^T)^t W_h^T W_h K_x^t
///   X_c = sum_t K_x^t B B^T (K_x^T)^t
struct KoopmanGramians {
    Matrix X_o;
    Matrix X_c;
    Matrix X_c_pinv;
    GramianMethod method = GramianMethod::lyapunov_exact;
    std::size_t horizon = 0;  // number of summed terms for finite_horizon
    double spectral_radius_Kx = 0.0;
};

/// Truncated sums over t = 0 .. horizon-1.
inline std::pair<Matrix, Matrix> finite_horizon_gramians(const Matrix& kx, const Matrix& b, const Matrix& w_h,
                                                         std::size_t horizon) {
    const auto nl = kx.rows();
    Matrix xo = Matrix::Zero(nl, nl), xc = Matrix::Zero(nl, nl);
    Matrix obs = w_h;  // W_h K_x^t
    Matrix ctr = b;    // K_x^t B
    for (std::size_t t = 0; t < horizon; ++t) {
        xo.noalias() += obs.transpose() * obs;
        xc.noalias() += ctr * ctr.transpose();
        obs = obs * kx;
        ctr = kx * ctr;
    }
    return {0.5 * (xo + xo.transpose()), 0.5 * (xc + xc.transpose())};
}

inline KoopmanGramians compute_gramians(const KoopmanModel& model,
                                        std::optional<std::size_t> horizon_override = std::nullopt) {
    model.validate();
    const Matrix b = model.input_matrix();
    KoopmanGramians g;
    g.spectral_radius_Kx = numerics::spectral_radius(model.K_x);
    if (!horizon_override && g.spectral_radius_Kx < 1.0 - numerics::kDefaultStabilityMargin) {
        g.method = GramianMethod::lyapunov_exact;
        g.X_o = numerics::solve_discrete_lyapunov(model.K_x.transpose(), model.W_h.transpose() * model.W_h);
        g.X_c = numerics::solve_discrete_lyapunov(model.K_x, b * b.transpose());
    } else {
        g.method = GramianMethod::finite_horizon;
        g.horizon = horizon_override.value_or(kDefaultGramianHorizon);
        std::tie(g.X_o, g.X_c) = finite_horizon_gramians(model.K_x, b, model.W_h, g.horizon);
        detail::require(g.X_o.allFinite() && g.X_c.allFinite(), "non_finite",
                        "finite-horizon Gramian overflowed; reduce the horizon");
    }
    g.X_c_pinv = numerics::pseudo_inverse(g.X_c, kControllabilityPinvTolerance);
    return g;
}

inline std::string to_string(GramianMethod m) {
    return m == GramianMethod::lyapunov_exact ? "lyapunov_exact" : "finite_horizon";
}

inline io::json gramian_metadata(const KoopmanGramians& g) {
    return {{"method", to_string(g.method)},
            {"horizon", g.horizon},
            {"spectral_radius_Kx", io::round12(g.spectral_radius_Kx)},
            {"lifted_dim", g.X_o.rows()}};
}

/// psi_x(x0)^T X_o psi_x(x0) for x0 in original units.
inline double output_energy(const KoopmanModel& model, const KoopmanGramians& grams, const Vector& x0) {
    const Vector z = model.state_dict.lift(model.scale.normalize_state(x0));
    return z.dot(grams.X_o * z);
}

struct InputEnergy {
    double energy = 0.0;
    /// psi_x(x0) has a component outside range(X_c).
    bool unreachable = false;
};

inline InputEnergy min_input_energy(const KoopmanModel& model, const KoopmanGramians& grams, const Vector& x0) {
    const Vector z = model.state_dict.lift(model.scale.normalize_state(x0));
    InputEnergy out;
    out.energy = z.dot(grams.X_c_pinv * z);
    const Vector residual = z - grams.X_c * (grams.X_c_pinv * z);
    out.unreachable = residual.norm() > 1e-8 * z.norm();
    return out;
}

/// A subset of the n state coordinates, as sorted 0-based indices.
using StateSubset = std::vector<std::size_t>;

inline std::string subset_label(const StateSubset& s) {
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i] + 1);
    return out + "}";
}

namespace gramian_detail {

/// Indicator vector of S in the model's (normalized) state coordinates.
inline Vector indicator(Eigen::Index n, const StateSubset& s, bool complement) {
    Vector v = Vector::Constant(n, complement ? 1.0 : 0.0);
    for (auto i : s) {
        detail::require(static_cast<Eigen::Index>(i) < n, "invalid_subset", "state index out of range");
        v(static_cast<Eigen::Index>(i)) = complement ? 0.0 : 1.0;
    }
    return v;
}

inline void check_subset(Eigen::Index n, const StateSubset& s) {
    detail::require(!s.empty(), "invalid_subset",
                    "empty subset: complement indicator is the full set; kappa undefined");
    detail::require(static_cast<Eigen::Index>(s.size()) < n, "invalid_subset",
                    "subset equals the full state set: complement indicator is the zero vector; kappa undefined");
    for (std::size_t k = 1; k < s.size(); ++k)
        detail::require(s[k - 1] < s[k], "invalid_subset", "subset must be sorted without duplicates");
}

inline double kappa_ratio(const KoopmanModel& model, const Matrix& gram, const StateSubset& s) {
    const auto n = model.state_dim();
    check_subset(n, s);
    const Vector in = model.state_dict.lift(indicator(n, s, false));
    const Vector out = model.state_dict.lift(indicator(n, s, true));
    const double num = in.dot(gram * in);
    const double den = out.dot(gram * out);
    detail::require(std::abs(den) >= 1e-14, "degenerate_denominator",
                    "kappa denominator below 1e-14 for subset " + subset_label(s));
    return num / den;
}

}  // namespace gramian_detail

/// q_o(psi_x(I_S)) / q_o(psi_x(1 - I_S)) with q_o(z) = z^T X_o z. The
/// dictionary is evaluated at the indicator vector itself.
inline double kappa_o(const KoopmanModel& model, const KoopmanGramians& grams, const StateSubset& s) {
    return gramian_detail::kappa_ratio(model, grams.X_o, s);
}

/// As kappa_o with the pseudo-inverse of X_c.
inline double kappa_c(const KoopmanModel& model, const KoopmanGramians& grams, const StateSubset& s) {
    return gramian_detail::kappa_ratio(model, grams.X_c_pinv, s);
}

/// Means of kappa_o and kappa_c over the n singleton subsets (or over the
/// supplied unit subsets).
struct KappaNormalization {
    double mean_o = 1.0;
    double mean_c = 1.0;
};

struct SubsetScore {
    StateSubset subset;
    double kappa_o = 0.0;
    double kappa_c = 0.0;
    double kappa = 0.0;
    double lambda = 1.0;
    KappaNormalization normalization;
};

inline SubsetScore kappa_combined(const KoopmanModel& model, const KoopmanGramians& grams, const StateSubset& s,
                                  double lambda, const KappaNormalization& norm) {
    detail::require(norm.mean_o > 0.0 && norm.mean_c > 0.0, "invalid_normalization",
                    "kappa normalization means must be positive");
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "invalid_argument", "lambda must be nonnegative");
    SubsetScore score;
    score.subset = s;
    score.kappa_o = kappa_o(model, grams, s);
    score.kappa_c = kappa_c(model, grams, s);
    score.kappa = score.kappa_o / norm.mean_o + lambda * score.kappa_c / norm.mean_c;
    score.lambda = lambda;
    score.normalization = norm;
    return score;
}

inline KappaNormalization singleton_normalization(const KoopmanModel& model, const KoopmanGramians& grams,
                                                  const std::vector<StateSubset>& units) {
    detail::require(!units.empty(), "invalid_argument", "need at least one unit for normalization");
    KappaNormalization norm{0.0, 0.0};
    for (const auto& u : units) {
        norm.mean_o += kappa_o(model, grams, u);
        norm.mean_c += kappa_c(model, grams, u);
    }
    norm.mean_o /= static_cast<double>(units.size());
    norm.mean_c /= static_cast<double>(units.size());
    return norm;
}

inline std::vector<StateSubset> singleton_units(Eigen::Index n) {
    std::vector<StateSubset> units;
    for (Eigen::Index i = 0; i < n; ++i) units.push_back({static_cast<std::size_t>(i)});
    return units;
}

inline KappaNormalization singleton_normalization(const KoopmanModel& model, const KoopmanGramians& grams) {
    return singleton_normalization(model, grams, singleton_units(model.state_dim()));
}

/// CSV rows (subset, kappa_o, kappa_c, kappa); subsets are 1-based and
/// space-separated inside braces.
inline std::string kappa_report_csv(const std::vector<SubsetScore>& scores) {
    std::string out = "subset,kappa_o,kappa_c,kappa\n";
    for (const auto& s : scores)
        out += subset_label(s.subset) + ',' + io::format_real(s.kappa_o) + ',' + io::format_real(s.kappa_c) + ',' +
               io::format_real(s.kappa) + '\n';
    return out;
}

}  // namespace koopdec
