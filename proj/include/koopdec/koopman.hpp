#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "koopdec/dataset.hpp"
#include "koopdec/dictionary.hpp"
#include "koopdec/matrix_io.hpp"
#include "koopdec/numerics.hpp"

namespace koopdec {

struct TrainingLogEntry {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
};

/// Errors are mean relative one-step errors. "lifted" compares
/// psi_x(x_next) with the model prediction in normalized lifted coordinates;
/// "state" compares the read-out state with x_next in original units
/// (vector 2-norm relative error).
struct FitReport {
    std::string method = "edmd";
    double ridge = 0.0;
    double train_lifted_error = 0.0;
    double test_lifted_error = 0.0;
    double train_state_error = 0.0;
    double test_state_error = 0.0;
    bool rank_deficient = false;
    std::size_t best_epoch = 0;
    std::string diagnostic;
    std::vector<TrainingLogEntry> log;
};

/// Affine Koopman control model
///   psi_x(x_{t+1}) = K_x psi_x(x_t) + K_u psi_u(w_t) [+ K_xw psi_xw(x_t, w_t)]
///   y_t = W_h psi_x(x_t)
/// acting on normalized coordinates (see `scale`).
struct KoopmanModel {
    ObservableDictionary state_dict;
    ObservableDictionary input_dict;
    std::optional<ObservableDictionary> cross_dict;
    Matrix K_x;
    Matrix K_u;
    std::optional<Matrix> K_xw;
    Matrix W_h;
    Normalization scale;
    FitReport report;

    Eigen::Index state_dim() const { return state_dict.input_dim(); }
    Eigen::Index input_dim() const { return input_dict.input_dim(); }
    Eigen::Index lifted_dim() const { return state_dict.lifted_dim(); }

    void validate() const {
        const auto nl = lifted_dim();
        detail::require(K_x.rows() == nl && K_x.cols() == nl, "dimension_mismatch", "K_x must be n_L x n_L");
        detail::require(K_u.rows() == nl && K_u.cols() == input_dict.lifted_dim(), "dimension_mismatch",
                        "K_u must be n_L x m_L");
        detail::require(W_h.cols() == nl, "dimension_mismatch", "W_h must have n_L columns");
        detail::require(cross_dict.has_value() == K_xw.has_value(), "dimension_mismatch",
                        "K_xw present iff cross dictionary present");
        if (cross_dict) {
            detail::require(cross_dict->input_dim() == state_dim() + input_dim(), "dimension_mismatch",
                            "cross dictionary must act on (x, w)");
            detail::require(K_xw->rows() == nl && K_xw->cols() == cross_dict->lifted_dim(), "dimension_mismatch",
                            "K_xw must be n_L x c_L");
            numerics::require_finite(*K_xw, "K_xw");
        }
        numerics::require_finite(K_x, "K_x");
        numerics::require_finite(K_u, "K_u");
        numerics::require_finite(W_h, "W_h");
        detail::require(scale.state_factor.size() == state_dim() && scale.input_factor.size() == input_dim(),
                        "dimension_mismatch", "normalization does not match model dimensions");
    }

    /// Input matrix of the lifted linear system: [K_u | K_xw] when cross
    /// terms are modeled (they enter as augmented inputs), K_u otherwise.
    Matrix input_matrix() const {
        if (!K_xw) return K_u;
        Matrix b(K_u.rows(), K_u.cols() + K_xw->cols());
        b << K_u, *K_xw;
        return b;
    }

    /// Lifted one-step map from normalized (x, w).
    Vector step(const Vector& z, const Vector& x_norm, const Vector& w_norm) const {
        Vector next = K_x * z + K_u * input_dict.lift(w_norm);
        if (cross_dict) {
            Vector xw(x_norm.size() + w_norm.size());
            xw << x_norm, w_norm;
            next += *K_xw * cross_dict->lift(xw);
        }
        return next;
    }
};

namespace koopman_detail {

inline void check_dictionaries(const ObservableDictionary& state_dict, const ObservableDictionary& input_dict,
                               const std::optional<ObservableDictionary>& cross_dict, Eigen::Index n,
                               Eigen::Index m) {
    detail::require(state_dict.state_inclusive() && input_dict.state_inclusive(), "not_state_inclusive",
                    "state and input dictionaries must be state-inclusive");
    detail::require(state_dict.input_dim() == n, "dimension_mismatch", "state dictionary does not match n");
    detail::require(input_dict.input_dim() == m, "dimension_mismatch", "input dictionary does not match m");
    detail::require(input_dict.lift(Vector::Zero(m)).isZero(0.0), "input_dictionary_offset",
                    "input dictionary must vanish at w = 0 (drop constant input features)");
    if (cross_dict) {
        detail::require(cross_dict->kind() == DictionaryKind::mixed_polynomial &&
                            cross_dict->input_dim() == n + m && cross_dict->state_dim() == n,
                        "dimension_mismatch", "cross dictionary must be mixed_polynomial over (x, w)");
    }
}

/// Lifted regressors [psi_x(x); psi_u(w); psi_xw(x, w)] and targets
/// psi_x(x_next) in normalized coordinates.
inline void build_regression(const TrajectoryDataset& data, const std::vector<std::size_t>& idx,
                             const ObservableDictionary& state_dict, const ObservableDictionary& input_dict,
                             const std::optional<ObservableDictionary>& cross_dict, Matrix& regressors,
                             Matrix& targets) {
    Matrix xs, ws, next;
    data.gather(idx, xs, ws, next);
    xs = data.scale.normalize_states(xs);
    next = data.scale.normalize_states(next);
    ws = data.scale.normalize_inputs(ws);
    const Matrix zx = state_dict.lift_batch(xs);
    const Matrix zu = input_dict.lift_batch(ws);
    Matrix zxw;
    if (cross_dict) {
        Matrix xw(xs.rows() + ws.rows(), xs.cols());
        xw << xs, ws;
        zxw = cross_dict->lift_batch(xw);
    }
    regressors.resize(zx.rows() + zu.rows() + zxw.rows(), xs.cols());
    regressors.topRows(zx.rows()) = zx;
    regressors.middleRows(zx.rows(), zu.rows()) = zu;
    if (cross_dict) regressors.bottomRows(zxw.rows()) = zxw;
    targets = state_dict.lift_batch(next);
}

inline double safe_ratio(double num, double den) {
    if (den <= 0.0) return num <= 0.0 ? 0.0 : num / 1e-300;
    return num / den;
}

}  // namespace koopman_detail

/// Mean relative one-step errors of `model` on the given snapshots:
/// {lifted, state}. Returns {0, 0} for an empty selection.
inline std::pair<double, double> one_step_errors(const KoopmanModel& model, const TrajectoryDataset& data,
                                                 const std::vector<std::size_t>& idx) {
    if (idx.empty()) return {0.0, 0.0};
    double lifted = 0.0, state = 0.0;
    const auto n = model.state_dim();
    for (auto i : idx) {
        const auto& s = data.snapshots[i];
        const Vector xn = model.scale.normalize_state(s.x);
        const Vector wn = model.scale.normalize_input(s.w);
        const Vector target = model.state_dict.lift(model.scale.normalize_state(s.x_next));
        const Vector pred = model.step(model.state_dict.lift(xn), xn, wn);
        lifted += koopman_detail::safe_ratio((target - pred).norm(), target.norm());
        const Vector x_pred = model.scale.denormalize_state(pred.head(n));
        state += koopman_detail::safe_ratio((s.x_next - x_pred).norm(), s.x_next.norm());
    }
    const double count = static_cast<double>(idx.size());
    return {lifted / count, state / count};
}

inline void fill_error_report(KoopmanModel& model, const TrajectoryDataset& data) {
    std::tie(model.report.train_lifted_error, model.report.train_state_error) =
        one_step_errors(model, data, data.train);
    std::tie(model.report.test_lifted_error, model.report.test_state_error) = one_step_errors(model, data, data.test);
}

struct EdmdOptions {
    double ridge = 1e-8;
    /// With ridge == 0 and rank-deficient regressors, return the minimum-norm
    /// fit instead of failing.
    bool accept_min_norm = false;
};

/// Closed-form EDMD with control: one least-squares solve over the train
/// split, sliced into (K_x, K_u, K_xw). W_h defaults to the state read-out
/// [I_n | 0].
inline KoopmanModel fit_edmd(const TrajectoryDataset& data, const ObservableDictionary& state_dict,
                             const ObservableDictionary& input_dict,
                             const std::optional<ObservableDictionary>& cross_dict = std::nullopt,
                             EdmdOptions options = {}) {
    data.validate();
    const auto n = data.state_dim();
    const auto m = data.input_dim();
    koopman_detail::check_dictionaries(state_dict, input_dict, cross_dict, n, m);
    const auto nl = state_dict.lifted_dim();
    const auto ml = input_dict.lifted_dim();
    const auto cl = cross_dict ? cross_dict->lifted_dim() : 0;
    detail::require(static_cast<Eigen::Index>(data.train.size()) >= nl + ml + cl, "insufficient_snapshots",
                    "need at least " + std::to_string(nl + ml + cl) + " training snapshots, have " +
                        std::to_string(data.train.size()));

    Matrix regressors, targets;
    koopman_detail::build_regression(data, data.train, state_dict, input_dict, cross_dict, regressors, targets);
    const auto ls = numerics::solve_least_squares(targets, regressors, options.ridge);
    if (ls.rank_deficient && !options.accept_min_norm) {
        detail::fail("rank_deficient", "rank-deficient; supply ridge or accept minimum-norm solution");
    }

    Matrix w_h = Matrix::Zero(n, nl);
    w_h.leftCols(n).setIdentity();
    KoopmanModel model{state_dict,
                       input_dict,
                       cross_dict,
                       ls.solution.leftCols(nl),
                       ls.solution.middleCols(nl, ml),
                       cross_dict ? std::optional<Matrix>(ls.solution.rightCols(cl)) : std::nullopt,
                       w_h,
                       data.scale,
                       {}};
    model.report.method = "edmd";
    model.report.ridge = options.ridge;
    model.report.rank_deficient = ls.rank_deficient;
    fill_error_report(model, data);
    return model;
}

/// Least-squares W_h minimizing sum_t ||y_t - W_h psi_x(x_t)||^2 over all
/// snapshots; `outputs` is aligned with data.snapshots.
inline Matrix fit_output_map(const TrajectoryDataset& data, const KoopmanModel& model,
                             const std::vector<Vector>& outputs) {
    detail::require(outputs.size() == data.snapshots.size(), "dimension_mismatch",
                    "outputs (" + std::to_string(outputs.size()) + ") misaligned with snapshots (" +
                        std::to_string(data.snapshots.size()) + ")");
    detail::require(!outputs.empty(), "empty_dataset", "no outputs to fit");
    const auto p = outputs.front().size();
    Matrix y(p, static_cast<Eigen::Index>(outputs.size()));
    Matrix xs(model.state_dim(), y.cols());
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
        detail::require(outputs[static_cast<std::size_t>(c)].size() == p, "dimension_mismatch",
                        "outputs differ in length");
        y.col(c) = outputs[static_cast<std::size_t>(c)];
        xs.col(c) = data.snapshots[static_cast<std::size_t>(c)].x;
    }
    const Matrix lifted = model.state_dict.lift_batch(model.scale.normalize_states(xs));
    return numerics::solve_least_squares(y, lifted, 0.0).solution;
}

enum class RolloutMode {
    /// z_{t+1} = K_x z_t + K_u psi_u(w_t) from z_0 = psi_x(x_0); states are
    /// read from the first n lifted coordinates and never re-lifted.
    lifted,
    /// Re-lifts the read-out state before every step.
    relift,
};

/// Multi-step prediction x_1..x_T (original units) from x0 and inputs w_0..w_{T-1}.
inline std::vector<Vector> predict_multistep(const KoopmanModel& model, const Vector& x0,
                                             const std::vector<Vector>& w_seq, std::size_t steps,
                                             RolloutMode mode = RolloutMode::lifted) {
    detail::require(x0.size() == model.state_dim(), "dimension_mismatch", "x0 does not match the model");
    detail::require(steps <= w_seq.size(), "dimension_mismatch", "fewer inputs than prediction steps");
    const auto n = model.state_dim();
    std::vector<Vector> out;
    out.reserve(steps);
    Vector x_norm = model.scale.normalize_state(x0);
    Vector z = model.state_dict.lift(x_norm);
    for (std::size_t t = 0; t < steps; ++t) {
        detail::require(w_seq[t].size() == model.input_dim(), "dimension_mismatch", "input has wrong length");
        if (mode == RolloutMode::relift) z = model.state_dict.lift(x_norm);
        z = model.step(z, x_norm, model.scale.normalize_input(w_seq[t]));
        x_norm = z.head(n);
        out.push_back(model.scale.denormalize_state(x_norm));
    }
    return out;
}

/// ||K_xw||_F / (||K_x||_F + ||K_u||_F + ||K_xw||_F).
inline double cross_term_ratio(const KoopmanModel& model) {
    detail::require(model.cross_dict.has_value() && model.K_xw.has_value(), "no_cross_dictionary",
                    "cross_term_ratio needs a model fitted with a cross dictionary");
    const double cross = model.K_xw->norm();
    const double total = model.K_x.norm() + model.K_u.norm() + cross;
    return total > 0.0 ? cross / total : 0.0;
}

inline io::json report_to_json(const FitReport& r) {
    io::json log = io::json::array();
    for (const auto& e : r.log) log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"test_loss", e.test_loss}});
    return {{"method", r.method},
            {"ridge", r.ridge},
            {"error_convention", "mean relative one-step error; lifted = normalized psi_x space, state = vector 2-norm in original units"},
            {"train_lifted_error", io::round12(r.train_lifted_error)},
            {"test_lifted_error", io::round12(r.test_lifted_error)},
            {"train_state_error", io::round12(r.train_state_error)},
            {"test_state_error", io::round12(r.test_state_error)},
            {"rank_deficient", r.rank_deficient},
            {"best_epoch", r.best_epoch},
            {"diagnostic", r.diagnostic},
            {"log_length", r.log.size()}};
}

inline io::json model_to_json(const KoopmanModel& model) {
    io::json j{{"state_dictionary", model.state_dict.to_json()},
               {"input_dictionary", model.input_dict.to_json()},
               {"K_x", io::matrix_to_json_exact(model.K_x)},
               {"K_u", io::matrix_to_json_exact(model.K_u)},
               {"W_h", io::matrix_to_json_exact(model.W_h)},
               {"normalization", model.scale.to_json()},
               {"fit_report", report_to_json(model.report)}};
    if (model.cross_dict) {
        j["cross_dictionary"] = model.cross_dict->to_json();
        j["K_xw"] = io::matrix_to_json_exact(*model.K_xw);
    }
    return j;
}

inline KoopmanModel model_from_json(const io::json& j) {
    std::optional<ObservableDictionary> cross;
    std::optional<Matrix> k_xw;
    if (j.contains("cross_dictionary")) {
        cross = ObservableDictionary::from_json(j.at("cross_dictionary"));
        k_xw = io::matrix_from_json(j.at("K_xw"));
    }
    KoopmanModel model{ObservableDictionary::from_json(j.at("state_dictionary")),
                       ObservableDictionary::from_json(j.at("input_dictionary")),
                       cross,
                       io::matrix_from_json(j.at("K_x")),
                       io::matrix_from_json(j.at("K_u")),
                       k_xw,
                       io::matrix_from_json(j.at("W_h")),
                       Normalization::from_json(j.at("normalization")),
                       {}};
    if (j.contains("fit_report")) {
        const auto& r = j.at("fit_report");
        model.report.method = r.value("method", "edmd");
        model.report.ridge = r.value("ridge", 0.0);
        model.report.train_lifted_error = r.value("train_lifted_error", 0.0);
        model.report.test_lifted_error = r.value("test_lifted_error", 0.0);
        model.report.train_state_error = r.value("train_state_error", 0.0);
        model.report.test_state_error = r.value("test_state_error", 0.0);
        model.report.rank_deficient = r.value("rank_deficient", false);
        model.report.best_epoch = r.value("best_epoch", std::size_t{0});
        model.report.diagnostic = r.value("diagnostic", "");
    }
    model.validate();
    return model;
}

}  // namespace koopdec
