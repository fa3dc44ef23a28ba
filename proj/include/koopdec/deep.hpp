#pragma once

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "koopdec/koopman.hpp"

namespace koopdec {

struct DeepOptions {
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    double ridge = 1e-8;
    std::uint64_t seed = 1;
    /// Re-solve (K_x, K_u) in closed form after every epoch.
    bool refresh_operators = true;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 10.0;
};

namespace deep_detail {

inline std::size_t flat_size(const NetworkParams& p) { return p.parameter_count(); }

inline void pack(const std::vector<Matrix>& w, const std::vector<Vector>& b, Vector& out, Eigen::Index& pos) {
    for (std::size_t l = 0; l < w.size(); ++l) {
        out.segment(pos, w[l].size()) = Eigen::Map<const Vector>(w[l].data(), w[l].size());
        pos += w[l].size();
        out.segment(pos, b[l].size()) = b[l];
        pos += b[l].size();
    }
}

inline void unpack(const Vector& in, Eigen::Index& pos, NetworkParams& p) {
    for (std::size_t l = 0; l < p.depth(); ++l) {
        Eigen::Map<Vector>(p.weights[l].data(), p.weights[l].size()) = in.segment(pos, p.weights[l].size());
        pos += p.weights[l].size();
        p.biases[l] = in.segment(pos, p.biases[l].size());
        pos += p.biases[l].size();
    }
}

/// Mean over the batch of ||psi_x(x') - K_x psi_x(x) - K_u psi_u(w)||^2,
/// all in normalized coordinates.
inline double objective(const ObservableDictionary& sd, const ObservableDictionary& id, const Matrix& kx,
                        const Matrix& ku, const Matrix& xs, const Matrix& ws, const Matrix& next) {
    if (xs.cols() == 0) return 0.0;
    const Matrix r = sd.lift_batch(next) - kx * sd.lift_batch(xs) - ku * id.lift_batch(ws);
    return r.squaredNorm() / static_cast<double>(xs.cols());
}

struct Adam {
    Vector m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t t = 0;

    explicit Adam(Eigen::Index n) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}

    void step(Vector& params, const Vector& grad, double lr) {
        ++t;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
};

}  // namespace deep_detail

/// Deep DMD with control. Jointly descends the lifted one-step objective over
/// (K_x, K_u, theta_x, theta_w) with mini-batch Adam, re-solving (K_x, K_u) in
/// closed form after each epoch. Epoch 0 is the closed-form EDMD fit on the
/// initial dictionaries. The returned model is the iterate with the lowest
/// test loss (mean relative one-step state error on the test split, or the
/// train split when there is no test split).
inline KoopmanModel fit_deep(const TrajectoryDataset& data, const ObservableDictionary& state_dict,
                             const ObservableDictionary& input_dict, const DeepOptions& options = {}) {
    data.validate();
    detail::require(state_dict.kind() == DictionaryKind::neural, "wrong_kind",
                    "fit_deep needs a neural state dictionary");
    detail::require(options.batch_size >= 1, "invalid_argument", "batch size must be positive");
    detail::require(options.learning_rate > 0.0, "invalid_argument", "learning rate must be positive");
    const bool train_input = input_dict.kind() == DictionaryKind::neural;

    auto refresh = [&](const ObservableDictionary& sd, const ObservableDictionary& id) {
        return fit_edmd(data, sd, id, std::nullopt, {options.ridge, true});
    };
    auto test_loss = [&](const KoopmanModel& m) {
        return data.test.empty() ? m.report.train_state_error : m.report.test_state_error;
    };

    Matrix tr_x, tr_w, tr_next, te_x, te_w, te_next;
    data.gather(data.train, tr_x, tr_w, tr_next);
    data.gather(data.test, te_x, te_w, te_next);
    tr_x = data.scale.normalize_states(tr_x);
    tr_next = data.scale.normalize_states(tr_next);
    tr_w = data.scale.normalize_inputs(tr_w);

    KoopmanModel current = refresh(state_dict, input_dict);
    NetworkParams theta_x = state_dict.network();
    NetworkParams theta_w = train_input ? input_dict.network() : NetworkParams{};

    std::vector<TrainingLogEntry> log;
    auto record = [&](std::size_t epoch, const KoopmanModel& m) {
        const double train = deep_detail::objective(m.state_dict, m.input_dict, m.K_x, m.K_u, tr_x, tr_w, tr_next);
        log.push_back({epoch, train, test_loss(m)});
        return train;
    };
    record(0, current);
    KoopmanModel best = current;
    double best_loss = test_loss(current);
    std::string diagnostic;

    const Eigen::Index nx = static_cast<Eigen::Index>(deep_detail::flat_size(theta_x));
    const Eigen::Index nw = train_input ? static_cast<Eigen::Index>(deep_detail::flat_size(theta_w)) : 0;
    const Eigen::Index nkx = current.K_x.size();
    const Eigen::Index nku = current.K_u.size();
    deep_detail::Adam adam(nx + nw + nkx + nku);
    std::mt19937_64 rng(options.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(tr_x.cols()));
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= options.epochs && diagnostic.empty(); ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        Matrix kx = current.K_x, ku = current.K_u;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            const auto b = static_cast<Eigen::Index>(end - start);
            Matrix bx(tr_x.rows(), b), bw(tr_w.rows(), b), bn(tr_next.rows(), b);
            for (Eigen::Index c = 0; c < b; ++c) {
                const auto src = order[start + static_cast<std::size_t>(c)];
                bx.col(c) = tr_x.col(src);
                bw.col(c) = tr_w.col(src);
                bn.col(c) = tr_next.col(src);
            }
            const auto& sd = current.state_dict;
            const auto& id = current.input_dict;
            const Matrix zx = sd.lift_batch(bx);
            const Matrix zn = sd.lift_batch(bn);
            const Matrix zu = id.lift_batch(bw);
            const Matrix r = zn - kx * zx - ku * zu;
            const double scale = 2.0 / static_cast<double>(b);

            Vector grad(adam.m.size());
            Eigen::Index pos = 0;
            NetworkGradient gx = sd.parameter_gradient_batch(bn, scale * r);
            gx += sd.parameter_gradient_batch(bx, -scale * (kx.transpose() * r));
            deep_detail::pack(gx.weights, gx.biases, grad, pos);
            if (train_input) {
                NetworkGradient gw = id.parameter_gradient_batch(bw, -scale * (ku.transpose() * r));
                deep_detail::pack(gw.weights, gw.biases, grad, pos);
            }
            const Matrix gkx = -scale * r * zx.transpose();
            const Matrix gku = -scale * r * zu.transpose();
            grad.segment(pos, nkx) = Eigen::Map<const Vector>(gkx.data(), nkx);
            pos += nkx;
            grad.segment(pos, nku) = Eigen::Map<const Vector>(gku.data(), nku);

            if (!grad.allFinite()) {
                diagnostic = "non-finite gradient at epoch " + std::to_string(epoch);
                break;
            }
            const double gnorm = grad.norm();
            if (options.clip_norm > 0.0 && gnorm > options.clip_norm) grad *= options.clip_norm / gnorm;

            Vector params(adam.m.size());
            pos = 0;
            deep_detail::pack(theta_x.weights, theta_x.biases, params, pos);
            if (train_input) deep_detail::pack(theta_w.weights, theta_w.biases, params, pos);
            params.segment(pos, nkx) = Eigen::Map<const Vector>(kx.data(), nkx);
            params.segment(pos + nkx, nku) = Eigen::Map<const Vector>(ku.data(), nku);

            adam.step(params, grad, options.learning_rate);
            if (!params.allFinite()) {
                diagnostic = "non-finite parameters at epoch " + std::to_string(epoch);
                break;
            }
            pos = 0;
            deep_detail::unpack(params, pos, theta_x);
            if (train_input) deep_detail::unpack(params, pos, theta_w);
            Eigen::Map<Vector>(kx.data(), nkx) = params.segment(pos, nkx);
            Eigen::Map<Vector>(ku.data(), nku) = params.segment(pos + nkx, nku);

            current.state_dict = current.state_dict.with_network(theta_x);
            if (train_input) current.input_dict = current.input_dict.with_network(theta_w);
        }
        if (!diagnostic.empty()) break;

        KoopmanModel next = current;
        if (options.refresh_operators) {
            next = refresh(current.state_dict, current.input_dict);
        } else {
            next.K_x = kx;
            next.K_u = ku;
            fill_error_report(next, data);
        }
        const double train = record(epoch, next);
        if (!std::isfinite(train) || !std::isfinite(log.back().test_loss)) {
            diagnostic = "loss became non-finite at epoch " + std::to_string(epoch);
            log.pop_back();
            break;
        }
        current = std::move(next);
        if (log.back().test_loss < best_loss) {
            best_loss = log.back().test_loss;
            best = current;
            best.report.best_epoch = epoch;
        }
    }

    best.report.method = "deep";
    best.report.ridge = options.ridge;
    best.report.diagnostic = diagnostic;
    best.report.log = std::move(log);
    return best;
}

inline std::string training_log_csv(const FitReport& report) {
    std::string out = "epoch,train_loss,test_loss\n";
    for (const auto& e : report.log)
        out += std::to_string(e.epoch) + ',' + io::format_real(e.train_loss) + ',' + io::format_real(e.test_loss) + '\n';
    return out;
}

}  // namespace koopdec
