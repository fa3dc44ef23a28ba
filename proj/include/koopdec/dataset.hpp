#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "koopdec/matrix_io.hpp"
#include "koopdec/numerics.hpp"

namespace koopdec {

/// One transition (x_t, w_t) -> x_{t+1}, tagged with its trajectory and time.
struct Snapshot {
    Vector x;
    Vector w;
    Vector x_next;
    std::size_t trajectory = 0;
    std::size_t time = 0;
};

/// Affine state scaling x_n = (x - offset) / factor and a pure input scaling
/// w_n = w / input_factor, so that w = 0 stays at zero.
struct Normalization {
    Vector state_offset;
    Vector state_factor;
    Vector input_factor;

    static Normalization identity(Eigen::Index n, Eigen::Index m) {
        return {Vector::Zero(n), Vector::Ones(n), Vector::Ones(m)};
    }

    bool is_identity() const {
        return state_offset.isZero(0.0) && (state_factor.array() == 1.0).all() &&
               (input_factor.array() == 1.0).all();
    }

    void validate() const {
        detail::require(state_offset.size() == state_factor.size(), "invalid_normalization",
                        "offset and factor lengths differ");
        detail::require((state_factor.array() > 0.0).all() && (input_factor.array() > 0.0).all(),
                        "invalid_normalization", "normalization factors must be positive");
        numerics::require_finite(state_offset, "normalization offset");
        numerics::require_finite(state_factor, "normalization factor");
        numerics::require_finite(input_factor, "normalization input factor");
    }

    Vector normalize_state(const Vector& x) const {
        return (x - state_offset).cwiseQuotient(state_factor);
    }
    Vector denormalize_state(const Vector& z) const {
        return z.cwiseProduct(state_factor) + state_offset;
    }
    Vector normalize_input(const Vector& w) const { return w.cwiseQuotient(input_factor); }
    Vector denormalize_input(const Vector& w) const { return w.cwiseProduct(input_factor); }

    Matrix normalize_states(const Matrix& xs) const {
        Matrix out = xs.colwise() - state_offset;
        return state_factor.cwiseInverse().asDiagonal() * out;
    }
    Matrix normalize_inputs(const Matrix& ws) const {
        return input_factor.cwiseInverse().asDiagonal() * ws;
    }

    io::json to_json() const {
        return {{"state_offset", io::vector_to_json(state_offset)},
                {"state_factor", io::vector_to_json(state_factor)},
                {"input_factor", io::vector_to_json(input_factor)}};
    }
    static Normalization from_json(const io::json& j) {
        Normalization n{io::vector_from_json(j.at("state_offset")), io::vector_from_json(j.at("state_factor")),
                        io::vector_from_json(j.at("input_factor"))};
        n.validate();
        return n;
    }
};

struct TrajectoryDataset {
    std::vector<Snapshot> snapshots;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    Normalization scale;

    Eigen::Index state_dim() const { return snapshots.empty() ? 0 : snapshots.front().x.size(); }
    Eigen::Index input_dim() const { return snapshots.empty() ? 0 : snapshots.front().w.size(); }

    std::size_t trajectory_count() const {
        std::set<std::size_t> ids;
        for (const auto& s : snapshots) ids.insert(s.trajectory);
        return ids.size();
    }

    void validate() const {
        detail::require(!snapshots.empty(), "empty_dataset", "dataset has no snapshots");
        const auto n = state_dim();
        const auto m = input_dim();
        for (const auto& s : snapshots) {
            detail::require(s.x.size() == n && s.x_next.size() == n && s.w.size() == m, "dimension_mismatch",
                            "snapshot dimensions are inconsistent");
            numerics::require_finite(s.x, "snapshot state");
            numerics::require_finite(s.w, "snapshot input");
            numerics::require_finite(s.x_next, "snapshot next state");
        }
        std::set<std::size_t> tr(train.begin(), train.end());
        for (auto i : test) detail::require(!tr.count(i), "invalid_split", "train and test splits overlap");
        for (auto i : train) detail::require(i < snapshots.size(), "invalid_split", "train index out of range");
        for (auto i : test) detail::require(i < snapshots.size(), "invalid_split", "test index out of range");
        detail::require(scale.state_factor.size() == n && scale.input_factor.size() == m,
                        "invalid_normalization", "normalization does not match dataset dimensions");
        scale.validate();
    }

    /// Columns of the selected snapshots: (x, w, x_next), unnormalized.
    void gather(const std::vector<std::size_t>& idx, Matrix& xs, Matrix& ws, Matrix& next) const {
        const auto cols = static_cast<Eigen::Index>(idx.size());
        xs.resize(state_dim(), cols);
        ws.resize(input_dim(), cols);
        next.resize(state_dim(), cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& s = snapshots[idx[static_cast<std::size_t>(c)]];
            xs.col(c) = s.x;
            ws.col(c) = s.w;
            next.col(c) = s.x_next;
        }
    }
};

/// Appends one trajectory: states n x (T+1), inputs m x T.
inline void append_trajectory(TrajectoryDataset& data, const Matrix& states, const Matrix& inputs,
                              std::size_t trajectory_id) {
    detail::require(states.cols() == inputs.cols() + 1, "dimension_mismatch",
                    "trajectory needs one more state than inputs");
    for (Eigen::Index t = 0; t < inputs.cols(); ++t) {
        data.snapshots.push_back(
            {states.col(t), inputs.col(t), states.col(t + 1), trajectory_id, static_cast<std::size_t>(t)});
    }
    if (data.scale.state_factor.size() != states.rows())
        data.scale = Normalization::identity(states.rows(), inputs.rows());
}

/// Train on the first `train_count` snapshots in storage order, test on the rest.
inline void split_first(TrajectoryDataset& data, std::size_t train_count) {
    detail::require(train_count <= data.snapshots.size(), "invalid_split", "train count exceeds dataset");
    data.train.clear();
    data.test.clear();
    for (std::size_t i = 0; i < data.snapshots.size(); ++i) (i < train_count ? data.train : data.test).push_back(i);
}

/// Whole trajectories with id < train_trajectories go to train.
inline void split_by_trajectory(TrajectoryDataset& data, std::size_t train_trajectories) {
    data.train.clear();
    data.test.clear();
    for (std::size_t i = 0; i < data.snapshots.size(); ++i)
        (data.snapshots[i].trajectory < train_trajectories ? data.train : data.test).push_back(i);
}

/// Mean/standard-deviation state scaling and RMS input scaling from the train
/// split. Degenerate coordinates keep factor 1.
inline Normalization fit_normalization(const TrajectoryDataset& data) {
    detail::require(!data.train.empty(), "invalid_split", "normalization needs a train split");
    Matrix xs, ws, next;
    data.gather(data.train, xs, ws, next);
    const double count = static_cast<double>(xs.cols());
    Normalization n;
    n.state_offset = xs.rowwise().mean();
    n.state_factor = ((xs.colwise() - n.state_offset).array().square().rowwise().sum() / count).sqrt();
    n.input_factor = (ws.array().square().rowwise().sum() / count).sqrt();
    for (Eigen::Index i = 0; i < n.state_factor.size(); ++i)
        if (!(n.state_factor(i) > 1e-12)) n.state_factor(i) = 1.0;
    for (Eigen::Index i = 0; i < n.input_factor.size(); ++i)
        if (!(n.input_factor(i) > 1e-12)) n.input_factor(i) = 1.0;
    return n;
}

/// CSV with header t,x_1..x_n,w_1..w_m; one row per time step. Each
/// trajectory lists states x_0..x_T; the input on the final row is unused and
/// written as 0. A row whose t is not the previous t + 1 starts a new
/// trajectory.
inline std::string trajectories_to_csv(const TrajectoryDataset& data) {
    const auto n = data.state_dim();
    const auto m = data.input_dim();
    std::string out = "t";
    for (Eigen::Index i = 0; i < n; ++i) out += ",x_" + std::to_string(i + 1);
    for (Eigen::Index i = 0; i < m; ++i) out += ",w_" + std::to_string(i + 1);
    out += '\n';
    auto row = [&](std::size_t t, const Vector& x, const Vector& w) {
        out += std::to_string(t);
        for (Eigen::Index i = 0; i < n; ++i) out += ',' + io::format_real(x(i));
        for (Eigen::Index i = 0; i < m; ++i) out += ',' + io::format_real(w(i));
        out += '\n';
    };
    for (std::size_t k = 0; k < data.snapshots.size(); ++k) {
        const auto& s = data.snapshots[k];
        row(s.time, s.x, s.w);
        const bool last = k + 1 == data.snapshots.size() || data.snapshots[k + 1].trajectory != s.trajectory ||
                          data.snapshots[k + 1].time != s.time + 1;
        if (last) row(s.time + 1, s.x_next, Vector::Zero(m));
    }
    return out;
}

inline TrajectoryDataset trajectories_from_csv(const std::string& text, Eigen::Index state_dim,
                                               Eigen::Index input_dim) {
    std::istringstream in(text);
    std::string line;
    detail::require(static_cast<bool>(std::getline(in, line)), "parse_error", "empty trajectory CSV");
    const auto header = io::split_csv_line(line);
    detail::require(header.size() == static_cast<std::size_t>(1 + state_dim + input_dim) && header[0] == "t",
                    "parse_error", "trajectory CSV header must be t,x_1..x_n,w_1..w_m");
    struct Row {
        long t;
        Vector x, w;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = io::split_csv_line(line);
        detail::require(cells.size() == header.size(), "parse_error", "trajectory CSV row has wrong width");
        Row r{static_cast<long>(io::parse_real(cells[0])), Vector(state_dim), Vector(input_dim)};
        for (Eigen::Index i = 0; i < state_dim; ++i) r.x(i) = io::parse_real(cells[static_cast<std::size_t>(1 + i)]);
        for (Eigen::Index i = 0; i < input_dim; ++i)
            r.w(i) = io::parse_real(cells[static_cast<std::size_t>(1 + state_dim + i)]);
        rows.push_back(std::move(r));
    }
    TrajectoryDataset data;
    data.scale = Normalization::identity(state_dim, input_dim);
    std::size_t traj = 0;
    for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
        if (rows[k + 1].t != rows[k].t + 1) {
            ++traj;
            continue;
        }
        data.snapshots.push_back({rows[k].x, rows[k].w, rows[k + 1].x, traj, static_cast<std::size_t>(rows[k].t)});
    }
    // Renumber trajectories densely.
    std::size_t next_id = 0, last = static_cast<std::size_t>(-1);
    for (auto& s : data.snapshots) {
        if (s.trajectory != last) {
            last = s.trajectory;
            s.trajectory = next_id++;
        } else {
            s.trajectory = next_id - 1;
        }
    }
    return data;
}

}  // namespace koopdec
