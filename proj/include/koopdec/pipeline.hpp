#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "koopdec/deep.hpp"
#include "koopdec/partition.hpp"
#include "koopdec/systems.hpp"

namespace koopdec {

struct SystemConfig {
    std::string kind = "two_state";  // two_state | swing | lti | file
    // two_state
    TwoStateParams two_state;
    Vector x0 = (Vector(2) << 0.5, -0.1).finished();
    io::json signal = {{"kind", "step"}, {"t0", 250}, {"amplitude", {1.0}}};
    std::size_t steps = 500;
    // swing
    std::string network;
    SwingDataOptions swing;
    // lti
    Eigen::Index n = 4, m = 1, p = 1;
    double rho = 0.8;
    std::size_t trajectories = 10;
    double input_amplitude = 1.0;
    // file
    std::string path;
    Eigen::Index state_dim = 0, input_dim = 0;
};

struct DictionaryConfig {
    std::string kind = "identity";
    int degree = 2;
    bool include_constant = false;
    Eigen::Index centers = 10;
    double scale = 1.0;
    Eigen::Index features = 8;
    Eigen::Index width = 32;
    std::size_t depth = 2;
    Activation activation = Activation::tanh;
};

struct PipelineConfig {
    SystemConfig system;
    std::string split = "first";  // first | trajectory
    std::size_t train = 250;
    bool normalize = false;
    DictionaryConfig state_dict{"polynomial", 3};
    DictionaryConfig input_dict{"identity"};
    std::optional<DictionaryConfig> cross_dict;
    std::string method = "edmd";
    double ridge = 1e-8;
    DeepOptions deep;
    std::optional<std::size_t> horizon;
    std::size_t k = 2;
    double lambda = 1.0;
    PartitionObjective objective = PartitionObjective::spread;
    bool oracle = false;
    std::size_t group_size = 1;
    std::string adjacency;
    std::size_t prediction_trajectory = 0;
    std::size_t prediction_start = 0;
    std::optional<std::size_t> prediction_steps;
    RolloutMode prediction_mode = RolloutMode::lifted;
    std::uint64_t seed = 1;
    std::string output = "koopdec-run";
};

namespace config_detail {

inline void check_keys(const io::json& j, const std::set<std::string>& allowed, const std::string& where) {
    detail::require(j.is_object(), "invalid_config", where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        detail::require(allowed.count(key) > 0, "invalid_config", "unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read(const io::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const io::json::exception&) {
        detail::fail("invalid_config", where + "." + key + " has the wrong type");
    }
}

inline Vector read_vector(const io::json& j, const std::string& where) {
    detail::require(j.is_array(), "invalid_config", where + " must be an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        detail::require(j[i].is_number(), "invalid_config", where + " must be an array of numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline std::string resolve(const std::string& path, const std::filesystem::path& base) {
    if (path.empty()) return path;
    const std::filesystem::path p(path);
    return p.is_absolute() ? path : (base / p).lexically_normal().string();
}

inline DictionaryConfig parse_dictionary(const io::json& j, const std::string& where) {
    check_keys(j, {"kind", "degree", "include_constant", "centers", "scale", "features", "width", "depth", "activation"},
               where);
    DictionaryConfig d;
    read(j, "kind", d.kind, where);
    read(j, "degree", d.degree, where);
    read(j, "include_constant", d.include_constant, where);
    read(j, "centers", d.centers, where);
    read(j, "scale", d.scale, where);
    read(j, "features", d.features, where);
    read(j, "width", d.width, where);
    read(j, "depth", d.depth, where);
    std::string act = to_string(d.activation);
    read(j, "activation", act, where);
    d.activation = activation_from_string(act);
    static const std::set<std::string> kinds{"identity", "polynomial", "thin_plate_rbf", "neural", "mixed_polynomial"};
    detail::require(kinds.count(d.kind) > 0, "invalid_config", where + ".kind '" + d.kind + "' is not a dictionary");
    return d;
}

inline void validate_signal(const io::json& s) {
    check_keys(s, {"kind", "t0", "amplitude", "samples"}, "system.signal");
    const auto kind = s.value("kind", std::string("zero"));
    detail::require(kind == "zero" || kind == "step" || kind == "impulse" || kind == "recorded", "invalid_config",
                    "system.signal.kind must be zero, step, impulse or recorded");
}

}  // namespace config_detail

/// Validates the whole document before anything runs. Relative file paths
/// are resolved against `base_dir` (the config file's directory).
inline PipelineConfig parse_pipeline_config(const io::json& j, const std::filesystem::path& base_dir = ".") {
    using namespace config_detail;
    check_keys(j, {"system", "split", "normalize", "dictionaries", "fit", "gramians", "partition", "prediction", "seed",
                   "output"},
               "config");
    PipelineConfig c;
    detail::require(j.contains("system"), "invalid_config", "config.system is required");
    const auto& s = j.at("system");
    check_keys(s, {"kind", "params", "x0", "signal", "steps", "network", "trajectories", "seconds", "angle_spread",
                   "speed_spread", "disturbance_amplitude", "disturbance_hold", "n", "m", "p", "rho", "input_amplitude",
                   "path", "state_dim", "input_dim"},
               "system");
    read(s, "kind", c.system.kind, "system");
    static const std::set<std::string> systems{"two_state", "swing", "lti", "file"};
    detail::require(systems.count(c.system.kind) > 0, "invalid_config", "system.kind must be two_state, swing, lti or file");
    if (s.contains("params")) {
        const auto& p = s.at("params");
        check_keys(p, {"a1", "a2", "a3", "omega"}, "system.params");
        read(p, "a1", c.system.two_state.a1, "system.params");
        read(p, "a2", c.system.two_state.a2, "system.params");
        read(p, "a3", c.system.two_state.a3, "system.params");
        read(p, "omega", c.system.two_state.omega, "system.params");
    }
    if (s.contains("x0")) c.system.x0 = read_vector(s.at("x0"), "system.x0");
    if (s.contains("signal")) {
        c.system.signal = s.at("signal");
        validate_signal(c.system.signal);
    }
    read(s, "steps", c.system.steps, "system");
    read(s, "network", c.system.network, "system");
    c.system.network = resolve(c.system.network, base_dir);
    read(s, "trajectories", c.system.swing.trajectories, "system");
    c.system.trajectories = c.system.swing.trajectories;
    if (!s.contains("trajectories")) c.system.trajectories = 10;
    read(s, "seconds", c.system.swing.seconds, "system");
    read(s, "angle_spread", c.system.swing.angle_spread, "system");
    read(s, "speed_spread", c.system.swing.speed_spread, "system");
    read(s, "disturbance_amplitude", c.system.swing.disturbance_amplitude, "system");
    read(s, "disturbance_hold", c.system.swing.disturbance_hold, "system");
    read(s, "n", c.system.n, "system");
    read(s, "m", c.system.m, "system");
    read(s, "p", c.system.p, "system");
    read(s, "rho", c.system.rho, "system");
    read(s, "input_amplitude", c.system.input_amplitude, "system");
    read(s, "path", c.system.path, "system");
    c.system.path = resolve(c.system.path, base_dir);
    read(s, "state_dim", c.system.state_dim, "system");
    read(s, "input_dim", c.system.input_dim, "system");
    if (c.system.kind == "swing")
        detail::require(!c.system.network.empty(), "invalid_config", "system.network is required for swing");
    if (c.system.kind == "file")
        detail::require(!c.system.path.empty() && c.system.state_dim > 0 && c.system.input_dim > 0, "invalid_config",
                        "file systems need path, state_dim and input_dim");

    if (j.contains("split")) {
        const auto& sp = j.at("split");
        check_keys(sp, {"kind", "train"}, "split");
        read(sp, "kind", c.split, "split");
        read(sp, "train", c.train, "split");
        detail::require(c.split == "first" || c.split == "trajectory", "invalid_config",
                        "split.kind must be first or trajectory");
    }
    read(j, "normalize", c.normalize, "config");

    if (j.contains("dictionaries")) {
        const auto& d = j.at("dictionaries");
        check_keys(d, {"state", "input", "cross"}, "dictionaries");
        if (d.contains("state")) c.state_dict = parse_dictionary(d.at("state"), "dictionaries.state");
        if (d.contains("input")) c.input_dict = parse_dictionary(d.at("input"), "dictionaries.input");
        if (d.contains("cross") && !d.at("cross").is_null())
            c.cross_dict = parse_dictionary(d.at("cross"), "dictionaries.cross");
    }
    if (j.contains("fit")) {
        const auto& f = j.at("fit");
        check_keys(f, {"method", "ridge", "learning_rate", "epochs", "batch_size", "refresh_operators", "clip_norm"}, "fit");
        read(f, "method", c.method, "fit");
        detail::require(c.method == "edmd" || c.method == "deep", "invalid_config", "fit.method must be edmd or deep");
        read(f, "ridge", c.ridge, "fit");
        c.deep.ridge = c.ridge;
        read(f, "learning_rate", c.deep.learning_rate, "fit");
        read(f, "epochs", c.deep.epochs, "fit");
        read(f, "batch_size", c.deep.batch_size, "fit");
        read(f, "refresh_operators", c.deep.refresh_operators, "fit");
        read(f, "clip_norm", c.deep.clip_norm, "fit");
        detail::require(c.ridge >= 0.0, "invalid_config", "fit.ridge must be nonnegative");
    }
    if (j.contains("gramians")) {
        const auto& g = j.at("gramians");
        check_keys(g, {"horizon"}, "gramians");
        if (g.contains("horizon") && !g.at("horizon").is_null()) {
            std::size_t h = 0;
            read(g, "horizon", h, "gramians");
            detail::require(h >= 1, "invalid_config", "gramians.horizon must be positive");
            c.horizon = h;
        }
    }
    if (j.contains("partition")) {
        const auto& p = j.at("partition");
        check_keys(p, {"k", "lambda", "objective", "oracle", "group_size", "adjacency"}, "partition");
        read(p, "k", c.k, "partition");
        read(p, "lambda", c.lambda, "partition");
        std::string obj = to_string(c.objective);
        read(p, "objective", obj, "partition");
        c.objective = objective_from_string(obj);
        read(p, "oracle", c.oracle, "partition");
        read(p, "group_size", c.group_size, "partition");
        read(p, "adjacency", c.adjacency, "partition");
        c.adjacency = resolve(c.adjacency, base_dir);
        detail::require(c.group_size >= 1, "invalid_config", "partition.group_size must be positive");
        detail::require(c.lambda >= 0.0, "invalid_config", "partition.lambda must be nonnegative");
    }
    if (j.contains("prediction")) {
        const auto& p = j.at("prediction");
        check_keys(p, {"trajectory", "start", "steps", "mode"}, "prediction");
        read(p, "trajectory", c.prediction_trajectory, "prediction");
        read(p, "start", c.prediction_start, "prediction");
        if (p.contains("steps")) {
            std::size_t steps = 0;
            read(p, "steps", steps, "prediction");
            c.prediction_steps = steps;
        }
        std::string mode = "lifted";
        read(p, "mode", mode, "prediction");
        detail::require(mode == "lifted" || mode == "relift", "invalid_config", "prediction.mode must be lifted or relift");
        c.prediction_mode = mode == "lifted" ? RolloutMode::lifted : RolloutMode::relift;
    }
    read(j, "seed", c.seed, "config");
    c.deep.seed = c.seed;
    read(j, "output", c.output, "config");
    return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    const auto j = io::read_json_file(path);
    return parse_pipeline_config(j, std::filesystem::path(path).parent_path());
}

/// Error raised inside a pipeline stage; `record()` is the machine-readable form.
class StageError : public Error {
   public:
    StageError(std::string stage, const Error& e) : Error(e.code(), e.what()), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }
    io::json record() const { return {{"stage", stage_}, {"code", code()}, {"message", what()}}; }

   private:
    std::string stage_;
};

template <class F>
auto run_stage(const std::string& stage, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    } catch (const std::exception& e) {
        throw StageError(stage, Error("internal", e.what()));
    }
}

inline InputSignal signal_from_json(const io::json& j, Eigen::Index channels) {
    const auto kind = j.value("kind", std::string("zero"));
    auto amplitude = [&]() {
        const Vector a = config_detail::read_vector(j.at("amplitude"), "signal.amplitude");
        detail::require(a.size() == channels, "invalid_config",
                        "signal amplitude needs " + std::to_string(channels) + " entries");
        return a;
    };
    if (kind == "zero") return InputSignal::zero(channels);
    if (kind == "step") return InputSignal::step(j.value("t0", std::size_t{0}), amplitude());
    if (kind == "impulse") return InputSignal::impulse(j.value("t0", std::size_t{0}), amplitude());
    const Matrix samples = io::matrix_from_json(j.at("samples"));
    detail::require(samples.rows() == channels, "invalid_config", "recorded signal has the wrong channel count");
    return InputSignal::recorded(samples);
}

/// Stage 1: trajectories and the train/test split (normalization applied
/// when configured).
inline TrajectoryDataset simulate_stage(const PipelineConfig& c) {
    TrajectoryDataset data;
    const auto& s = c.system;
    if (s.kind == "two_state") {
        data = simulate_two_state(s.two_state, s.x0, signal_from_json(s.signal, 1), s.steps);
    } else if (s.kind == "swing") {
        const auto params = swing_params_from_json(io::read_json_file(s.network));
        SwingDataOptions o = s.swing;
        o.seed = c.seed;
        data = swing_dataset(params, o);
    } else if (s.kind == "lti") {
        const auto sys = random_stable_lti(s.n, s.m, s.p, s.rho, c.seed);
        std::vector<Trajectory> trs;
        std::mt19937_64 rng(c.seed + 1);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t k = 0; k < s.trajectories; ++k) {
            Vector x0(s.n);
            for (Eigen::Index i = 0; i < s.n; ++i) x0(i) = normal(rng);
            const auto sig = random_signal(s.m, s.steps, s.input_amplitude, 1, rng());
            trs.push_back(simulate_lti(sys, x0, sig.samples));
        }
        data = to_dataset(trs);
    } else {
        data = trajectories_from_csv(io::read_file(s.path), s.state_dim, s.input_dim);
    }
    if (c.split == "first")
        split_first(data, std::min(c.train, data.snapshots.size()));
    else
        split_by_trajectory(data, c.train);
    if (c.normalize) data.scale = fit_normalization(data);
    data.validate();
    return data;
}

inline ObservableDictionary build_dictionary(const DictionaryConfig& d, Eigen::Index dim, const TrajectoryDataset& data,
                                             std::uint64_t seed, bool is_input, Eigen::Index state_dim = 0,
                                             Eigen::Index input_dim = 0) {
    if (d.kind == "identity") return ObservableDictionary::identity(dim);
    if (d.kind == "polynomial") return ObservableDictionary::polynomial(dim, d.degree, d.include_constant);
    if (d.kind == "thin_plate_rbf") {
        detail::require(!is_input, "invalid_config", "thin-plate RBF input dictionaries are not supported");
        Matrix xs, ws, next;
        data.gather(data.train, xs, ws, next);
        return ObservableDictionary::thin_plate_rbf_from_data(data.scale.normalize_states(xs), d.centers, d.scale, seed);
    }
    if (d.kind == "neural")
        return ObservableDictionary::neural(dim, d.features, d.width, d.depth, d.activation, seed, is_input);
    return ObservableDictionary::mixed_polynomial(state_dim, input_dim, d.degree);
}

/// Stage 2: dictionaries plus EDMD or deep fit.
inline KoopmanModel fit_stage(const PipelineConfig& c, const TrajectoryDataset& data) {
    const auto n = data.state_dim();
    const auto m = data.input_dim();
    const auto sd = build_dictionary(c.state_dict, n, data, c.seed, false);
    const auto id = build_dictionary(c.input_dict, m, data, c.seed + 1, true);
    std::optional<ObservableDictionary> cd;
    if (c.cross_dict) cd = build_dictionary(*c.cross_dict, n + m, data, c.seed + 2, false, n, m);
    if (c.method == "deep") {
        detail::require(!cd, "invalid_config", "deep fits do not take a cross dictionary");
        return fit_deep(data, sd, id, c.deep);
    }
    return fit_edmd(data, sd, id, cd, {c.ridge, false});
}

/// Consecutive groups of `size` state indices.
inline std::vector<StateSubset> grouped_units(Eigen::Index n, std::size_t size) {
    detail::require(size >= 1 && static_cast<Eigen::Index>(size) <= n && n % static_cast<Eigen::Index>(size) == 0,
                    "invalid_argument", "group size must divide the state dimension");
    std::vector<StateSubset> units;
    for (Eigen::Index s = 0; s < n; s += static_cast<Eigen::Index>(size)) {
        StateSubset u;
        for (std::size_t i = 0; i < size; ++i) u.push_back(static_cast<std::size_t>(s) + i);
        units.push_back(u);
    }
    return units;
}

/// Rows: each unit with its complement, so complement inversion can be
/// checked row by row.
inline std::string kappa_units_csv(const KoopmanModel& model, const KoopmanGramians& grams,
                                   const std::vector<StateSubset>& units) {
    std::string out = "subset,kappa_o,kappa_c,complement_kappa_o,complement_kappa_c\n";
    const auto n = static_cast<std::size_t>(model.state_dim());
    for (const auto& u : units) {
        StateSubset comp;
        for (std::size_t i = 0; i < n; ++i)
            if (!std::binary_search(u.begin(), u.end(), i)) comp.push_back(i);
        out += subset_label(u) + ',' + io::format_real(kappa_o(model, grams, u)) + ',' +
               io::format_real(kappa_c(model, grams, u)) + ',' + io::format_real(kappa_o(model, grams, comp)) + ',' +
               io::format_real(kappa_c(model, grams, comp)) + '\n';
    }
    return out;
}

/// Bar-chart data: per unit, normalized kappa_o, normalized kappa_c and the
/// combined score.
inline std::string kappa_bar_csv(const KoopmanModel& model, const KoopmanGramians& grams,
                                 const std::vector<StateSubset>& units, double lambda) {
    const auto norm = singleton_normalization(model, grams, units);
    std::string out = "unit,subset,kappa_o_normalized,kappa_c_normalized,kappa\n";
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto s = kappa_combined(model, grams, units[i], lambda, norm);
        out += std::to_string(i + 1) + ',' + subset_label(units[i]) + ',' + io::format_real(s.kappa_o / norm.mean_o) +
               ',' + io::format_real(s.kappa_c / norm.mean_c) + ',' + io::format_real(s.kappa) + '\n';
    }
    return out;
}

/// True vs predicted states along one trajectory: columns t, x_i, xhat_i.
inline std::string prediction_csv(const KoopmanModel& model, const TrajectoryDataset& data, std::size_t trajectory,
                                  std::size_t start, std::optional<std::size_t> steps, RolloutMode mode,
                                  double* mean_error = nullptr) {
    std::vector<const Snapshot*> path;
    for (const auto& s : data.snapshots)
        if (s.trajectory == trajectory && s.time >= start) path.push_back(&s);
    detail::require(!path.empty() && path.front()->time == start, "invalid_config",
                    "prediction trajectory/start not found in the data");
    const std::size_t count = std::min(steps.value_or(path.size()), path.size());
    std::vector<Vector> ws;
    for (std::size_t t = 0; t < count; ++t) ws.push_back(path[t]->w);
    const auto pred = predict_multistep(model, path.front()->x, ws, count, mode);
    const auto n = model.state_dim();
    std::string out = "t";
    for (Eigen::Index i = 0; i < n; ++i) out += ",x_" + std::to_string(i + 1);
    for (Eigen::Index i = 0; i < n; ++i) out += ",xhat_" + std::to_string(i + 1);
    out += '\n';
    double err = 0.0;
    for (std::size_t t = 0; t < count; ++t) {
        const Vector& truth = path[t]->x_next;
        out += std::to_string(path[t]->time + 1);
        for (Eigen::Index i = 0; i < n; ++i) out += ',' + io::format_real(truth(i));
        for (Eigen::Index i = 0; i < n; ++i) out += ',' + io::format_real(pred[t](i));
        out += '\n';
        err += koopman_detail::safe_ratio((truth - pred[t]).norm(), truth.norm());
    }
    if (mean_error) *mean_error = count ? err / static_cast<double>(count) : 0.0;
    return out;
}

inline std::optional<Matrix> load_adjacency(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return io::matrix_from_csv(io::read_file(path));
}

inline void write_gramian_files(const KoopmanGramians& g, const std::filesystem::path& out) {
    io::write_file((out / "X_o.csv").string(), io::matrix_to_csv(g.X_o));
    io::write_file((out / "X_c.csv").string(), io::matrix_to_csv(g.X_c));
    io::json j = gramian_metadata(g);
    j["X_o"] = io::matrix_to_json(g.X_o);
    j["X_c"] = io::matrix_to_json(g.X_c);
    io::write_file((out / "gramians.json").string(), j.dump(2) + "\n");
}

struct PartitionRun {
    Partition partition;
    std::optional<double> oracle_spread;
};

/// Heuristic (or forced oracle) partition; the oracle spread is attached
/// whenever the instance is small enough to enumerate.
inline PartitionRun partition_stage(const KoopmanModel& model, const KoopmanGramians& grams, std::size_t k,
                                    double lambda, PartitionObjective objective, bool oracle,
                                    const std::vector<StateSubset>& units, const std::optional<Matrix>& adjacency) {
    PartitionOptions o;
    o.lambda = lambda;
    o.units = units;
    o.adjacency = adjacency;
    PartitionRun run;
    const bool feasible = partition_count(units.size(), k, true) <= o.oracle_limit;
    if (oracle) {
        run.partition = brute_force_partition(model, grams, k, objective, o);
    } else {
        run.partition = multiway_partition(model, grams, k, o);
    }
    if (feasible) {
        run.oracle_spread =
            oracle && objective == PartitionObjective::spread
                ? run.partition.objective_spread
                : brute_force_partition(model, grams, k, PartitionObjective::spread, o).objective_spread;
    }
    return run;
}

inline io::json partition_run_json(const PartitionRun& run) {
    io::json j = partition_to_json(run.partition);
    if (run.oracle_spread) {
        j["oracle_spread"] = io::round12(*run.oracle_spread);
        j["spread_ratio_to_oracle"] =
            *run.oracle_spread > 0.0 ? io::round12(run.partition.objective_spread / *run.oracle_spread) : 1.0;
    }
    return j;
}

struct PipelineResult {
    TrajectoryDataset data;
    std::optional<KoopmanModel> model;
    KoopmanGramians grams;
    PartitionRun partition;
    double prediction_error = 0.0;
    std::filesystem::path output;
};

/// simulate -> fit -> gramians -> kappa -> partition, writing every artifact
/// under c.output. Stage failures surface as StageError.
inline PipelineResult run_pipeline(const PipelineConfig& c) {
    PipelineResult r;
    r.output = c.output;
    run_stage("setup", [&] {
        std::filesystem::create_directories(r.output);
        return 0;
    });
    r.data = run_stage("simulate", [&] {
        auto data = simulate_stage(c);
        io::write_file((r.output / "trajectories.csv").string(), trajectories_to_csv(data));
        return data;
    });
    r.model = run_stage("fit", [&] {
        auto model = fit_stage(c, r.data);
        io::write_file((r.output / "model.json").string(), model_to_json(model).dump(2) + "\n");
        io::write_file((r.output / "training_log.csv").string(), training_log_csv(model.report));
        io::write_file((r.output / "prediction.csv").string(),
                       prediction_csv(model, r.data, c.prediction_trajectory, c.prediction_start, c.prediction_steps,
                                      c.prediction_mode, &r.prediction_error));
        return model;
    });
    r.grams = run_stage("gramians", [&] {
        auto g = compute_gramians(*r.model, c.horizon);
        write_gramian_files(g, r.output);
        return g;
    });
    const auto units = run_stage("kappa", [&] {
        auto u = grouped_units(r.model->state_dim(), c.group_size);
        io::write_file((r.output / "kappa.csv").string(), kappa_units_csv(*r.model, r.grams, u));
        io::write_file((r.output / "kappa_bar.csv").string(), kappa_bar_csv(*r.model, r.grams, u, c.lambda));
        return u;
    });
    r.partition = run_stage("partition", [&] {
        auto run = partition_stage(*r.model, r.grams, c.k, c.lambda, c.objective, c.oracle, units,
                                   load_adjacency(c.adjacency));
        io::write_file((r.output / "partition.json").string(), partition_run_json(run).dump(2) + "\n");
        io::write_file((r.output / "partition.csv").string(), partition_summary_csv(run.partition));
        return run;
    });
    run_stage("summary", [&] {
        io::json s{{"snapshots", r.data.snapshots.size()},
                   {"train", r.data.train.size()},
                   {"test", r.data.test.size()},
                   {"fit", report_to_json(r.model->report)},
                   {"prediction_mean_relative_error", io::round12(r.prediction_error)},
                   {"gramians", gramian_metadata(r.grams)},
                   {"objective_spread", io::round12(r.partition.partition.objective_spread)},
                   {"objective_maximin", io::round12(r.partition.partition.objective_maximin)}};
        io::write_file((r.output / "summary.json").string(), s.dump(2) + "\n");
        return 0;
    });
    return r;
}

}  // namespace koopdec
