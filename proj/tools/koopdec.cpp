#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "koopdec/koopdec.hpp"

namespace fs = std::filesystem;
using namespace koopdec;

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string model;
    std::optional<std::size_t> horizon;
    std::optional<std::size_t> k;
    std::optional<double> lambda;
    std::optional<std::string> objective;
    bool oracle = false;
    std::string adjacency;
    std::optional<std::size_t> group_size;
};

PipelineConfig config_with_overrides(const Flags& f) {
    PipelineConfig c = load_pipeline_config(f.config);
    if (f.seed) {
        c.seed = *f.seed;
        c.deep.seed = *f.seed;
    }
    if (!f.out.empty()) c.output = f.out;
    if (f.horizon) c.horizon = f.horizon;
    if (f.k) c.k = *f.k;
    if (f.lambda) c.lambda = *f.lambda;
    if (f.objective) c.objective = objective_from_string(*f.objective);
    if (f.oracle) c.oracle = true;
    if (!f.adjacency.empty()) c.adjacency = f.adjacency;
    if (f.group_size) c.group_size = *f.group_size;
    return c;
}

fs::path output_dir(const Flags& f) {
    const fs::path out = f.out.empty() ? fs::path(".") : fs::path(f.out);
    fs::create_directories(out);
    return out;
}

KoopmanModel load_model(const Flags& f) {
    detail::require(!f.model.empty(), "invalid_argument", "--model is required");
    auto m = model_from_json(io::read_json_file(f.model));
    m.validate();
    return m;
}

int report_error(const std::string& stage, const std::string& code, const std::string& message,
                 const std::string& out) {
    const io::json rec{{"stage", stage}, {"code", code}, {"message", message}};
    std::cerr << rec.dump() << '\n';
    if (!out.empty()) {
        try {
            fs::create_directories(out);
            io::write_file((fs::path(out) / "error.json").string(), rec.dump(2) + "\n");
        } catch (const std::exception&) {
        }
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"koopdec: input-Koopman models, Koopman Gramians and subsystem decomposition"};
    app.require_subcommand(1);
    Flags f;

    auto add_common = [&](CLI::App* sub, bool config, bool model) {
        if (config) sub->add_option("--config", f.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
        if (model) sub->add_option("--model", f.model, "Model file (model.json)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", f.out, "Output directory");
    };
    auto add_partition_flags = [&](CLI::App* sub) {
        sub->add_option("--k", f.k, "Number of subsystems")->check(CLI::PositiveNumber);
        sub->add_option("--lambda", f.lambda, "Weight of the controllability term")->check(CLI::NonNegativeNumber);
        sub->add_option("--objective", f.objective, "spread or maximin")->check(CLI::IsMember({"spread", "maximin"}));
        sub->add_flag("--oracle", f.oracle, "Force exhaustive search");
        sub->add_option("--adjacency", f.adjacency, "Unit adjacency matrix (CSV)")->check(CLI::ExistingFile);
        sub->add_option("--group-size", f.group_size, "States per partition unit")->check(CLI::PositiveNumber);
    };

    auto* simulate = app.add_subcommand("simulate", "Simulate the configured system and write trajectories.csv");
    add_common(simulate, true, false);
    simulate->add_option("--seed", f.seed, "Random seed");

    auto* fit = app.add_subcommand("fit", "Simulate and fit a model; writes model.json, training_log.csv, prediction.csv");
    add_common(fit, true, false);
    fit->add_option("--seed", f.seed, "Random seed");

    auto* gram = app.add_subcommand("gramians", "Koopman Gramians of a fitted model");
    add_common(gram, false, true);
    gram->add_option("--horizon", f.horizon, "Finite-horizon length")->check(CLI::PositiveNumber);

    auto* kappa = app.add_subcommand("kappa", "Per-unit kappa report of a fitted model");
    add_common(kappa, false, true);
    kappa->add_option("--horizon", f.horizon, "Finite-horizon length")->check(CLI::PositiveNumber);
    kappa->add_option("--lambda", f.lambda, "Weight of the controllability term")->check(CLI::NonNegativeNumber);
    kappa->add_option("--group-size", f.group_size, "States per unit")->check(CLI::PositiveNumber);

    auto* part = app.add_subcommand("partition", "Partition the states of a fitted model");
    add_common(part, false, true);
    part->add_option("--horizon", f.horizon, "Finite-horizon length")->check(CLI::PositiveNumber);
    add_partition_flags(part);

    auto* pipe = app.add_subcommand("pipeline", "simulate -> fit -> gramians -> kappa -> partition");
    add_common(pipe, true, false);
    pipe->add_option("--seed", f.seed, "Random seed");
    pipe->add_option("--horizon", f.horizon, "Finite-horizon length")->check(CLI::PositiveNumber);
    add_partition_flags(pipe);

    auto* verify = app.add_subcommand("verify", "Run the invariant suites");
    verify->add_option("--seed", f.seed, "Random seed");

    CLI11_PARSE(app, argc, argv);

    std::string stage = "setup";
    try {
        if (*simulate) {
            const auto c = config_with_overrides(f);
            const fs::path out = c.output;
            fs::create_directories(out);
            stage = "simulate";
            const auto data = simulate_stage(c);
            io::write_file((out / "trajectories.csv").string(), trajectories_to_csv(data));
            std::cout << "wrote " << data.snapshots.size() << " snapshots to " << (out / "trajectories.csv").string()
                      << '\n';
        } else if (*fit) {
            const auto c = config_with_overrides(f);
            const fs::path out = c.output;
            fs::create_directories(out);
            stage = "simulate";
            const auto data = simulate_stage(c);
            stage = "fit";
            const auto model = fit_stage(c, data);
            double err = 0.0;
            io::write_file((out / "model.json").string(), model_to_json(model).dump(2) + "\n");
            io::write_file((out / "training_log.csv").string(), training_log_csv(model.report));
            io::write_file((out / "prediction.csv").string(),
                           prediction_csv(model, data, c.prediction_trajectory, c.prediction_start, c.prediction_steps,
                                          c.prediction_mode, &err));
            std::cout << "train/test one-step state error " << io::format_real(model.report.train_state_error) << " / "
                      << io::format_real(model.report.test_state_error) << ", rollout error " << io::format_real(err)
                      << '\n';
        } else if (*gram) {
            const auto model = load_model(f);
            stage = "gramians";
            const auto g = compute_gramians(model, f.horizon);
            write_gramian_files(g, output_dir(f));
            std::cout << gramian_metadata(g).dump() << '\n';
        } else if (*kappa) {
            const auto model = load_model(f);
            stage = "gramians";
            const auto g = compute_gramians(model, f.horizon);
            stage = "kappa";
            const auto units = grouped_units(model.state_dim(), f.group_size.value_or(1));
            const auto out = output_dir(f);
            io::write_file((out / "kappa.csv").string(), kappa_units_csv(model, g, units));
            io::write_file((out / "kappa_bar.csv").string(), kappa_bar_csv(model, g, units, f.lambda.value_or(1.0)));
            std::cout << kappa_bar_csv(model, g, units, f.lambda.value_or(1.0));
        } else if (*part) {
            const auto model = load_model(f);
            stage = "gramians";
            const auto g = compute_gramians(model, f.horizon);
            stage = "partition";
            const auto units = grouped_units(model.state_dim(), f.group_size.value_or(1));
            const auto run = partition_stage(model, g, f.k.value_or(2), f.lambda.value_or(1.0),
                                             objective_from_string(f.objective.value_or("spread")), f.oracle, units,
                                             load_adjacency(f.adjacency));
            const auto out = output_dir(f);
            io::write_file((out / "partition.json").string(), partition_run_json(run).dump(2) + "\n");
            io::write_file((out / "partition.csv").string(), partition_summary_csv(run.partition));
            std::cout << partition_summary_csv(run.partition);
        } else if (*pipe) {
            const auto c = config_with_overrides(f);
            try {
                const auto r = run_pipeline(c);
                std::cout << "artifacts in " << r.output.string() << "; test one-step state error "
                          << io::format_real(r.model->report.test_state_error) << ", spread "
                          << io::format_real(r.partition.partition.objective_spread) << '\n';
            } catch (const StageError& e) {
                return report_error(e.stage(), e.code(), e.what(), c.output);
            }
        } else if (*verify) {
            stage = "verify";
            bool ok = true;
            for (const auto& r : run_invariant_suites(f.seed.value_or(1))) {
                std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
                ok = ok && r.passed;
            }
            return ok ? 0 : 1;
        }
    } catch (const Error& e) {
        return report_error(stage, e.code(), e.what(), f.out);
    } catch (const std::exception& e) {
        return report_error(stage, "internal", e.what(), f.out);
    }
    return 0;
}
