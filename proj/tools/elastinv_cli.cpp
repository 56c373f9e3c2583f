// elastinv: run the reconstruction examples and property campaigns.
#include <chrono>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "elastinv/errors.hpp"
#include "elastinv/experiments.hpp"

namespace {

struct Overrides {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<double> noise;
    std::optional<double> rho;
    std::optional<double> mesh_h;
    std::string data_mesh;
    std::optional<int> pairs;
    std::optional<int> max_iterations;
};

elastinv::ExperimentConfig resolve(const std::string& command, const Overrides& o) {
    using namespace elastinv;
    ExperimentConfig c = o.config.empty() ? default_config(parse_experiment_kind(command)) : load_config(o.config);
    if (!o.config.empty() && command != "run" && to_string(c.kind) != command)
        throw ConfigError("config kind '" + to_string(c.kind) + "' does not match subcommand '" + command + "'");
    if (!o.out.empty()) c.output = o.out;
    if (o.mesh_h) c.mesh.target_h = *o.mesh_h;
    if (!o.data_mesh.empty()) c.data_mesh = o.data_mesh;
    if (o.seed) {
        c.noise_seed = *o.seed;
        c.campaign.seed = *o.seed;
    }
    if (o.noise || o.rho) {
        // A single explicit setting replaces the example's table.
        c.settings = {{o.noise.value_or(0.0), o.rho.value_or(0.0)}};
    }
    if (o.pairs) c.campaign.pairs = *o.pairs;
    if (o.max_iterations) c.inversion.max_iterations = *o.max_iterations;
    c.validate();
    return c;
}

void print_summary(const elastinv::ResultBundle& bundle) {
    const auto& doc = bundle.document;
    if (doc.contains("rows")) {
        for (const auto& row : doc["rows"]) {
            nlohmann::json brief = row;
            brief.erase("history_file");
            brief.erase("field_file");
            std::cout << brief.dump() << '\n';
        }
    }
    if (doc.contains("summary")) std::cout << doc["summary"].dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lame parameter reconstruction from boundary measurements"};
    app.require_subcommand(1);
    Overrides o;
    const char* commands[][2] = {
        {"example1", "constant (lambda, mu) recovery"},
        {"example2", "per-element recovery, radial mu"},
        {"example3", "per-element recovery, two lambda bumps"},
        {"monotonicity", "seeded monotonicity campaign"},
        {"stability", "seeded stability-ratio campaign"},
        {"forward", "forward solves for the configured loads"},
        {"custom", "inversion described entirely by --config"},
        {"run", "run whatever kind the --config file names"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        auto* cfg = sub->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
        if (std::string(name) == "run" || std::string(name) == "custom") cfg->required();
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--seed", o.seed, "noise / campaign seed");
        sub->add_option("--noise", o.noise, "noise level epsilon in [0, 1)");
        sub->add_option("--rho", o.rho, "regularization weight");
        sub->add_option("--mesh-h", o.mesh_h, "target mesh size");
        sub->add_option("--data-mesh", o.data_mesh, "mesh for synthetic data")
            ->check(CLI::IsMember({"same", "refine"}));
        sub->add_option("--pairs", o.pairs, "campaign size");
        sub->add_option("--max-iterations", o.max_iterations, "optimizer iteration cap");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? elastinv::kExitOk : elastinv::kExitConfigError;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    const auto start = std::chrono::steady_clock::now();
    try {
        const auto config = resolve(command, o);
        const auto bundle = elastinv::run_experiment(config);
        print_summary(bundle);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cerr << "wrote " << config.output << " in " << seconds << " s\n";
        if (bundle.violations > 0) {
            std::cerr << bundle.violations << " invariant violation(s)\n";
            return elastinv::kExitInvariantViolation;
        }
        return elastinv::kExitOk;
    } catch (const elastinv::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return elastinv::kExitConfigError;
    } catch (const elastinv::PartitionError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return elastinv::kExitConfigError;
    } catch (const elastinv::NumericError& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return elastinv::kExitSolverFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return elastinv::kExitFailure;
    }
}
