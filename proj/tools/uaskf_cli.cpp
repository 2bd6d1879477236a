// Experiment runner: propagation study, filter benchmarks, system listing.
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "uaskf/experiments.hpp"
#include "uaskf/systems.hpp"

namespace {

constexpr int kConfigError = 1;
constexpr int kNumericalError = 2;

int exit_code_for(const uaskf::Error& e) {
    switch (e.kind()) {
        case uaskf::ErrorKind::Config:
        case uaskf::ErrorKind::InvalidArgument:
        case uaskf::ErrorKind::Io:
            return kConfigError;
        default:
            return kNumericalError;
    }
}

void print_propagation(const uaskf::PropagationReport& r) {
    std::printf("nominal first event at t = %.6f s\n", r.nominal_impact_t);
    std::printf("%-6s %18s %22s %8s\n", "case", "KL(saltation only)", "KL(uncertainty aware)", "kept");
    for (const auto& c : r.cases) {
        if (c.failure) {
            std::printf("%-6s %s\n", c.name.c_str(), c.failure->c_str());
            continue;
        }
        std::printf("%-6s %18.6g %22.6g %8zu\n", c.name.c_str(), c.kl_saltation_only,
                    c.kl_uncertainty_aware, c.n_kept);
    }
}

void print_summary(const uaskf::BenchmarkSummary& s) {
    auto show = [](const char* name, const std::optional<double>& v) {
        if (v) std::printf("%-34s %.6g\n", name, *v);
        else std::printf("%-34s n/a\n", name);
    };
    std::printf("%-34s %zu (%zu failed)\n", "trials", s.n_trials, s.n_failed);
    show("median MSE improvement [%]", s.median_mse_improvement_pct);
    show("peak avg-error improvement [%]", s.peak_avg_error_improvement_pct);
    show("peak time [s]", s.peak_time);
    show("sign test p", s.sign_test_p);
    show("first impact [s]", s.first_impact_t);
    show("last impact [s]", s.last_impact_t);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-aware salted Kalman filtering experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::optional<std::uint64_t> seed;

    auto* propagate = app.add_subcommand("propagate", "Monte Carlo check of covariance propagation through an event");
    auto* bench = app.add_subcommand("bench", "Filter benchmark: EKF / SKF / uaSKF on one system");
    auto* systems = app.add_subcommand("systems", "List the built-in systems and their default configs");
    for (auto* sub : {propagate, bench}) {
        sub->add_option("--config", config_path, "JSON experiment config")->required();
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--seed", seed, "Override the config seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigError;
    }

    try {
        if (systems->parsed()) {
            for (const auto& name : uaskf::system_names()) {
                std::cout << name << "\n" << uaskf::config_to_json(uaskf::default_config(name)) << "\n";
            }
            return 0;
        }
        uaskf::ExperimentConfig cfg = uaskf::load_config(config_path);
        if (seed) cfg.seed = *seed;

        if (propagate->parsed()) {
            const auto report = uaskf::run_propagation_experiment(cfg);
            uaskf::write_propagation_report(report, uaskf::make_scenario(cfg).state_labels, out_dir);
            print_propagation(report);
        } else {
            const auto result = uaskf::run_filter_benchmark(cfg);
            uaskf::write_reports(result, out_dir, cfg.write_svg, cfg.write_errors_csv);
            print_summary(result.summary);
        }
    } catch (const uaskf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericalError;
    }
    return 0;
}
