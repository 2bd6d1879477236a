#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uaskf/filters.hpp"
#include "uaskf/hybrid_core.hpp"

namespace uaskf {

enum class ErrorMetric { PerDimAbs, L2 };

struct ExperimentConfig {
    std::string system = "ball2d";
    std::size_t n_trials = 1000;
    double duration = 1.0;
    double dt = 0.01;
    std::uint64_t seed = 1;
    Vector initial_mean;
    Vector initial_cov_diag;
    Vector process_noise_diag;
    Vector meas_noise_diag;
    double sigma_g = 0.0;
    Vector sigma_theta_diag;
    std::vector<FilterVariant> estimators{FilterVariant::SKF, FilterVariant::UASKF};
    std::size_t n_samples = 10000;

    ErrorMetric error_metric = ErrorMetric::PerDimAbs;
    // Adds N(0, W) to the ground-truth state after every step.
    bool truth_process_noise = false;
    double h_max = 1e-3;
    bool write_svg = true;
    bool write_errors_csv = true;
    // Propagation study only: initial covariance (defaults to initial_cov_diag)
    // and how long particles run past the nominal first event.
    std::optional<Vector> propagation_cov_diag;
    double settle_time = 0.1;
};

/// Default scenario for each system identifier.
ExperimentConfig default_config(const std::string& system);

/// Parses a JSON document; keys that are absent keep the system's defaults.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);
/// Throws Error(Config) when the invariants of the config do not hold.
void validate_config(const ExperimentConfig& cfg);

/// System, measurement matrix and uncertainty layout built from a config.
struct Scenario {
    HybridSystem system;
    ModeId initial_mode;
    Matrix measurement_matrix;
    std::size_t uncertain_transition = 0;  // the transition whose guard is uncertain
    std::vector<double> sigma_g;           // per transition
    std::vector<Matrix> sigma_theta;       // per transition
    std::vector<std::string> state_labels;
};

/// Builds the scenario; `guard_on` / `reset_on` switch the uncertainty the
/// system (and thus the uaSKF) is told about.
Scenario make_scenario(const ExperimentConfig& cfg, bool guard_on = true, bool reset_on = true);

// ------------------------------------------------------------ propagation study

struct PropagationCase {
    std::string name;  // none, guard, reset, both
    bool guard = false;
    bool reset = false;
    GaussianBelief empirical;
    GaussianBelief saltation_only;
    GaussianBelief uncertainty_aware;
    double kl_saltation_only = 0.0;  // KL(empirical || prediction)
    double kl_uncertainty_aware = 0.0;
    std::size_t n_kept = 0;
    std::size_t n_excluded = 0;
    std::optional<std::string> failure;  // e.g. a multimodal cloud
};

struct PropagationReport {
    double nominal_impact_t = 0.0;
    std::vector<PropagationCase> cases;
};

PropagationReport run_propagation_experiment(const ExperimentConfig& cfg);
void write_propagation_report(const PropagationReport& report,
                              const std::vector<std::string>& state_labels,
                              const std::filesystem::path& out_dir);

// ------------------------------------------------------------ filter benchmark

struct TrialReport {
    std::size_t trial = 0;
    FilterVariant estimator = FilterVariant::SKF;
    double mse = 0.0;
    std::vector<double> times;
    Matrix per_step_abs_error;  // timesteps x state dims
};

struct BenchmarkSummary {
    std::size_t n_trials = 0;
    std::size_t n_failed = 0;
    std::optional<double> median_mse_improvement_pct;
    std::optional<double> peak_avg_error_improvement_pct;
    std::optional<double> peak_time;
    std::optional<double> sign_test_p;
    std::optional<double> first_impact_t;
    std::optional<double> last_impact_t;
    std::size_t n_improved = 0;  // trials with lower uaSKF MSE
    std::size_t n_worse = 0;
    std::vector<double> times;
    std::vector<std::string> state_labels;
    // Per-estimator mean error curves: timesteps x dims (or x 1 for l2).
    std::map<FilterVariant, Matrix> mean_error_curves;
    // Mean over time of the per-dimension average error improvement.
    std::vector<double> per_dim_mean_improvement_pct;
    std::vector<double> per_dim_peak_improvement_pct;
};

struct BenchmarkResult {
    std::vector<TrialReport> reports;
    BenchmarkSummary summary;
};

BenchmarkResult run_filter_benchmark(const ExperimentConfig& cfg);

/// Aggregates trial reports; baseline SKF, candidate uaSKF.
BenchmarkSummary summarize(const std::vector<TrialReport>& reports, ErrorMetric metric);

/// Two-sided exact binomial sign test; zero differences are dropped.
double sign_test(std::span<const double> diffs);

/// errors.csv, mse.csv, summary.json and optionally curves.svg.
void write_reports(const BenchmarkResult& result, const std::filesystem::path& out_dir,
                   bool write_svg = true, bool write_errors = true);

}  // namespace uaskf
