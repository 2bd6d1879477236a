#include "uaskf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uaskf/montecarlo.hpp"
#include "uaskf/systems.hpp"

namespace uaskf {

namespace {

using nlohmann::json;

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) out(i++) = d;
    return out;
}

Vector json_vector(const json& j, const char* key) {
    if (!j.is_array()) throw Error(ErrorKind::Config, std::string("'") + key + "' must be an array");
    Vector out(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw Error(ErrorKind::Config, std::string("'") + key + "' must hold numbers");
        out(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return out;
}

json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace

ExperimentConfig default_config(const std::string& system) {
    ExperimentConfig c;
    c.system = system;
    if (system == "ball2d") {
        c.n_trials = 1000;
        c.duration = 1.0;
        c.dt = 0.01;
        c.initial_mean = vec({0.0, 3.0, 0.0, -5.0});
        c.initial_cov_diag = vec({0.05, 0.05, 0.001, 0.001});
        c.process_noise_diag = vec({10.0, 10.0, 1.0, 1.0});
        c.meas_noise_diag = vec({1.0, 1.0});
        c.sigma_g = 0.25;
        c.sigma_theta_diag = vec({0.05});
        c.propagation_cov_diag = vec({4e-3, 4e-3, 4e-3, 4e-3});
    } else if (system == "circle_drop") {
        c.n_trials = 1000;
        c.duration = 3.0;
        c.dt = 0.01;
        c.initial_mean = vec({0.5, 5.0, 0.0, 0.0});
        c.initial_cov_diag = vec({0.1, 0.1, 0.1, 0.1});
        c.process_noise_diag = vec({0.1, 0.1, 0.01, 0.01});
        c.meas_noise_diag = vec({0.1, 0.1});
        c.sigma_g = 0.25;
        c.sigma_theta_diag = Vector(0);
    } else if (system == "aslip") {
        c.n_trials = 1000;
        c.duration = 5.0;
        c.dt = 0.005;
        c.initial_mean = vec({0.0, 2.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0});
        c.initial_cov_diag = Vector::Constant(8, 1e-6);
        c.process_noise_diag = Vector::Constant(8, 1e-3);
        c.meas_noise_diag = Vector::Constant(5, 1e-2);
        c.sigma_g = 0.01;
        c.sigma_theta_diag = Vector(0);
    } else {
        throw Error(ErrorKind::Config, "unknown system '" + system + "'");
    }
    return c;
}

void validate_config(const ExperimentConfig& c) {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
    if (std::find(system_names().begin(), system_names().end(), c.system) == system_names().end())
        fail("unknown system '" + c.system + "'");
    const ExperimentConfig d = default_config(c.system);
    if (c.n_trials < 1) fail("n_trials must be >= 1");
    if (!(c.dt > 0.0)) fail("dt must be > 0");
    if (!(c.duration >= c.dt)) fail("duration must be >= dt");
    if (!(c.h_max > 0.0)) fail("h_max must be > 0");
    if (c.n_samples < 2) fail("n_samples must be >= 2");
    if (!(c.settle_time > 0.0)) fail("settle_time must be > 0");
    auto check_len = [&](const Vector& v, Eigen::Index n, const char* key) {
        if (v.size() != n) fail(std::string(key) + " must have " + std::to_string(n) + " entries");
        if ((v.array() < 0.0).any() && std::string(key) != "initial_mean")
            fail(std::string(key) + " must be non-negative");
        if (!v.allFinite()) fail(std::string(key) + " must be finite");
    };
    check_len(c.initial_mean, d.initial_mean.size(), "initial_mean");
    check_len(c.initial_cov_diag, d.initial_cov_diag.size(), "initial_cov_diag");
    check_len(c.process_noise_diag, d.process_noise_diag.size(), "process_noise_diag");
    check_len(c.meas_noise_diag, d.meas_noise_diag.size(), "meas_noise_diag");
    if (c.propagation_cov_diag)
        check_len(*c.propagation_cov_diag, d.initial_cov_diag.size(), "propagation_cov_diag");
    if (c.sigma_g < 0.0) fail("sigma_g must be >= 0");
    const Eigen::Index max_theta = c.system == "ball2d" ? 2 : 0;
    if (c.sigma_theta_diag.size() > max_theta) fail("sigma_theta_diag has too many entries");
    if ((c.sigma_theta_diag.array() < 0.0).any()) fail("sigma_theta_diag must be non-negative");
    if (c.estimators.empty()) fail("at least one estimator is required");
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
    if (!j.contains("system") || !j["system"].is_string())
        throw Error(ErrorKind::Config, "config needs a 'system' string");
    ExperimentConfig c = default_config(j["system"].get<std::string>());
    try {
        if (j.contains("n_trials")) c.n_trials = j["n_trials"].get<std::size_t>();
        if (j.contains("duration")) c.duration = j["duration"].get<double>();
        if (j.contains("dt")) c.dt = j["dt"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("initial_mean")) c.initial_mean = json_vector(j["initial_mean"], "initial_mean");
        if (j.contains("initial_cov_diag"))
            c.initial_cov_diag = json_vector(j["initial_cov_diag"], "initial_cov_diag");
        if (j.contains("process_noise_diag"))
            c.process_noise_diag = json_vector(j["process_noise_diag"], "process_noise_diag");
        if (j.contains("meas_noise_diag"))
            c.meas_noise_diag = json_vector(j["meas_noise_diag"], "meas_noise_diag");
        if (j.contains("sigma_g")) c.sigma_g = j["sigma_g"].get<double>();
        if (j.contains("sigma_theta_diag"))
            c.sigma_theta_diag = json_vector(j["sigma_theta_diag"], "sigma_theta_diag");
        if (j.contains("estimators")) {
            c.estimators.clear();
            for (const auto& e : j["estimators"]) {
                auto v = parse_variant(e.get<std::string>());
                if (!v) throw Error(ErrorKind::Config, "unknown estimator '" + e.get<std::string>() + "'");
                c.estimators.push_back(*v);
            }
        }
        if (j.contains("n_samples")) c.n_samples = j["n_samples"].get<std::size_t>();
        if (j.contains("error_metric")) {
            const auto m = j["error_metric"].get<std::string>();
            if (m == "per_dim_abs") c.error_metric = ErrorMetric::PerDimAbs;
            else if (m == "l2") c.error_metric = ErrorMetric::L2;
            else throw Error(ErrorKind::Config, "unknown error_metric '" + m + "'");
        }
        if (j.contains("truth_process_noise")) c.truth_process_noise = j["truth_process_noise"].get<bool>();
        if (j.contains("h_max")) c.h_max = j["h_max"].get<double>();
        if (j.contains("write_svg")) c.write_svg = j["write_svg"].get<bool>();
        if (j.contains("write_errors_csv")) c.write_errors_csv = j["write_errors_csv"].get<bool>();
        if (j.contains("propagation_cov_diag"))
            c.propagation_cov_diag = json_vector(j["propagation_cov_diag"], "propagation_cov_diag");
        if (j.contains("settle_time")) c.settle_time = j["settle_time"].get<double>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("bad config value: ") + e.what());
    }
    std::sort(c.estimators.begin(), c.estimators.end());
    c.estimators.erase(std::unique(c.estimators.begin(), c.estimators.end()), c.estimators.end());
    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot read config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["system"] = c.system;
    j["n_trials"] = c.n_trials;
    j["duration"] = c.duration;
    j["dt"] = c.dt;
    j["seed"] = c.seed;
    j["initial_mean"] = vector_json(c.initial_mean);
    j["initial_cov_diag"] = vector_json(c.initial_cov_diag);
    j["process_noise_diag"] = vector_json(c.process_noise_diag);
    j["meas_noise_diag"] = vector_json(c.meas_noise_diag);
    j["sigma_g"] = c.sigma_g;
    j["sigma_theta_diag"] = vector_json(c.sigma_theta_diag);
    j["estimators"] = json::array();
    for (auto e : c.estimators) j["estimators"].push_back(to_string(e));
    j["n_samples"] = c.n_samples;
    j["error_metric"] = c.error_metric == ErrorMetric::L2 ? "l2" : "per_dim_abs";
    j["truth_process_noise"] = c.truth_process_noise;
    j["h_max"] = c.h_max;
    j["write_svg"] = c.write_svg;
    j["write_errors_csv"] = c.write_errors_csv;
    if (c.propagation_cov_diag) j["propagation_cov_diag"] = vector_json(*c.propagation_cov_diag);
    j["settle_time"] = c.settle_time;
    return j.dump(2);
}

Scenario make_scenario(const ExperimentConfig& cfg, bool guard_on, bool reset_on) {
    const double sg = guard_on ? cfg.sigma_g : 0.0;
    Scenario s;
    if (cfg.system == "ball2d") {
        BallParams p;
        p.sigma_ground = sg;
        const auto& st = cfg.sigma_theta_diag;
        p.sigma_theta = (reset_on && st.size() >= 1) ? st(0) : 0.0;
        if (st.size() >= 2) {
            p.uncertain_restitution = true;
            p.sigma_alpha = reset_on ? st(1) : 0.0;
        }
        s.system = make_bouncing_ball(p);
        s.initial_mode = ModeId{0};
        s.measurement_matrix = Matrix::Identity(2, 4);
        s.uncertain_transition = ball::kImpact;
        s.state_labels = {"x", "y", "vx", "vy"};
    } else if (cfg.system == "circle_drop") {
        CircleParams p;
        p.sigma_radius = sg;
        s.system = make_circle_drop(p);
        s.initial_mode = circle::kAerial;
        s.measurement_matrix = Matrix::Identity(2, 4);
        s.uncertain_transition = circle::kImpact;
        s.state_labels = {"x", "y", "vx", "vy"};
    } else if (cfg.system == "aslip") {
        AslipParams p;
        p.sigma_ground = sg;
        s.system = make_aslip(p);
        s.initial_mode = aslip::kFlight;
        s.measurement_matrix = Matrix::Identity(5, 8);
        s.uncertain_transition = aslip::kTouchdown;
        s.state_labels = {"x_b", "y_b", "theta_b", "x_t", "y_t", "xd_b", "yd_b", "thetad_b"};
    } else {
        throw Error(ErrorKind::Config, "unknown system '" + cfg.system + "'");
    }
    s.system.options().h_max = cfg.h_max;
    for (const auto& tr : s.system.transitions()) {
        s.sigma_g.push_back(tr.guard.sigma_g);
        s.sigma_theta.push_back(tr.reset.sigma_theta);
    }
    return s;
}

// ------------------------------------------------------------ propagation study

namespace {

GaussianBelief diag_belief(ModeId mode, const Vector& mean, const Vector& var) {
    return GaussianBelief{mode, mean, Matrix(var.asDiagonal()), 0.0};
}

std::optional<double> first_event_time(const HybridSystem& sys, const HybridState& start,
                                       double max_t) {
    const auto env = Environment::nominal(sys);
    HybridState s = start;
    while (s.t < max_t) {
        auto ev = detect_event(sys, s.mode, s.t, s.x, std::min(0.5, max_t - s.t), env);
        if (ev) return ev->t;
        s = advance(sys, s, std::min(0.5, max_t - s.t), env);
    }
    return std::nullopt;
}

}  // namespace

PropagationReport run_propagation_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const Scenario nominal = make_scenario(cfg);
    const Vector var = cfg.propagation_cov_diag.value_or(cfg.initial_cov_diag);
    const GaussianBelief initial = diag_belief(nominal.initial_mode, cfg.initial_mean, var);

    PropagationReport report;
    const auto t_imp = first_event_time(nominal.system, {initial.mode, 0.0, initial.mean}, 100.0);
    if (!t_imp) throw Error(ErrorKind::NumericalDivergence, "nominal trajectory never reaches a guard");
    report.nominal_impact_t = *t_imp;
    const double horizon = *t_imp + cfg.settle_time;

    const struct {
        const char* name;
        bool guard, reset;
    } cases[] = {{"none", false, false}, {"guard", true, false}, {"reset", false, true}, {"both", true, true}};

    for (const auto& c : cases) {
        const Scenario scen = make_scenario(cfg, c.guard, c.reset);
        PropagationCase pc;
        pc.name = c.name;
        pc.guard = c.guard;
        pc.reset = c.reset;

        const ProcessNoise zero_w = ProcessNoise::uniform(
            scen.system.modes().size(), Matrix::Zero(initial.mean.size(), initial.mean.size()), 1.0);
        pc.saltation_only = hybrid_predict(scen.system, initial, horizon, zero_w, FilterVariant::SKF);
        pc.uncertainty_aware = hybrid_predict(scen.system, initial, horizon, zero_w, FilterVariant::UASKF);

        PropagationSpec spec;
        spec.system = &scen.system;
        spec.initial = initial;
        spec.sigma_g = scen.sigma_g;
        spec.sigma_theta = scen.sigma_theta;
        spec.n_samples = cfg.n_samples;
        spec.stop = StopRule{StopRule::Kind::Horizon, horizon};
        const SampleCloud cloud = sample_propagate(spec, cfg.seed);
        pc.n_kept = static_cast<std::size_t>(cloud.particles.rows());
        pc.n_excluded = cloud.excluded;
        try {
            pc.empirical = empirical_moments(cloud);
            pc.kl_saltation_only = kl_divergence(pc.empirical, pc.saltation_only);
            pc.kl_uncertainty_aware = kl_divergence(pc.empirical, pc.uncertainty_aware);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::MultimodalCloud && e.kind() != ErrorKind::SingularCovariance) throw;
            pc.failure = e.what();
        }
        report.cases.push_back(std::move(pc));
    }
    return report;
}

// ------------------------------------------------------------ filter benchmark

double sign_test(std::span<const double> diffs) {
    std::size_t n = 0, k = 0;
    for (double d : diffs) {
        if (d == 0.0) continue;
        ++n;
        if (d > 0.0) ++k;
    }
    if (n == 0) throw Error(ErrorKind::UndefinedTest, "sign test needs a non-zero difference");
    const double nd = static_cast<double>(n);
    auto log_pmf = [&](std::size_t i) {
        const double id = static_cast<double>(i);
        return std::lgamma(nd + 1.0) - std::lgamma(id + 1.0) - std::lgamma(nd - id + 1.0) -
               nd * std::log(2.0);
    };
    long double lower = 0.0L, upper = 0.0L;
    for (std::size_t i = 0; i <= k; ++i) lower += std::exp(static_cast<long double>(log_pmf(i)));
    for (std::size_t i = k; i <= n; ++i) upper += std::exp(static_cast<long double>(log_pmf(i)));
    const long double p = 2.0L * std::min(lower, upper);
    return static_cast<double>(std::clamp(p, 0.0L, 1.0L));
}

BenchmarkSummary summarize(const std::vector<TrialReport>& reports, ErrorMetric metric) {
    BenchmarkSummary s;
    if (reports.empty()) return s;
    s.times = reports.front().times;

    std::map<FilterVariant, std::map<std::size_t, const TrialReport*>> by_est;
    for (const auto& r : reports) by_est[r.estimator][r.trial] = &r;
    s.n_trials = by_est.begin()->second.size();

    auto step_error = [metric](const Matrix& e) -> Matrix {
        if (metric == ErrorMetric::PerDimAbs) return e;
        return e.rowwise().norm();
    };
    for (const auto& [est, trials] : by_est) {
        Matrix acc;
        for (const auto& [idx, r] : trials) {
            const Matrix e = step_error(r->per_step_abs_error);
            if (acc.size() == 0) acc = Matrix::Zero(e.rows(), e.cols());
            acc += e;
        }
        s.mean_error_curves[est] = acc / static_cast<double>(trials.size());
    }

    const auto base = by_est.find(FilterVariant::SKF);
    const auto cand = by_est.find(FilterVariant::UASKF);
    if (base == by_est.end() || cand == by_est.end()) return s;

    std::vector<double> diffs, pct;
    for (const auto& [idx, rb] : base->second) {
        const auto it = cand->second.find(idx);
        if (it == cand->second.end()) continue;
        const double d = rb->mse - it->second->mse;
        diffs.push_back(d);
        if (d > 0.0) ++s.n_improved;
        if (d < 0.0) ++s.n_worse;
        pct.push_back(rb->mse > 0.0 ? d / rb->mse * 100.0 : 0.0);
    }
    if (!pct.empty()) {
        std::sort(pct.begin(), pct.end());
        const std::size_t m = pct.size();
        s.median_mse_improvement_pct = m % 2 ? pct[m / 2] : 0.5 * (pct[m / 2 - 1] + pct[m / 2]);
    }
    try {
        s.sign_test_p = sign_test(diffs);
    } catch (const Error&) {
        s.sign_test_p = 1.0;  // every pair tied
    }

    const Matrix& cb = s.mean_error_curves[FilterVariant::SKF];
    const Matrix& cc = s.mean_error_curves[FilterVariant::UASKF];
    const Vector avg_b = cb.rowwise().mean(), avg_c = cc.rowwise().mean();
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (Eigen::Index k = 0; k < avg_b.size(); ++k) {
        const double v = avg_b(k) > 0.0 ? (avg_b(k) - avg_c(k)) / avg_b(k) * 100.0 : 0.0;
        if (v > best) {
            best = v;
            best_k = static_cast<std::size_t>(k);
        }
    }
    if (avg_b.size() > 0) {
        s.peak_avg_error_improvement_pct = best;
        s.peak_time = s.times.at(best_k);
    }
    for (Eigen::Index d = 0; d < cb.cols(); ++d) {
        const double sb = cb.col(d).sum(), sc = cc.col(d).sum();
        s.per_dim_mean_improvement_pct.push_back(sb > 0.0 ? (sb - sc) / sb * 100.0 : 0.0);
        double peak = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < cb.rows(); ++k) {
            if (cb(k, d) > 0.0) peak = std::max(peak, (cb(k, d) - cc(k, d)) / cb(k, d) * 100.0);
        }
        s.per_dim_peak_improvement_pct.push_back(std::isfinite(peak) ? peak : 0.0);
    }
    return s;
}

BenchmarkResult run_filter_benchmark(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const Scenario scen = make_scenario(cfg);
    const HybridSystem& sys = scen.system;
    const auto n = cfg.initial_mean.size();
    const std::size_t n_modes = sys.modes().size();
    const Matrix w = cfg.process_noise_diag.asDiagonal();
    const Matrix v = cfg.meas_noise_diag.asDiagonal();
    const Matrix& c = scen.measurement_matrix;

    const GaussianBelief prior = diag_belief(scen.initial_mode, cfg.initial_mean, cfg.initial_cov_diag);
    const GaussianSampler draw_x0(cfg.initial_mean, prior.cov);
    const GaussianSampler draw_w(Vector::Zero(n), w);
    const GaussianSampler draw_v(Vector::Zero(c.rows()), v);

    FilterConfig fc;
    fc.noise = ProcessNoise::uniform(n_modes, w, cfg.dt);
    fc.measurement = MeasurementModel::uniform(n_modes, c, v);

    const auto steps = static_cast<std::size_t>(std::llround(cfg.duration / cfg.dt));
    std::vector<double> times(steps);
    for (std::size_t k = 0; k < steps; ++k) times[k] = static_cast<double>(k + 1) * cfg.dt;

    BenchmarkResult result;
    std::vector<double> first_impacts;
    std::size_t failed = 0;
    for (std::size_t trial = 0; trial < cfg.n_trials; ++trial) {
        auto rng = substream(cfg.seed, trial);
        const Vector x0 = draw_x0(rng);
        const Environment env = sample_environment(sys, scen.sigma_g, scen.sigma_theta, rng);

        std::vector<TrialReport> trial_reports;
        std::optional<double> first_impact;
        try {
            HybridState truth{scen.initial_mode, 0.0, x0};
            Matrix truth_states(steps, n);
            std::vector<TimedMeasurement> ys(steps);
            std::vector<EventRecord> events;
            for (std::size_t k = 0; k < steps; ++k) {
                truth = advance(sys, truth, times[k] - truth.t, env, &events);
                truth.t = times[k];
                if (cfg.truth_process_noise) truth.x += draw_w(rng);
                truth_states.row(static_cast<Eigen::Index>(k)) = truth.x.transpose();
                ys[k] = TimedMeasurement{times[k], c * truth.x + draw_v(rng)};
            }
            for (const auto& e : events) {
                if (e.transition == scen.uncertain_transition) {
                    first_impact = e.t;
                    break;
                }
            }

            for (FilterVariant est : cfg.estimators) {
                fc.variant = est;
                const auto beliefs = run_filter(sys, prior, ys, fc);
                TrialReport r;
                r.trial = trial;
                r.estimator = est;
                r.times = times;
                r.per_step_abs_error.resize(static_cast<Eigen::Index>(steps), n);
                for (std::size_t k = 0; k < steps; ++k) {
                    const auto kk = static_cast<Eigen::Index>(k);
                    r.per_step_abs_error.row(kk) =
                        (beliefs[k].mean.transpose() - truth_states.row(kk)).cwiseAbs();
                }
                r.mse = r.per_step_abs_error.array().square().mean();
                trial_reports.push_back(std::move(r));
            }
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Config || e.kind() == ErrorKind::InvalidArgument) throw;
            ++failed;
            continue;
        }
        if (first_impact) first_impacts.push_back(*first_impact);
        for (auto& r : trial_reports) result.reports.push_back(std::move(r));
    }
    if (static_cast<double>(failed) > 0.05 * static_cast<double>(cfg.n_trials))
        throw Error(ErrorKind::NumericalDivergence,
                    std::to_string(failed) + " of " + std::to_string(cfg.n_trials) + " trials failed");

    result.summary = summarize(result.reports, cfg.error_metric);
    result.summary.n_failed = failed;
    result.summary.state_labels = scen.state_labels;
    if (result.summary.times.empty()) result.summary.times = times;
    if (!first_impacts.empty()) {
        result.summary.first_impact_t = *std::min_element(first_impacts.begin(), first_impacts.end());
        result.summary.last_impact_t = *std::max_element(first_impacts.begin(), first_impacts.end());
    }
    return result;
}

}  // namespace uaskf
