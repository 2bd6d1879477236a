#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "uaskf/experiments.hpp"

using namespace uaskf;
using oracle::vec;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("uaskf_test_" + name);
    fs::remove_all(dir);
    return dir;
}

ExperimentConfig tiny_ball(std::size_t trials = 2, double duration = 0.03) {
    auto cfg = default_config("ball2d");
    cfg.n_trials = trials;
    cfg.duration = duration;
    return cfg;
}

TrialReport report(std::size_t trial, FilterVariant est, Matrix err) {
    TrialReport r;
    r.trial = trial;
    r.estimator = est;
    for (Eigen::Index k = 0; k < err.rows(); ++k) r.times.push_back(0.1 * static_cast<double>(k + 1));
    r.mse = err.array().square().mean();
    r.per_step_abs_error = std::move(err);
    return r;
}

}  // namespace

TEST_CASE("defaults for every system validate") {
    for (const auto& name : {"ball2d", "circle_drop", "aslip"}) {
        CAPTURE(name);
        CHECK_NOTHROW(validate_config(default_config(name)));
    }
    CHECK(default_config("aslip").dt == 0.005);
    CHECK(default_config("ball2d").dt == 0.01);
    CHECK_THROWS_AS(default_config("pogo"), Error);
}

TEST_CASE("config parsing keeps defaults for absent keys") {
    const auto c = parse_config(R"({"system": "circle_drop", "n_trials": 7, "seed": 99, "estimators": ["uaSKF", "EKF"]})");
    CHECK(c.n_trials == 7);
    CHECK(c.seed == 99);
    CHECK(c.duration == 3.0);
    CHECK(c.initial_mean == default_config("circle_drop").initial_mean);
    CHECK(c.estimators == std::vector<FilterVariant>{FilterVariant::EKF, FilterVariant::UASKF});
}

TEST_CASE("config round trip") {
    auto c = default_config("ball2d");
    c.seed = 12345678901234ULL;
    c.error_metric = ErrorMetric::L2;
    c.truth_process_noise = true;
    c.sigma_theta_diag = vec({0.05, 0.02});
    const auto back = parse_config(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(back.seed == c.seed);
    CHECK(back.error_metric == ErrorMetric::L2);
}

TEST_CASE("bad configs are rejected") {
    const char* bad[] = {
        "not json",
        "[]",
        R"({"n_trials": 3})",
        R"({"system": "pogo"})",
        R"({"system": "ball2d", "n_trials": 0})",
        R"({"system": "ball2d", "dt": -0.1})",
        R"({"system": "ball2d", "duration": 0.001})",
        R"({"system": "ball2d", "initial_mean": [0, 1]})",
        R"({"system": "ball2d", "meas_noise_diag": [1, -1]})",
        R"({"system": "ball2d", "sigma_g": -0.5})",
        R"({"system": "ball2d", "estimators": ["UKF"]})",
        R"({"system": "ball2d", "estimators": []})",
        R"({"system": "ball2d", "error_metric": "linf"})",
        R"({"system": "ball2d", "seed": "one"})",
        R"({"system": "circle_drop", "sigma_theta_diag": [0.1]})",
    };
    for (const char* text : bad) {
        CAPTURE(text);
        try {
            parse_config(text);
            FAIL("accepted a bad config");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Config);
        }
    }
    try {
        load_config("/nonexistent/config.json");
        FAIL("read a missing file");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
}

TEST_CASE("sign test tail probabilities") {
    const std::vector<double> all_pos(10, 1.0);
    CHECK(sign_test(all_pos) == doctest::Approx(0.001953125).epsilon(1e-12));
    std::vector<double> balanced{1, 1, 1, 1, 1, -1, -1, -1, -1, -1};
    CHECK(sign_test(balanced) == 1.0);
    std::vector<double> nine{1, 1, 1, 1, 1, 1, 1, 1, 1, -1};
    CHECK(sign_test(nine) == doctest::Approx(22.0 / 1024.0).epsilon(1e-12));
    std::vector<double> mirrored{-1, -1, -1, -1, -1, -1, -1, -1, -1, 1};
    CHECK(sign_test(mirrored) == doctest::Approx(sign_test(nine)));
    // Ties do not count.
    std::vector<double> with_ties{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0};
    CHECK(sign_test(with_ties) == sign_test(all_pos));
    const std::vector<double> ties(4, 0.0);
    try {
        sign_test(ties);
        FAIL("expected undefined test");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UndefinedTest);
    }
}

TEST_CASE("sign test stays in range for large samples") {
    std::vector<double> d(1000, 1.0);
    for (int i = 0; i < 400; ++i) d[static_cast<std::size_t>(i)] = -1.0;
    const double p = sign_test(d);
    CHECK(p > 0.0);
    CHECK(p < 1e-9);
    d.assign(1001, 1.0);
    for (int i = 0; i < 500; ++i) d[static_cast<std::size_t>(i)] = -1.0;
    CHECK(sign_test(d) == 1.0);
}

TEST_CASE("summary statistics") {
    std::vector<TrialReport> rs;
    // Baseline errors 2, candidate 1 on trial 0; both 1 on trial 1; baseline 1, candidate 3 on trial 2.
    rs.push_back(report(0, FilterVariant::SKF, Matrix::Constant(3, 2, 2.0)));
    rs.push_back(report(0, FilterVariant::UASKF, Matrix::Constant(3, 2, 1.0)));
    rs.push_back(report(1, FilterVariant::SKF, Matrix::Constant(3, 2, 1.0)));
    rs.push_back(report(1, FilterVariant::UASKF, Matrix::Constant(3, 2, 1.0)));
    rs.push_back(report(2, FilterVariant::SKF, Matrix::Constant(3, 2, 1.0)));
    rs.push_back(report(2, FilterVariant::UASKF, Matrix::Constant(3, 2, 3.0)));
    rs[0].per_step_abs_error(1, 0) = 4.0;
    rs[0].mse = rs[0].per_step_abs_error.array().square().mean();

    const auto s = summarize(rs, ErrorMetric::PerDimAbs);
    CHECK(s.n_trials == 3);
    CHECK(s.n_improved == 1);
    CHECK(s.n_worse == 1);
    // Per-trial improvements: (mse0 - 1)/mse0, 0, -800%.
    CHECK(*s.median_mse_improvement_pct == 0.0);
    CHECK(*s.sign_test_p == 1.0);

    // Mean |e| is 8/6 vs 10/6 at steps 0 and 2, and 10/6 for both at step 1.
    CHECK(*s.peak_time == doctest::Approx(0.2));
    CHECK(*s.peak_avg_error_improvement_pct == doctest::Approx(0.0));
    CHECK(s.mean_error_curves.at(FilterVariant::SKF)(1, 0) == doctest::Approx(2.0));
    CHECK(s.per_dim_mean_improvement_pct.size() == 2);

    const auto l2 = summarize(rs, ErrorMetric::L2);
    CHECK(l2.mean_error_curves.at(FilterVariant::SKF).cols() == 1);
    CHECK(l2.mean_error_curves.at(FilterVariant::SKF)(0, 0) ==
          doctest::Approx((std::sqrt(8.0) + 2 * std::sqrt(2.0)) / 3.0));
}

TEST_CASE("median and peak follow their definitions") {
    std::vector<TrialReport> rs;
    const double base[] = {4.0, 2.0, 5.0, 1.0};
    const double cand[] = {3.0, 1.0, 5.0, 0.5};
    for (std::size_t i = 0; i < 4; ++i) {
        Matrix b = Matrix::Constant(2, 1, base[i]);
        Matrix c = Matrix::Constant(2, 1, cand[i]);
        c(1, 0) = base[i];  // only the first step improves
        rs.push_back(report(i, FilterVariant::SKF, b));
        rs.push_back(report(i, FilterVariant::UASKF, c));
    }
    const auto s = summarize(rs, ErrorMetric::PerDimAbs);
    std::vector<double> pct;
    for (std::size_t i = 0; i < 4; ++i) {
        const double mb = base[i] * base[i];
        const double mc = 0.5 * (cand[i] * cand[i] + base[i] * base[i]);
        pct.push_back((mb - mc) / mb * 100.0);
    }
    std::sort(pct.begin(), pct.end());
    CHECK(*s.median_mse_improvement_pct == doctest::Approx(0.5 * (pct[1] + pct[2])));
    const double mean_b = (4 + 2 + 5 + 1) / 4.0, mean_c = (3 + 1 + 5 + 0.5) / 4.0;
    CHECK(*s.peak_avg_error_improvement_pct == doctest::Approx((mean_b - mean_c) / mean_b * 100.0));
    CHECK(*s.peak_time == doctest::Approx(0.1));
    CHECK(*s.sign_test_p == doctest::Approx(0.25));  // 3 of 3 non-ties positive
}

TEST_CASE("empty input writes header-only files") {
    const auto dir = scratch("empty");
    write_reports(BenchmarkResult{}, dir);
    CHECK(slurp(dir / "errors.csv") == "trial,estimator,t,state_index,abs_error\n");
    CHECK(slurp(dir / "mse.csv") == "trial,estimator,mse\n");
    const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(j["median_mse_improvement_pct"].is_null());
    CHECK(j["sign_test_p"].is_null());
    CHECK_FALSE(fs::exists(dir / "curves.svg"));
    fs::remove_all(dir);
}

TEST_CASE("report files have the documented shape") {
    const auto cfg = tiny_ball();
    const auto result = run_filter_benchmark(cfg);
    REQUIRE(result.reports.size() == 4);
    for (const auto& r : result.reports) {
        CHECK(r.mse >= 0.0);
        CHECK(std::abs(r.mse - r.per_step_abs_error.array().square().mean()) <= 1e-12);
    }
    const auto dir = scratch("shape");
    write_reports(result, dir);
    const auto errors = slurp(dir / "errors.csv");
    CHECK(count_lines(errors) == 1 + 48);
    CHECK(errors.rfind("trial,estimator,t,state_index,abs_error\n0,SKF,0.01", 0) == 0);
    CHECK(count_lines(slurp(dir / "mse.csv")) == 1 + 4);
    const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(j["n_trials"] == 2);
    CHECK(j["times"].size() == 3);
    CHECK(j["sign_test_p"].get<double>() >= 0.0);
    CHECK(j["sign_test_p"].get<double>() <= 1.0);
    CHECK(fs::exists(dir / "curves.svg"));

    // Row order does not depend on the order of the reports.
    auto shuffled = result;
    std::reverse(shuffled.reports.begin(), shuffled.reports.end());
    const auto dir2 = scratch("shape2");
    write_reports(shuffled, dir2);
    CHECK(slurp(dir2 / "errors.csv") == errors);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("unwritable output directories surface the path") {
    const auto file = scratch("blocker");
    std::ofstream(file) << "x";
    try {
        write_reports(BenchmarkResult{}, file / "sub");
        FAIL("wrote under a file");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
        CHECK(std::string(e.what()).find("blocker") != std::string::npos);
    }
    fs::remove(file);
}

TEST_CASE("benchmarks are deterministic in the seed") {
    auto cfg = tiny_ball(3, 0.6);
    cfg.estimators = {FilterVariant::EKF, FilterVariant::SKF, FilterVariant::UASKF};
    const auto a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    write_reports(run_filter_benchmark(cfg), a);
    write_reports(run_filter_benchmark(cfg), b);
    cfg.seed = 2;
    write_reports(run_filter_benchmark(cfg), c);
    for (const char* f : {"errors.csv", "mse.csv", "summary.json", "curves.svg"}) {
        CAPTURE(f);
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(slurp(a / "mse.csv") != slurp(c / "mse.csv"));
    for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("all estimators see the same truth and measurements") {
    // Before any event the three variants are the same linear filter.
    auto cfg = tiny_ball(5, 0.2);
    cfg.estimators = {FilterVariant::EKF, FilterVariant::SKF, FilterVariant::UASKF};
    const auto result = run_filter_benchmark(cfg);
    for (std::size_t trial = 0; trial < 5; ++trial) {
        std::vector<const TrialReport*> rs;
        for (const auto& r : result.reports)
            if (r.trial == trial) rs.push_back(&r);
        REQUIRE(rs.size() == 3);
        CHECK(rs[0]->per_step_abs_error.row(0) == rs[1]->per_step_abs_error.row(0));
        CHECK(rs[0]->per_step_abs_error.row(0) == rs[2]->per_step_abs_error.row(0));
    }
}

TEST_CASE("without environment uncertainty the variants coincide") {
    for (const char* name : {"ball2d", "circle_drop"}) {
        CAPTURE(name);
        auto cfg = default_config(name);
        cfg.n_trials = 20;
        cfg.sigma_g = 0.0;
        cfg.sigma_theta_diag = Vector::Zero(cfg.sigma_theta_diag.size());
        const auto result = run_filter_benchmark(cfg);
        for (std::size_t i = 0; i < result.reports.size(); i += 2) {
            REQUIRE(result.reports[i].trial == result.reports[i + 1].trial);
            CHECK(result.reports[i].per_step_abs_error == result.reports[i + 1].per_step_abs_error);
        }
        CHECK(*result.summary.median_mse_improvement_pct == 0.0);
        CHECK(*result.summary.peak_avg_error_improvement_pct == 0.0);
        CHECK(*result.summary.sign_test_p == 1.0);
    }
}

TEST_CASE("impact window is reported") {
    auto cfg = default_config("ball2d");
    cfg.n_trials = 10;
    const auto s = run_filter_benchmark(cfg).summary;
    REQUIRE(s.first_impact_t);
    REQUIRE(s.last_impact_t);
    CHECK(*s.first_impact_t <= *s.last_impact_t);
    CHECK(*s.first_impact_t > 0.2);
    CHECK(*s.last_impact_t < 0.7);
}

TEST_CASE("propagation study report") {
    auto cfg = default_config("ball2d");
    cfg.n_samples = 2000;
    const auto r = run_propagation_experiment(cfg);
    CHECK(r.nominal_impact_t == doctest::Approx(0.4239014278649639).epsilon(1e-9));
    REQUIRE(r.cases.size() == 4);
    CHECK(r.cases[0].name == "none");
    CHECK(r.cases[3].name == "both");
    // Nothing extra to model: the two predictions are the same Gaussian.
    CHECK(r.cases[0].saltation_only.cov == r.cases[0].uncertainty_aware.cov);
    CHECK(r.cases[0].kl_saltation_only == r.cases[0].kl_uncertainty_aware);
    for (const auto& c : r.cases) {
        CAPTURE(c.name);
        CHECK_FALSE(c.failure);
        CHECK(c.n_kept + c.n_excluded == 2000);
        if (c.name != "none") CHECK(c.kl_uncertainty_aware < c.kl_saltation_only);
    }
    const auto dir = scratch("prop");
    write_propagation_report(r, {"x", "y", "vx", "vy"}, dir);
    CHECK(count_lines(slurp(dir / "propagation.csv")) == 5);
    CHECK(count_lines(slurp(dir / "propagation_moments.csv")) == 1 + 4 * 3 * 16);
    CHECK(nlohmann::json::parse(slurp(dir / "propagation_summary.json"))["cases"].size() == 4);
    fs::remove_all(dir);
}
