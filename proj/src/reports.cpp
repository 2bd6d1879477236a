#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "uaskf/experiments.hpp"

namespace uaskf {

namespace {

std::string num(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "null"; }

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

template <typename Range, typename F>
std::string json_array(const Range& r, F&& fmt) {
    std::string out = "[";
    bool first = true;
    for (const auto& x : r) {
        if (!first) out += ", ";
        out += fmt(x);
        first = false;
    }
    return out + "]";
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());
}

std::string matrix_json(const Matrix& m) {
    std::string out = "[";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (r) out += ", ";
        out += "[";
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out += ", ";
            out += num(m(r, c));
        }
        out += "]";
    }
    return out + "]";
}

void write_svg(const BenchmarkSummary& s, const std::filesystem::path& path) {
    if (s.mean_error_curves.empty() || s.times.empty()) return;
    const Eigen::Index dims = s.mean_error_curves.begin()->second.cols();
    const double panel_w = 360, panel_h = 200, margin = 40;
    const int cols = static_cast<int>(std::min<Eigen::Index>(dims, 4));
    const int rows = static_cast<int>((dims + cols - 1) / cols);
    const double width = cols * (panel_w + margin) + margin;
    const double height = rows * (panel_h + margin) + margin;
    const double t0 = s.times.front(), t1 = s.times.back();

    auto out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
        << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (Eigen::Index d = 0; d < dims; ++d) {
        const double ox = margin + static_cast<double>(d % cols) * (panel_w + margin);
        const double oy = margin + static_cast<double>(d / cols) * (panel_h + margin);
        double ymax = 0.0;
        for (const auto& [est, curve] : s.mean_error_curves) ymax = std::max(ymax, curve.col(d).maxCoeff());
        if (!(ymax > 0.0)) ymax = 1.0;
        out << "<rect x=\"" << num(ox) << "\" y=\"" << num(oy) << "\" width=\"" << num(panel_w)
            << "\" height=\"" << num(panel_h) << "\" fill=\"none\" stroke=\"black\"/>\n";
        const std::string label =
            d < static_cast<Eigen::Index>(s.state_labels.size()) ? s.state_labels[d] : "dim " + std::to_string(d);
        out << "<text x=\"" << num(ox + 4) << "\" y=\"" << num(oy - 4) << "\">" << label
            << " (max " << num(ymax) << ")</text>\n";
        for (const auto& [est, curve] : s.mean_error_curves) {
            const char* style = est == FilterVariant::UASKF ? "stroke=\"blue\""
                                : est == FilterVariant::SKF ? "stroke=\"red\" stroke-dasharray=\"5,3\""
                                                            : "stroke=\"green\" stroke-dasharray=\"2,2\"";
            out << "<polyline fill=\"none\" " << style << " points=\"";
            for (Eigen::Index k = 0; k < curve.rows(); ++k) {
                const double x = ox + (t1 > t0 ? (s.times[k] - t0) / (t1 - t0) : 0.0) * panel_w;
                const double y = oy + panel_h - curve(k, d) / ymax * panel_h;
                out << num(x) << "," << num(y) << " ";
            }
            out << "\"/>\n";
        }
    }
    out << "</svg>\n";
    finish(out, path);
}

}  // namespace

void write_reports(const BenchmarkResult& result, const std::filesystem::path& out_dir,
                   bool svg, bool write_errors) {
    ensure_dir(out_dir);
    std::vector<std::size_t> order(result.reports.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = result.reports[a];
        const auto& rb = result.reports[b];
        return std::tie(ra.trial, ra.estimator) < std::tie(rb.trial, rb.estimator);
    });

    if (write_errors) {
        const auto path = out_dir / "errors.csv";
        auto out = open_out(path);
        out << "trial,estimator,t,state_index,abs_error\n";
        for (std::size_t i : order) {
            const auto& r = result.reports[i];
            for (Eigen::Index k = 0; k < r.per_step_abs_error.rows(); ++k) {
                for (Eigen::Index d = 0; d < r.per_step_abs_error.cols(); ++d) {
                    out << r.trial << ',' << to_string(r.estimator) << ',' << num(r.times[k]) << ','
                        << d << ',' << num(r.per_step_abs_error(k, d)) << '\n';
                }
            }
        }
        finish(out, path);
    }
    {
        const auto path = out_dir / "mse.csv";
        auto out = open_out(path);
        out << "trial,estimator,mse\n";
        for (std::size_t i : order) {
            const auto& r = result.reports[i];
            out << r.trial << ',' << to_string(r.estimator) << ',' << num(r.mse) << '\n';
        }
        finish(out, path);
    }
    {
        const auto& s = result.summary;
        const auto path = out_dir / "summary.json";
        auto out = open_out(path);
        out << "{\n";
        out << "  \"n_trials\": " << s.n_trials << ",\n";
        out << "  \"n_failed\": " << s.n_failed << ",\n";
        out << "  \"baseline\": \"SKF\",\n  \"candidate\": \"uaSKF\",\n";
        out << "  \"median_mse_improvement_pct\": " << opt_num(s.median_mse_improvement_pct) << ",\n";
        out << "  \"peak_avg_error_improvement_pct\": " << opt_num(s.peak_avg_error_improvement_pct) << ",\n";
        out << "  \"peak_time\": " << opt_num(s.peak_time) << ",\n";
        out << "  \"sign_test_p\": " << opt_num(s.sign_test_p) << ",\n";
        out << "  \"n_improved\": " << s.n_improved << ",\n";
        out << "  \"n_worse\": " << s.n_worse << ",\n";
        out << "  \"first_impact_t\": " << opt_num(s.first_impact_t) << ",\n";
        out << "  \"last_impact_t\": " << opt_num(s.last_impact_t) << ",\n";
        out << "  \"state_labels\": " << json_array(s.state_labels, quoted) << ",\n";
        out << "  \"per_dim_mean_improvement_pct\": " << json_array(s.per_dim_mean_improvement_pct, num) << ",\n";
        out << "  \"per_dim_peak_improvement_pct\": " << json_array(s.per_dim_peak_improvement_pct, num) << ",\n";
        out << "  \"times\": " << json_array(s.times, num) << ",\n";
        out << "  \"mean_error_curves\": {";
        bool first = true;
        for (const auto& [est, curve] : s.mean_error_curves) {
            out << (first ? "\n" : ",\n") << "    " << quoted(to_string(est)) << ": " << matrix_json(curve);
            first = false;
        }
        out << (first ? "}\n" : "\n  }\n");
        out << "}\n";
        finish(out, path);
    }
    if (svg) write_svg(result.summary, out_dir / "curves.svg");
}

void write_propagation_report(const PropagationReport& report,
                              const std::vector<std::string>& labels,
                              const std::filesystem::path& out_dir) {
    ensure_dir(out_dir);
    {
        const auto path = out_dir / "propagation.csv";
        auto out = open_out(path);
        out << "case,kl_saltation_only,kl_uncertainty_aware,n_kept,n_excluded,failure\n";
        for (const auto& c : report.cases) {
            out << c.name << ',' << (c.failure ? "" : num(c.kl_saltation_only)) << ','
                << (c.failure ? "" : num(c.kl_uncertainty_aware)) << ',' << c.n_kept << ','
                << c.n_excluded << ',' << (c.failure ? quoted(*c.failure) : "") << '\n';
        }
        finish(out, path);
    }
    {
        const auto path = out_dir / "propagation_moments.csv";
        auto out = open_out(path);
        out << "case,source,row,col,label_row,label_col,mean_row,cov\n";
        for (const auto& c : report.cases) {
            const std::pair<const char*, const GaussianBelief*> sources[] = {
                {"empirical", &c.empirical}, {"saltation_only", &c.saltation_only},
                {"uncertainty_aware", &c.uncertainty_aware}};
            for (const auto& [name, g] : sources) {
                for (Eigen::Index r = 0; r < g->cov.rows(); ++r) {
                    for (Eigen::Index col = 0; col < g->cov.cols(); ++col) {
                        auto lab = [&](Eigen::Index i) {
                            return i < static_cast<Eigen::Index>(labels.size()) ? labels[i] : std::to_string(i);
                        };
                        out << c.name << ',' << name << ',' << r << ',' << col << ',' << lab(r) << ','
                            << lab(col) << ',' << num(g->mean(r)) << ',' << num(g->cov(r, col)) << '\n';
                    }
                }
            }
        }
        finish(out, path);
    }
    {
        const auto path = out_dir / "propagation_summary.json";
        auto out = open_out(path);
        out << "{\n  \"nominal_impact_t\": " << num(report.nominal_impact_t) << ",\n  \"cases\": [";
        bool first = true;
        for (const auto& c : report.cases) {
            out << (first ? "\n" : ",\n") << "    {\"case\": " << quoted(c.name)
                << ", \"kl_saltation_only\": " << (c.failure ? "null" : num(c.kl_saltation_only))
                << ", \"kl_uncertainty_aware\": " << (c.failure ? "null" : num(c.kl_uncertainty_aware))
                << ", \"n_kept\": " << c.n_kept << ", \"n_excluded\": " << c.n_excluded << "}";
            first = false;
        }
        out << "\n  ]\n}\n";
        finish(out, path);
    }
}

}  // namespace uaskf
