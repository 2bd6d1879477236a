#include "uaskf/filters.hpp"

#include <algorithm>
#include <cmath>

namespace uaskf {

const char* to_string(FilterVariant v) {
    switch (v) {
        case FilterVariant::EKF: return "EKF";
        case FilterVariant::SKF: return "SKF";
        case FilterVariant::UASKF: return "uaSKF";
    }
    return "?";
}

std::optional<FilterVariant> parse_variant(const std::string& s) {
    if (s == "EKF" || s == "ekf") return FilterVariant::EKF;
    if (s == "SKF" || s == "skf") return FilterVariant::SKF;
    if (s == "uaSKF" || s == "UASKF" || s == "uaskf") return FilterVariant::UASKF;
    return std::nullopt;
}

void check_belief(const GaussianBelief& b) {
    if (b.cov.rows() != b.mean.size() || b.cov.cols() != b.mean.size())
        throw Error(ErrorKind::InvalidArgument, "belief covariance shape mismatch");
    if (b.cov.size() > 0 && (b.cov - b.cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw Error(ErrorKind::InvalidCovariance, "belief covariance is not symmetric");
    const double scale = std::max(1.0, b.cov.size() > 0 ? b.cov.cwiseAbs().maxCoeff() : 0.0);
    if (min_eigenvalue(b.cov) < -1e-8 * scale)
        throw Error(ErrorKind::InvalidCovariance, "belief covariance is not PSD");
}

MeasurementModel MeasurementModel::uniform(std::size_t n_modes, const Matrix& c, const Matrix& v) {
    return MeasurementModel{std::vector<Matrix>(n_modes, c), std::vector<Matrix>(n_modes, v)};
}

ProcessNoise ProcessNoise::uniform(std::size_t n_modes, const Matrix& w, double step) {
    return ProcessNoise{std::vector<Matrix>(n_modes, w), step};
}

Matrix ProcessNoise::scaled(ModeId mode, double dt) const {
    if (mode.index >= W.size()) throw Error(ErrorKind::InvalidArgument, "no process noise for mode");
    if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "process noise step must be positive");
    return (dt / step) * W[mode.index];
}

namespace {

// Smooth prediction without the guard-crossing check.
GaussianBelief flow_belief(const HybridSystem& system, const GaussianBelief& b, double dt,
                           const ProcessNoise& noise) {
    FlowResult fr = flow(system, b.mode, b.t, b.mean, dt, true);
    const Matrix& a = *fr.jacobian;
    GaussianBelief out;
    out.mode = b.mode;
    out.mean = std::move(fr.x);
    out.t = b.t + dt;
    Matrix cov = a * b.cov * a.transpose();
    cov += noise.scaled(b.mode, dt);
    out.cov = symmetrized(cov);
    return out;
}

// Outgoing guard that the state lies in while flowing into it, if any.
std::optional<std::size_t> entered_guard(const HybridSystem& system, const GaussianBelief& b) {
    for (std::size_t idx : system.outgoing(b.mode)) {
        const Transition& tr = system.transition(idx);
        const Vector& theta = tr.reset.theta_mean;
        if (guard_value(tr, b.t, b.mean, theta) > 0.0) continue;
        const double rate = guard_grad_x(system, tr, b.t, b.mean, theta)
                                .dot(eval_field(system, b.mode, b.t, b.mean)) +
                            guard_grad_t(system, tr, b.t, b.mean, theta);
        if (rate < -system.options().transversality_tol) return idx;
    }
    return std::nullopt;
}

}  // namespace

GaussianBelief predict_smooth(const HybridSystem& system, const GaussianBelief& belief, double dt,
                              const ProcessNoise& noise) {
    if (!(dt >= 0.0)) throw Error(ErrorKind::InvalidArgument, "prediction step must be >= 0");
    if (detect_event(system, belief.mode, belief.t, belief.mean, dt))
        throw Error(ErrorKind::ContractViolation,
                    "mean crosses a guard during a smooth prediction; use hybrid_predict");
    return flow_belief(system, belief, dt, noise);
}

GaussianBelief measurement_update(const GaussianBelief& belief, const Vector& y,
                                  const MeasurementModel& model) {
    if (belief.mode.index >= model.C.size() || belief.mode.index >= model.V.size())
        throw Error(ErrorKind::InvalidArgument, "no measurement model for mode");
    const Matrix& c = model.C[belief.mode.index];
    const Matrix& v = model.V[belief.mode.index];
    if (c.cols() != belief.mean.size() || c.rows() != y.size() || v.rows() != y.size() ||
        v.cols() != y.size())
        throw Error(ErrorKind::InvalidArgument, "measurement dimensions are inconsistent");

    const Matrix s = symmetrized(Matrix(c * belief.cov * c.transpose() + v));
    const Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12))
        throw Error(ErrorKind::SingularInnovation, "innovation covariance is not invertible");

    // K = Sigma C^T S^-1, formed as (S^-1 C Sigma)^T.
    const Matrix gain = llt.solve(c * belief.cov).transpose();
    GaussianBelief out = belief;
    out.mean = belief.mean + gain * (y - c * belief.mean);
    Matrix cov = belief.cov - gain * c * belief.cov;
    out.cov = symmetrized(cov);
    return out;
}

GaussianBelief apply_event(const HybridSystem& system, const GaussianBelief& belief,
                           std::size_t transition, FilterVariant variant) {
    const Transition& tr = system.transition(transition);
    if (!(tr.from == belief.mode))
        throw Error(ErrorKind::InvalidArgument, "transition does not leave the belief's mode");
    const EventContext ctx = make_event_context(system, transition, belief.t, belief.mean);

    GaussianBelief out;
    out.mode = tr.to;
    out.t = belief.t;
    out.mean = ctx.x_post;
    switch (variant) {
        case FilterVariant::EKF: {
            const Matrix j = reset_jac_x(system, tr, ctx.t, ctx.x_pre, tr.reset.theta_mean);
            Matrix cov = j * belief.cov * j.transpose();
            out.cov = symmetrized(cov);
            break;
        }
        case FilterVariant::SKF: {
            const auto bundle = saltation_bundle(system, ctx);
            const Matrix zero_theta = Matrix::Zero(bundle.d_theta_r.cols(), bundle.d_theta_r.cols());
            out.cov = propagate_event_covariance<double>(bundle, belief.cov, 0.0, zero_theta);
            break;
        }
        case FilterVariant::UASKF: {
            const auto bundle = saltation_bundle(system, ctx);
            const double sg = tr.guard.sigma_g;
            out.cov = propagate_event_covariance<double>(bundle, belief.cov, sg * sg,
                                                         tr.reset.sigma_theta);
            break;
        }
    }
    return out;
}

GaussianBelief hybrid_predict(const HybridSystem& system, const GaussianBelief& belief, double dt,
                              const ProcessNoise& noise, FilterVariant variant,
                              std::vector<EventRecord>* events) {
    if (!(dt >= 0.0)) throw Error(ErrorKind::InvalidArgument, "prediction step must be >= 0");
    const double t_end = belief.t + dt;
    GaussianBelief b = belief;
    int count = 0;
    while (true) {
        const double remaining = t_end - b.t;
        auto ev = remaining > 0.0 ? detect_event(system, b.mode, b.t, b.mean, remaining)
                                  : std::nullopt;
        if (!ev) {
            b = flow_belief(system, b, std::max(remaining, 0.0), noise);
            b.t = t_end;
            return b;
        }
        if (++count > system.options().max_events_per_step)
            throw Error(ErrorKind::ZenoSuspicion, "too many events in one prediction step");
        GaussianBelief pre = flow_belief(system, b, ev->t - b.t, noise);
        pre.mean = ev->x;
        pre.t = ev->t;
        GaussianBelief post = apply_event(system, pre, ev->transition, variant);
        if (events) events->push_back(EventRecord{ev->t, ev->transition, pre.mean, post.mean});
        b = std::move(post);
    }
}

GaussianBelief posterior_guard_apply(const HybridSystem& system, const GaussianBelief& belief,
                                     FilterVariant variant) {
    GaussianBelief b = belief;
    for (int i = 0; i < system.options().max_events_per_step; ++i) {
        const auto idx = entered_guard(system, b);
        if (!idx) return b;
        b = apply_event(system, b, *idx, variant);
    }
    return b;
}

std::vector<GaussianBelief> run_filter(const HybridSystem& system, const GaussianBelief& initial,
                                       const std::vector<TimedMeasurement>& measurements,
                                       const FilterConfig& config) {
    std::vector<GaussianBelief> out;
    out.reserve(measurements.size());
    GaussianBelief b = initial;
    for (const auto& m : measurements) {
        if (m.t < b.t) throw Error(ErrorKind::InvalidArgument, "measurements must be time ordered");
        b = hybrid_predict(system, b, m.t - b.t, config.noise, config.variant);
        if (m.y.size() > 0) {
            b = measurement_update(b, m.y, config.measurement);
            b = posterior_guard_apply(system, b, config.variant);
        }
        out.push_back(b);
    }
    return out;
}

}  // namespace uaskf
