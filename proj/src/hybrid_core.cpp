#include "uaskf/hybrid_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uaskf {

double min_eigenvalue(const Matrix& s) {
    if (s.rows() == 0) return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(s), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

HybridSystem::HybridSystem(std::string name, std::vector<Mode> modes,
                           std::vector<Transition> transitions, SimulationOptions options)
    : name_(std::move(name)),
      modes_(std::move(modes)),
      transitions_(std::move(transitions)),
      outgoing_(modes_.size()),
      options_(options) {
    if (modes_.empty()) throw Error(ErrorKind::InvalidArgument, "hybrid system needs a mode");
    for (const auto& m : modes_) {
        if (m.dim == 0 || !m.field)
            throw Error(ErrorKind::InvalidArgument, "mode '" + m.name + "' is incomplete");
    }
    for (std::size_t i = 0; i < transitions_.size(); ++i) {
        const auto& tr = transitions_[i];
        if (tr.from.index >= modes_.size() || tr.to.index >= modes_.size())
            throw Error(ErrorKind::InvalidArgument, "transition '" + tr.name + "' has a bad mode index");
        for (std::size_t j = 0; j < i; ++j) {
            if (transitions_[j].from == tr.from && transitions_[j].to == tr.to)
                throw Error(ErrorKind::InvalidArgument, "duplicate transition '" + tr.name + "'");
        }
        if (!tr.guard.value || !tr.reset.apply)
            throw Error(ErrorKind::InvalidArgument, "transition '" + tr.name + "' is incomplete");
        if (tr.guard.sigma_g < 0.0)
            throw Error(ErrorKind::InvalidArgument, "negative sigma_g on '" + tr.name + "'");
        const auto p = tr.reset.theta_mean.size();
        if (tr.reset.sigma_theta.rows() != p || tr.reset.sigma_theta.cols() != p)
            throw Error(ErrorKind::InvalidArgument, "sigma_theta shape mismatch on '" + tr.name + "'");
        if (p > 0) {
            const Matrix& s = tr.reset.sigma_theta;
            if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 || min_eigenvalue(s) < -1e-10)
                throw Error(ErrorKind::InvalidArgument, "sigma_theta not symmetric PSD on '" + tr.name + "'");
        }
        outgoing_[tr.from.index].push_back(i);
    }
}

const Mode& HybridSystem::mode(ModeId id) const {
    if (id.index >= modes_.size()) throw Error(ErrorKind::InvalidArgument, "mode index out of range");
    return modes_[id.index];
}

const Transition& HybridSystem::transition(std::size_t index) const {
    if (index >= transitions_.size())
        throw Error(ErrorKind::InvalidArgument, "transition index out of range");
    return transitions_[index];
}

const std::vector<std::size_t>& HybridSystem::outgoing(ModeId id) const {
    if (id.index >= modes_.size()) throw Error(ErrorKind::InvalidArgument, "mode index out of range");
    return outgoing_[id.index];
}

Environment Environment::nominal(const HybridSystem& system) {
    Environment env;
    env.guard_offsets.assign(system.transitions().size(), 0.0);
    for (const auto& tr : system.transitions()) env.theta.push_back(tr.reset.theta_mean);
    return env;
}

namespace {

double fd_step(double scale, double rel) { return rel * std::max(1.0, std::abs(scale)); }

template <typename F>
Matrix central_jacobian(F&& f, const Vector& x, double rel) {
    Matrix jac;
    Vector xp = x, xm = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = fd_step(x(i), rel);
        xp(i) = x(i) + h;
        xm(i) = x(i) - h;
        const Vector fp = f(xp), fm = f(xm);
        if (i == 0) jac.resize(fp.size(), x.size());
        jac.col(i) = (fp - fm) / (2.0 * h);
        xp(i) = x(i);
        xm(i) = x(i);
    }
    if (x.size() == 0) jac.resize(f(x).size(), 0);
    return jac;
}

void require_dim(const Mode& m, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != m.dim)
        throw Error(ErrorKind::InvalidArgument, "state dimension " + std::to_string(x.size()) +
                                                    " does not match mode '" + m.name + "' (" +
                                                    std::to_string(m.dim) + ")");
}

void require_finite(const Vector& x) {
    if (!x.allFinite()) throw Error(ErrorKind::NumericalDivergence, "non-finite state during flow");
}

struct Rk4 {
    const HybridSystem& system;
    const Mode& mode;

    Vector f(double t, const Vector& x) const { return mode.field(t, x); }

    void step(double t, double h, Vector& x) const {
        const Vector k1 = f(t, x);
        const Vector k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
        const Vector k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
        const Vector k4 = f(t + h, x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        require_finite(x);
    }

    void step(double t, double h, Vector& x, Matrix& a, ModeId id) const {
        auto j = [&](double tt, const Vector& xx) { return field_jacobian(system, id, tt, xx); };
        const Vector x2 = x;
        const Vector k1 = f(t, x2);
        const Matrix a1 = j(t, x2) * a;
        const Vector xb = x2 + 0.5 * h * k1;
        const Vector k2 = f(t + 0.5 * h, xb);
        const Matrix a2 = j(t + 0.5 * h, xb) * (a + 0.5 * h * a1);
        const Vector xc = x2 + 0.5 * h * k2;
        const Vector k3 = f(t + 0.5 * h, xc);
        const Matrix a3 = j(t + 0.5 * h, xc) * (a + 0.5 * h * a2);
        const Vector xd = x2 + h * k3;
        const Vector k4 = f(t + h, xd);
        const Matrix a4 = j(t + h, xd) * (a + h * a3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        a += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        require_finite(x);
    }
};

long step_count(double dt, double h_max) {
    return std::max(1L, static_cast<long>(std::ceil(dt / h_max - 1e-9)));
}

const Vector& theta_for(const Environment& env, std::size_t index) {
    if (index >= env.theta.size())
        throw Error(ErrorKind::InvalidArgument, "environment has no theta for transition");
    return env.theta[index];
}

double offset_for(const Environment& env, std::size_t index) {
    return index < env.guard_offsets.size() ? env.guard_offsets[index] : 0.0;
}

}  // namespace

Matrix field_jacobian(const HybridSystem& system, ModeId mode, double t, const Vector& x) {
    const Mode& m = system.mode(mode);
    if (m.jac_x) return m.jac_x(t, x);
    return central_jacobian([&](const Vector& xx) { return m.field(t, xx); }, x,
                            system.options().fd_step);
}

double guard_value(const Transition& tr, double t, const Vector& x, const Vector& theta,
                   double offset) {
    return tr.guard.value(t, x, theta) - offset;
}

RowVector guard_grad_x(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                       const Vector& theta) {
    if (tr.guard.grad_x) return tr.guard.grad_x(t, x, theta);
    const Matrix j = central_jacobian(
        [&](const Vector& xx) { return Vector::Constant(1, tr.guard.value(t, xx, theta)); }, x,
        system.options().fd_step);
    return j.row(0);
}

double guard_grad_t(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                    const Vector& theta) {
    if (tr.guard.grad_t) return tr.guard.grad_t(t, x, theta);
    const double h = fd_step(t, system.options().fd_step);
    return (tr.guard.value(t + h, x, theta) - tr.guard.value(t - h, x, theta)) / (2.0 * h);
}

Matrix reset_jac_x(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                   const Vector& theta) {
    if (tr.reset.jac_x) return tr.reset.jac_x(t, x, theta);
    return central_jacobian([&](const Vector& xx) { return tr.reset.apply(t, xx, theta); }, x,
                            system.options().fd_step);
}

Vector reset_jac_t(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                   const Vector& theta) {
    if (tr.reset.jac_t) return tr.reset.jac_t(t, x, theta);
    const double h = fd_step(t, system.options().fd_step);
    return (tr.reset.apply(t + h, x, theta) - tr.reset.apply(t - h, x, theta)) / (2.0 * h);
}

Matrix reset_jac_theta(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                       const Vector& theta) {
    if (tr.reset.jac_theta) return tr.reset.jac_theta(t, x, theta);
    const Vector x_post = tr.reset.apply(t, x, theta);
    if (theta.size() == 0) return Matrix(x_post.size(), 0);
    return central_jacobian([&](const Vector& th) { return tr.reset.apply(t, x, th); }, theta,
                            system.options().fd_step);
}

Vector eval_field(const HybridSystem& system, ModeId mode, double t, const Vector& x) {
    const Mode& m = system.mode(mode);
    require_dim(m, x);
    Vector f = m.field(t, x);
    if (static_cast<std::size_t>(f.size()) != m.dim)
        throw Error(ErrorKind::InvalidArgument, "vector field of '" + m.name + "' has wrong length");
    return f;
}

FlowResult flow(const HybridSystem& system, ModeId mode, double t0, const Vector& x0, double dt,
                bool want_jacobian) {
    const Mode& m = system.mode(mode);
    require_dim(m, x0);
    if (!(dt >= 0.0)) throw Error(ErrorKind::InvalidArgument, "flow duration must be >= 0");
    FlowResult out{x0, std::nullopt};
    Matrix a;
    if (want_jacobian) a = Matrix::Identity(x0.size(), x0.size());
    if (dt > 0.0) {
        const Rk4 rk{system, m};
        const long n = step_count(dt, system.options().h_max);
        const double h = dt / static_cast<double>(n);
        for (long k = 0; k < n; ++k) {
            const double t = t0 + static_cast<double>(k) * h;
            if (want_jacobian) {
                rk.step(t, h, out.x, a, mode);
            } else {
                rk.step(t, h, out.x);
            }
        }
    }
    if (want_jacobian) out.jacobian = std::move(a);
    return out;
}

std::optional<DetectedEvent> detect_event(const HybridSystem& system, ModeId mode, double t0,
                                          const Vector& x0, double dt) {
    return detect_event(system, mode, t0, x0, dt, Environment::nominal(system));
}

std::optional<DetectedEvent> detect_event(const HybridSystem& system, ModeId mode, double t0,
                                          const Vector& x0, double dt, const Environment& env) {
    const Mode& m = system.mode(mode);
    require_dim(m, x0);
    if (!(dt > 0.0)) return std::nullopt;
    const auto& outs = system.outgoing(mode);
    if (outs.empty()) return std::nullopt;
    const auto& opt = system.options();

    auto g_of = [&](std::size_t tr_index, double t, const Vector& x) {
        return guard_value(system.transition(tr_index), t, x, theta_for(env, tr_index),
                           offset_for(env, tr_index));
    };

    std::vector<bool> armed(outs.size());
    for (std::size_t i = 0; i < outs.size(); ++i) armed[i] = g_of(outs[i], t0, x0) > opt.guard_zero_tol;

    const Rk4 rk{system, m};
    const long n = step_count(dt, opt.h_max);
    const double h = dt / static_cast<double>(n);
    Vector x = x0;
    for (long k = 0; k < n; ++k) {
        const double t_lo = t0 + static_cast<double>(k) * h;
        const double t_hi = (k + 1 == n) ? t0 + dt : t0 + static_cast<double>(k + 1) * h;
        const Vector x_lo = x;
        rk.step(t_lo, h, x);

        std::optional<DetectedEvent> best;
        for (std::size_t i = 0; i < outs.size(); ++i) {
            const double g_hi = g_of(outs[i], t_hi, x);
            if (!armed[i]) {
                if (g_hi > opt.guard_zero_tol) armed[i] = true;
                continue;
            }
            if (g_hi > 0.0) continue;

            double lo = t_lo, hi = t_hi, g_at_hi = g_hi;
            Vector x_hi = x;
            for (int it = 0; it < opt.max_bisection_iterations; ++it) {
                if (std::abs(g_at_hi) < opt.guard_zero_tol) break;
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                Vector x_mid = x_lo;
                rk.step(t_lo, mid - t_lo, x_mid);
                const double g_mid = g_of(outs[i], mid, x_mid);
                if (g_mid <= 0.0) {
                    hi = mid;
                    g_at_hi = g_mid;
                    x_hi = std::move(x_mid);
                } else {
                    lo = mid;
                }
            }
            if (!best || hi < best->t) best = DetectedEvent{outs[i], hi, std::move(x_hi)};
        }
        if (best) {
            const Transition& tr = system.transition(best->transition);
            const Vector& theta = theta_for(env, best->transition);
            const double denom = guard_grad_x(system, tr, best->t, best->x, theta).dot(
                                     m.field(best->t, best->x)) +
                                 guard_grad_t(system, tr, best->t, best->x, theta);
            if (std::abs(denom) < opt.transversality_tol)
                throw Error(ErrorKind::GrazingContact,
                            "guard '" + tr.name + "' crossed tangentially at t=" + std::to_string(best->t));
            return best;
        }
    }
    return std::nullopt;
}

HybridState advance(const HybridSystem& system, const HybridState& state, double dt,
                    const Environment& env, std::vector<EventRecord>* events) {
    if (!(dt >= 0.0)) throw Error(ErrorKind::InvalidArgument, "advance duration must be >= 0");
    const double t_end = state.t + dt;
    HybridState s = state;
    int count = 0;
    while (s.t < t_end) {
        const double remaining = t_end - s.t;
        auto ev = detect_event(system, s.mode, s.t, s.x, remaining, env);
        if (!ev) {
            s.x = flow(system, s.mode, s.t, s.x, remaining).x;
            s.t = t_end;
            break;
        }
        if (++count > system.options().max_events_per_step)
            throw Error(ErrorKind::ZenoSuspicion,
                        "more than " + std::to_string(system.options().max_events_per_step) +
                            " events within one step");
        const Transition& tr = system.transition(ev->transition);
        Vector x_post = tr.reset.apply(ev->t, ev->x, theta_for(env, ev->transition));
        require_finite(x_post);
        if (events) events->push_back(EventRecord{ev->t, ev->transition, ev->x, x_post});
        s = HybridState{tr.to, ev->t, std::move(x_post)};
    }
    return s;
}

HybridTrajectory simulate_ground_truth(const HybridSystem& system, ModeId mode0, const Vector& x0,
                                       const Environment& env, double duration, double dt_record) {
    if (!(duration > 0.0) || !(dt_record > 0.0))
        throw Error(ErrorKind::InvalidArgument, "duration and dt_record must be positive");
    require_dim(system.mode(mode0), x0);
    HybridTrajectory traj;
    HybridState s{mode0, 0.0, x0};
    traj.samples.push_back({0.0, mode0, x0});
    const long n = static_cast<long>(std::floor(duration / dt_record + 1e-9));
    for (long k = 1; k <= n; ++k) {
        const double t_next = static_cast<double>(k) * dt_record;
        s = advance(system, s, t_next - s.t, env, &traj.events);
        traj.samples.push_back({s.t, s.mode, s.x});
    }
    if (duration - traj.samples.back().t > 1e-12) {
        s = advance(system, s, duration - s.t, env, &traj.events);
        traj.samples.push_back({s.t, s.mode, s.x});
    }
    return traj;
}

}  // namespace uaskf
