#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uaskf/types.hpp"

namespace uaskf {

// Every callable receives the transition's parameter vector theta so that
// guards whose geometry shares the reset parameters (e.g. a tilted ground)
// see the same draw as the reset.
using GuardValueFn = std::function<double(double t, const Vector& x, const Vector& theta)>;
using GuardGradFn = std::function<RowVector(double t, const Vector& x, const Vector& theta)>;
using ResetMapFn = std::function<Vector(double t, const Vector& x, const Vector& theta)>;
using ResetJacFn = std::function<Matrix(double t, const Vector& x, const Vector& theta)>;
using ResetTimeJacFn = std::function<Vector(double t, const Vector& x, const Vector& theta)>;
using FieldFn = std::function<Vector(double t, const Vector& x)>;
using FieldJacFn = std::function<Matrix(double t, const Vector& x)>;

/// Guard g(t, x); the transition fires when g <= 0.
struct GuardFn {
    GuardValueFn value;
    GuardGradFn grad_x;  // optional, central differences when empty
    GuardValueFn grad_t;  // optional, central differences when empty
    double sigma_g = 0.0;  // std. dev. of the offset along the guard normal
};

/// Parameterized reset R(t, x, theta).
struct ResetFn {
    ResetMapFn apply;
    ResetJacFn jac_x;  // optional
    ResetTimeJacFn jac_t;  // optional
    ResetJacFn jac_theta;  // optional
    Vector theta_mean = Vector(0);
    Matrix sigma_theta = Matrix(0, 0);
};

struct Mode {
    std::string name;
    std::size_t dim = 0;
    FieldFn field;
    FieldJacFn jac_x;  // optional
};

struct Transition {
    std::string name;
    ModeId from;
    ModeId to;
    GuardFn guard;
    ResetFn reset;
};

/// Fixed-step integration and event handling constants.
struct SimulationOptions {
    double h_max = 1e-3;
    double guard_zero_tol = 1e-10;
    int max_bisection_iterations = 80;
    double transversality_tol = 1e-8;
    int max_events_per_step = 8;
    double fd_step = 1e-6;
};

class HybridSystem {
public:
    HybridSystem() = default;
    HybridSystem(std::string name, std::vector<Mode> modes, std::vector<Transition> transitions,
                 SimulationOptions options = {});

    const std::string& name() const noexcept { return name_; }
    const std::vector<Mode>& modes() const noexcept { return modes_; }
    const std::vector<Transition>& transitions() const noexcept { return transitions_; }
    const Mode& mode(ModeId id) const;
    const Transition& transition(std::size_t index) const;
    /// Indices of the transitions leaving `id`, in declaration order.
    const std::vector<std::size_t>& outgoing(ModeId id) const;

    const SimulationOptions& options() const noexcept { return options_; }
    SimulationOptions& options() noexcept { return options_; }

private:
    std::string name_;
    std::vector<Mode> modes_;
    std::vector<Transition> transitions_;
    std::vector<std::vector<std::size_t>> outgoing_;
    SimulationOptions options_;
};

/// Per-transition environment realization: guard offsets delta_g and reset
/// parameters theta. Held fixed over a whole trajectory.
struct Environment {
    std::vector<double> guard_offsets;
    std::vector<Vector> theta;

    static Environment nominal(const HybridSystem& system);
};

struct FlowResult {
    Vector x;
    std::optional<Matrix> jacobian;
};

struct DetectedEvent {
    std::size_t transition = 0;
    double t = 0.0;
    Vector x;
};

struct HybridState {
    ModeId mode;
    double t = 0.0;
    Vector x;
};

struct EventRecord {
    double t = 0.0;
    std::size_t transition = 0;
    Vector x_pre;
    Vector x_post;
};

struct TrajectorySample {
    double t = 0.0;
    ModeId mode;
    Vector x;
};

struct HybridTrajectory {
    std::vector<TrajectorySample> samples;
    std::vector<EventRecord> events;
};

// Derivative evaluation, analytic when supplied, central differences otherwise.
Matrix field_jacobian(const HybridSystem& system, ModeId mode, double t, const Vector& x);
double guard_value(const Transition& tr, double t, const Vector& x, const Vector& theta,
                   double offset = 0.0);
RowVector guard_grad_x(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                       const Vector& theta);
double guard_grad_t(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                    const Vector& theta);
Matrix reset_jac_x(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                   const Vector& theta);
Vector reset_jac_t(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                   const Vector& theta);
Matrix reset_jac_theta(const HybridSystem& system, const Transition& tr, double t, const Vector& x,
                       const Vector& theta);

Vector eval_field(const HybridSystem& system, ModeId mode, double t, const Vector& x);

/// Classical RK4 with h = dt / ceil(dt / h_max); optionally integrates the
/// variational equations dA/dt = D_xF A, A(t0) = I alongside the state.
FlowResult flow(const HybridSystem& system, ModeId mode, double t0, const Vector& x0, double dt,
                bool want_jacobian = false);

/// Earliest zero crossing of an outgoing guard in [t0, t0 + dt].
///
/// Guards not clearly positive at (t0, x0) are disarmed until they exceed
/// guard_zero_tol, so a state resting on a guard right after a reset
/// does not re-trigger it. The crossing is bracketed on the h_max grid and
/// refined by bisection, re-flowing from the bracket's grid point with a
/// single RK4 step at each candidate time.
std::optional<DetectedEvent> detect_event(const HybridSystem& system, ModeId mode, double t0,
                                          const Vector& x0, double dt,
                                          const Environment& env);
std::optional<DetectedEvent> detect_event(const HybridSystem& system, ModeId mode, double t0,
                                          const Vector& x0, double dt);

/// Flows for dt, applying every event on the way (resets use env.theta).
HybridState advance(const HybridSystem& system, const HybridState& state, double dt,
                    const Environment& env, std::vector<EventRecord>* events = nullptr);

HybridTrajectory simulate_ground_truth(const HybridSystem& system, ModeId mode0, const Vector& x0,
                                       const Environment& env, double duration, double dt_record);

}  // namespace uaskf
