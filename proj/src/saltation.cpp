#include "uaskf/saltation.hpp"

namespace uaskf {

EventContext make_event_context(const HybridSystem& system, std::size_t transition, double t,
                                const Vector& x_pre) {
    const Transition& tr = system.transition(transition);
    EventContext ctx;
    ctx.t = t;
    ctx.transition = transition;
    ctx.x_pre = x_pre;
    ctx.x_post = tr.reset.apply(t, x_pre, tr.reset.theta_mean);
    ctx.f_pre = eval_field(system, tr.from, t, x_pre);
    ctx.f_post = eval_field(system, tr.to, t, ctx.x_post);
    return ctx;
}

EventLinearization<double> linearize_event(const HybridSystem& system, const EventContext& ctx) {
    const Transition& tr = system.transition(ctx.transition);
    const Vector& theta = tr.reset.theta_mean;
    EventLinearization<double> lin;
    lin.d_x_reset = reset_jac_x(system, tr, ctx.t, ctx.x_pre, theta);
    lin.d_t_reset = reset_jac_t(system, tr, ctx.t, ctx.x_pre, theta);
    lin.d_theta_reset = reset_jac_theta(system, tr, ctx.t, ctx.x_pre, theta);
    lin.d_x_guard = guard_grad_x(system, tr, ctx.t, ctx.x_pre, theta);
    lin.d_t_guard = guard_grad_t(system, tr, ctx.t, ctx.x_pre, theta);
    lin.f_pre = ctx.f_pre;
    lin.f_post = ctx.f_post;
    return lin;
}

SaltationBundle<double> saltation_bundle(const HybridSystem& system, const EventContext& ctx) {
    return saltation_bundle(linearize_event(system, ctx), system.options().transversality_tol);
}

}  // namespace uaskf
