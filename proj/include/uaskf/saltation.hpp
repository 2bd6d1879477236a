#pragma once

#include <cmath>

#include "uaskf/hybrid_core.hpp"

namespace uaskf {

/// Derivatives of one hybrid event, evaluated at the pre-impact point with
/// the mean reset parameters.
template <typename Scalar>
struct EventLinearization {
    MatrixX<Scalar> d_x_reset;      // n_J x n_I
    VectorX<Scalar> d_t_reset;      // n_J
    MatrixX<Scalar> d_theta_reset;  // n_J x p
    RowVectorX<Scalar> d_x_guard;   // 1 x n_I
    Scalar d_t_guard{0};
    VectorX<Scalar> f_pre;   // F_I(t*, x_pre)
    VectorX<Scalar> f_post;  // F_J(t*, x_post)
};

template <typename Scalar>
struct SaltationBundle {
    MatrixX<Scalar> xi_x;        // classical saltation matrix
    VectorX<Scalar> xi_g;        // guard saltation matrix (one column)
    MatrixX<Scalar> d_theta_r;   // reset-parameter Jacobian
    Scalar denom{0};             // D_xg f_I + D_tg
};

/// Saltation matrix, guard saltation matrix and reset-parameter Jacobian.
///
/// xi_g = (D_xR f_I + D_tR - f_J) / denom and xi_x = D_xR - xi_g D_xg, which
/// expands to the classical D_xR + (f_J - D_xR f_I - D_tR) D_xg / denom.
template <typename Scalar>
SaltationBundle<Scalar> saltation_bundle(const EventLinearization<Scalar>& lin,
                                         double transversality_tol = 1e-8) {
    using std::abs;
    const Scalar denom = lin.d_x_guard.dot(lin.f_pre) + lin.d_t_guard;
    if (!(abs(denom) >= Scalar(transversality_tol)))
        throw Error(ErrorKind::TransversalityViolation,
                    "guard approached tangentially (|D_xg f + D_tg| below tolerance)");
    SaltationBundle<Scalar> b;
    b.denom = denom;
    b.xi_g = (lin.d_x_reset * lin.f_pre + lin.d_t_reset - lin.f_post) / denom;
    b.xi_x = lin.d_x_reset + (lin.f_post - lin.d_x_reset * lin.f_pre - lin.d_t_reset) *
                                 lin.d_x_guard / denom;
    b.d_theta_r = lin.d_theta_reset;
    return b;
}

/// [[xi_x, xi_g], [0, 1]]: maps (dx-, delta_g) to (dx+, delta_g).
template <typename Scalar>
MatrixX<Scalar> extended_saltation(const SaltationBundle<Scalar>& b) {
    const auto nj = b.xi_x.rows(), ni = b.xi_x.cols();
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(nj + 1, ni + 1);
    out.topLeftCorner(nj, ni) = b.xi_x;
    out.topRightCorner(nj, 1) = b.xi_g;
    out(nj, ni) = Scalar(1);
    return out;
}

namespace detail {
template <typename Scalar>
void require_psd(const MatrixX<Scalar>& s, const char* what) {
    if (s.rows() == 0) return;
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(symmetrized(s), Eigen::EigenvaluesOnly);
    using std::abs;
    using std::max;
    const Scalar scale = max(Scalar(1), abs(eig.eigenvalues().maxCoeff()));
    if (eig.eigenvalues().minCoeff() < Scalar(-1e-8) * scale)
        throw Error(ErrorKind::InvalidCovariance, std::string(what) + " is not positive semidefinite");
}
}  // namespace detail

/// Post-event covariance
///   xi_x S xi_x^T + xi_g s_g^2 xi_g^T + D_thetaR S_theta D_thetaR^T,
/// symmetrized. Each term is formed on its own so that zero guard and
/// parameter uncertainty reproduces the classical map bit for bit.
template <typename Scalar>
MatrixX<Scalar> propagate_event_covariance(const SaltationBundle<Scalar>& b,
                                           const MatrixX<Scalar>& sigma_x, Scalar sigma_g_sq,
                                           const MatrixX<Scalar>& sigma_theta) {
    if (sigma_x.rows() != b.xi_x.cols() || sigma_x.cols() != b.xi_x.cols())
        throw Error(ErrorKind::InvalidArgument, "state covariance shape mismatch");
    if (sigma_theta.rows() != b.d_theta_r.cols() || sigma_theta.cols() != b.d_theta_r.cols())
        throw Error(ErrorKind::InvalidArgument, "parameter covariance shape mismatch");
    if (sigma_g_sq < Scalar(0)) throw Error(ErrorKind::InvalidCovariance, "negative guard variance");
    detail::require_psd(sigma_x, "state covariance");
    detail::require_psd(sigma_theta, "parameter covariance");

    MatrixX<Scalar> out = b.xi_x * sigma_x * b.xi_x.transpose();
    if (sigma_g_sq != Scalar(0)) {
        const MatrixX<Scalar> guard_term = (b.xi_g * sigma_g_sq) * b.xi_g.transpose();
        out += guard_term;
    }
    if (b.d_theta_r.cols() > 0) {
        const MatrixX<Scalar> reset_term = b.d_theta_r * sigma_theta * b.d_theta_r.transpose();
        out += reset_term;
    }
    return symmetrized(out);
}

/// Joint covariance of (x+, delta_g) from the extended saltation matrix with
/// no prior state/guard correlation; the off-diagonal block is xi_g s_g^2.
template <typename Scalar>
MatrixX<Scalar> extended_event_covariance(const SaltationBundle<Scalar>& b,
                                          const MatrixX<Scalar>& sigma_x, Scalar sigma_g_sq) {
    const auto ni = sigma_x.rows();
    MatrixX<Scalar> prior = MatrixX<Scalar>::Zero(ni + 1, ni + 1);
    prior.topLeftCorner(ni, ni) = sigma_x;
    prior(ni, ni) = sigma_g_sq;
    const MatrixX<Scalar> xi = extended_saltation(b);
    return symmetrized(xi * prior * xi.transpose());
}

/// Reduces a full-dimensional guard displacement covariance to the variance
/// along the guard normal: D_xg S D_xg^T.
template <typename Scalar>
Scalar project_guard_covariance(const RowVectorX<Scalar>& d_x_guard, const MatrixX<Scalar>& sigma) {
    return (d_x_guard * sigma * d_x_guard.transpose())(0, 0);
}

/// The data of one event on a concrete system.
struct EventContext {
    double t = 0.0;
    std::size_t transition = 0;
    Vector x_pre;
    Vector x_post;
    Vector f_pre;
    Vector f_post;
};

/// Builds the context for `transition` at (t, x_pre); the reset is applied
/// with the mean parameters.
EventContext make_event_context(const HybridSystem& system, std::size_t transition, double t,
                                const Vector& x_pre);

EventLinearization<double> linearize_event(const HybridSystem& system, const EventContext& ctx);

SaltationBundle<double> saltation_bundle(const HybridSystem& system, const EventContext& ctx);

}  // namespace uaskf
