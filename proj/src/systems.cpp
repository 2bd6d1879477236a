#include "uaskf/systems.hpp"

#include <cmath>

#include <unsupported/Eigen/AutoDiff>

namespace uaskf {

namespace {

template <int N>
using AdScalar = Eigen::AutoDiffScalar<Eigen::Matrix<double, N, 1>>;

// Jacobian of a templated map R^N -> R^M by forward-mode automatic differentiation.
template <int N, typename F>
Matrix ad_jacobian(F&& f, const Vector& x) {
    Eigen::Matrix<AdScalar<N>, N, 1> xa;
    for (int i = 0; i < N; ++i) xa(i) = AdScalar<N>(x(i), N, i);
    const auto y = f(xa);
    Matrix j(y.size(), N);
    for (Eigen::Index r = 0; r < y.size(); ++r) j.row(r) = y(r).derivatives().transpose();
    return j;
}

template <int N>
Eigen::Matrix<double, N, 1> fixed(const Vector& x) {
    if (x.size() != N) throw Error(ErrorKind::InvalidArgument, "state has the wrong dimension");
    return x;
}

// ---------------------------------------------------------------- ball

Vector ballistic_field(const Vector& x, double a_g) {
    Vector f(4);
    f << x(2), x(3), 0.0, -a_g;
    return f;
}

Matrix ballistic_jacobian() {
    Matrix j = Matrix::Zero(4, 4);
    j(0, 2) = 1.0;
    j(1, 3) = 1.0;
    return j;
}

// ---------------------------------------------------------------- circle

template <typename S>
S contact_force(const Eigen::Matrix<S, 4, 1>& x, double a_g) {
    using std::sqrt;
    const S rho_sq = x(0) * x(0) + x(1) * x(1);
    const S rho = sqrt(rho_sq);
    const S pv = x(0) * x(2) + x(1) * x(3);
    const S vv = x(2) * x(2) + x(3) * x(3);
    // Chosen so that the radial acceleration d^2|p|/dt^2 vanishes.
    return (a_g * x(1) - vv + pv * pv / rho_sq) / rho;
}

template <typename S>
Eigen::Matrix<S, 4, 1> constrained_field(const Eigen::Matrix<S, 4, 1>& x, double a_g) {
    using std::sqrt;
    const S rho = sqrt(x(0) * x(0) + x(1) * x(1));
    const S lambda = contact_force(x, a_g);
    Eigen::Matrix<S, 4, 1> f;
    f(0) = x(2);
    f(1) = x(3);
    f(2) = lambda * x(0) / rho;
    f(3) = lambda * x(1) / rho - a_g;
    return f;
}

// ---------------------------------------------------------------- aslip

template <typename S>
struct LegGeometry {
    S dx, dy, len, s, c;
};

template <typename S>
LegGeometry<S> leg_geometry(const Eigen::Matrix<S, 8, 1>& x, double l_b) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    LegGeometry<S> g;
    g.s = sin(x(2));
    g.c = cos(x(2));
    g.dx = x(3) - (x(0) + l_b * g.s);
    g.dy = x(4) - (x(1) - l_b * g.c);
    g.len = sqrt(g.dx * g.dx + g.dy * g.dy);
    return g;
}

template <typename S>
S hip_angle(const Eigen::Matrix<S, 8, 1>& x, double l_b) {
    using std::atan2;
    const auto g = leg_geometry(x, l_b);
    return atan2(g.dx, S(-g.dy)) - x(2);
}

template <typename S>
Eigen::Matrix<S, 8, 1> flight_field(const Eigen::Matrix<S, 8, 1>& x, const AslipParams& p) {
    const auto g = leg_geometry(x, p.l_b);
    const S w = x(7);
    Eigen::Matrix<S, 8, 1> f;
    f(0) = x(5);
    f(1) = x(6);
    f(2) = x(7);
    // Toe carried rigidly with the body: hip velocity plus rotation of the leg.
    f(3) = x(5) + p.l_b * g.c * w - w * g.dy;
    f(4) = x(6) + p.l_b * g.s * w + w * g.dx;
    f(5) = S(0);
    f(6) = S(-p.a_g);
    f(7) = S(0);
    return f;
}

template <typename S>
Eigen::Matrix<S, 8, 1> stance_field(const Eigen::Matrix<S, 8, 1>& x, const AslipParams& p) {
    using std::atan2;
    const auto g = leg_geometry(x, p.l_b);
    const S l2 = g.len * g.len;
    const S phi = atan2(g.dx, S(-g.dy)) - x(2);

    const S dl_dx = -g.dx / g.len;
    const S dl_dy = -g.dy / g.len;
    const S dl_dth = -p.l_b * (g.dx * g.c + g.dy * g.s) / g.len;
    const S dphi_dx = g.dy / l2;
    const S dphi_dy = -g.dx / l2;
    const S dphi_dth = p.l_b * (g.dy * g.c - g.dx * g.s) / l2 - 1.0;

    const S leg = p.k_l * (g.len - p.l_0);
    const S hip = p.k_h * (phi - p.phi_0);

    Eigen::Matrix<S, 8, 1> f;
    f(0) = x(5);
    f(1) = x(6);
    f(2) = x(7);
    f(3) = S(0);
    f(4) = S(0);
    f(5) = -(leg * dl_dx + hip * dphi_dx) / p.m_b;
    f(6) = -(leg * dl_dy + hip * dphi_dy) / p.m_b - p.a_g;
    f(7) = -(leg * dl_dth + hip * dphi_dth) / p.I_b;
    return f;
}

void validate(const BallParams& p) {
    if (!(p.alpha >= 0.0 && p.alpha <= 1.0) || p.sigma_ground < 0.0 || p.sigma_theta < 0.0 ||
        p.sigma_alpha < 0.0 || !(p.a_g > 0.0))
        throw Error(ErrorKind::InvalidArgument, "invalid ball parameters");
}

void validate(const CircleParams& p) {
    if (!(p.radius_mean > 0.0) || p.sigma_radius < 0.0 || !(p.a_g > 0.0))
        throw Error(ErrorKind::InvalidArgument, "invalid circle parameters");
}

void validate(const AslipParams& p) {
    if (!(p.m_b > 0.0 && p.a_g > 0.0 && p.l_b > 0.0 && p.I_b > 0.0 && p.k_h > 0.0 &&
          p.k_l > 0.0 && p.l_0 > 0.0) ||
        p.sigma_ground < 0.0)
        throw Error(ErrorKind::InvalidArgument, "invalid ASLIP parameters");
}

Matrix identity_jac(const Vector& x) { return Matrix::Identity(x.size(), x.size()); }

}  // namespace

HybridSystem make_bouncing_ball(const BallParams& p) {
    validate(p);
    Mode flight{"flight", 4, [a_g = p.a_g](double, const Vector& x) { return ballistic_field(x, a_g); },
                [](double, const Vector&) { return ballistic_jacobian(); }};

    const double offset = p.ground_offset_mean;
    GuardFn guard;
    guard.value = [offset](double, const Vector& x, const Vector& th) {
        return x(1) * std::cos(th(0)) - x(0) * std::sin(th(0)) - offset;
    };
    guard.grad_x = [](double, const Vector& x, const Vector& th) {
        RowVector g = RowVector::Zero(x.size());
        g(0) = -std::sin(th(0));
        g(1) = std::cos(th(0));
        return g;
    };
    guard.grad_t = [](double, const Vector&, const Vector&) { return 0.0; };
    guard.sigma_g = p.sigma_ground;

    // theta = [ground angle] or [ground angle, restitution].
    const bool with_alpha = p.uncertain_restitution;
    const double alpha_fixed = p.alpha;
    auto restitution = [with_alpha, alpha_fixed](const Vector& th) {
        return with_alpha ? th(1) : alpha_fixed;
    };

    ResetFn reset;
    reset.apply = [restitution](double, const Vector& x, const Vector& th) {
        const double s = std::sin(th(0)), c = std::cos(th(0)), k = 1.0 + restitution(th);
        const double w = x(3) * c - x(2) * s;
        Vector out = x;
        out(2) = x(2) + s * k * w;
        out(3) = x(3) - c * k * w;
        return out;
    };
    reset.jac_x = [restitution](double, const Vector&, const Vector& th) {
        const double s = std::sin(th(0)), c = std::cos(th(0)), k = 1.0 + restitution(th);
        Matrix j = Matrix::Identity(4, 4);
        j(2, 2) = 1.0 - k * s * s;
        j(2, 3) = k * s * c;
        j(3, 2) = k * s * c;
        j(3, 3) = 1.0 - k * c * c;
        return j;
    };
    reset.jac_t = [](double, const Vector&, const Vector&) { return Vector(Vector::Zero(4)); };
    reset.jac_theta = [restitution, with_alpha](double, const Vector& x, const Vector& th) {
        const double s = std::sin(th(0)), c = std::cos(th(0)), k = 1.0 + restitution(th);
        const double w = x(3) * c - x(2) * s;
        const double dw = -x(3) * s - x(2) * c;
        Matrix j = Matrix::Zero(4, th.size());
        j(2, 0) = k * (c * w + s * dw);
        j(3, 0) = k * (s * w - c * dw);
        if (with_alpha) {
            j(2, 1) = s * w;
            j(3, 1) = -c * w;
        }
        return j;
    };
    if (with_alpha) {
        reset.theta_mean = Eigen::Vector2d(p.theta, p.alpha);
        reset.sigma_theta = Eigen::Vector2d(p.sigma_theta * p.sigma_theta, p.sigma_alpha * p.sigma_alpha)
                                .asDiagonal();
    } else {
        reset.theta_mean = Vector::Constant(1, p.theta);
        reset.sigma_theta = Matrix::Constant(1, 1, p.sigma_theta * p.sigma_theta);
    }

    return HybridSystem("ball2d", {std::move(flight)},
                        {Transition{"impact", ModeId{0}, ModeId{0}, std::move(guard), std::move(reset)}});
}

HybridSystem make_circle_drop(const CircleParams& p) {
    validate(p);
    const double a_g = p.a_g;
    Mode aerial{"aerial", 4, [a_g](double, const Vector& x) { return ballistic_field(x, a_g); },
                [](double, const Vector&) { return ballistic_jacobian(); }};
    Mode constrained{
        "constrained", 4,
        [a_g](double, const Vector& x) -> Vector {
            return constrained_field<double>(fixed<4>(x), a_g);
        },
        [a_g](double, const Vector& x) {
            return ad_jacobian<4>([a_g](const auto& xa) { return constrained_field(xa, a_g); }, x);
        }};

    const double r = p.radius_mean;
    GuardFn impact_guard;
    impact_guard.value = [r](double, const Vector& x, const Vector&) { return std::hypot(x(0), x(1)) - r; };
    impact_guard.grad_x = [](double, const Vector& x, const Vector&) {
        const double rho = std::hypot(x(0), x(1));
        RowVector g = RowVector::Zero(4);
        g(0) = x(0) / rho;
        g(1) = x(1) / rho;
        return g;
    };
    impact_guard.grad_t = [](double, const Vector&, const Vector&) { return 0.0; };
    impact_guard.sigma_g = p.sigma_radius;

    // Plastic impact: the velocity component along the outward normal at the
    // contact point is removed. The normal comes from the contact point
    // itself, so the radius enters only through the guard.
    ResetFn plastic;
    plastic.apply = [](double, const Vector& x, const Vector&) {
        const Eigen::Vector2d n = Eigen::Vector2d(x(0), x(1)).normalized();
        const Eigen::Vector2d v(x(2), x(3));
        Vector out = x;
        out.tail<2>() = v - n.dot(v) * n;
        return out;
    };
    plastic.jac_x = [](double, const Vector& x, const Vector&) {
        const Eigen::Vector2d pos(x(0), x(1));
        const double rho = pos.norm();
        const Eigen::Vector2d n = pos / rho;
        const Eigen::Vector2d v(x(2), x(3));
        const Eigen::Matrix2d proj = Eigen::Matrix2d::Identity() - n * n.transpose();
        Matrix j = Matrix::Identity(4, 4);
        j.block<2, 2>(2, 0) = -(n * (proj * v).transpose() + n.dot(v) * proj) / rho;
        j.block<2, 2>(2, 2) = proj;
        return j;
    };
    plastic.jac_t = [](double, const Vector&, const Vector&) { return Vector(Vector::Zero(4)); };
    plastic.jac_theta = [](double, const Vector&, const Vector&) { return Matrix(4, 0); };

    GuardFn liftoff_guard;
    liftoff_guard.value = [a_g](double, const Vector& x, const Vector&) {
        return contact_force<double>(fixed<4>(x), a_g);
    };
    liftoff_guard.grad_x = [a_g](double, const Vector& x, const Vector&) {
        const Matrix j = ad_jacobian<4>(
            [a_g](const auto& xa) {
                using S = typename std::decay_t<decltype(xa)>::Scalar;
                return Eigen::Matrix<S, 1, 1>(contact_force(xa, a_g));
            },
            x);
        return RowVector(j.row(0));
    };
    liftoff_guard.grad_t = [](double, const Vector&, const Vector&) { return 0.0; };

    ResetFn identity;
    identity.apply = [](double, const Vector& x, const Vector&) { return x; };
    identity.jac_x = [](double, const Vector& x, const Vector&) { return identity_jac(x); };
    identity.jac_t = [](double, const Vector& x, const Vector&) { return Vector(Vector::Zero(x.size())); };
    identity.jac_theta = [](double, const Vector& x, const Vector&) { return Matrix(x.size(), 0); };

    return HybridSystem(
        "circle_drop", {std::move(aerial), std::move(constrained)},
        {Transition{"impact", circle::kAerial, circle::kConstrained, std::move(impact_guard), std::move(plastic)},
         Transition{"liftoff", circle::kConstrained, circle::kAerial, std::move(liftoff_guard), identity}});
}

HybridSystem make_aslip(const AslipParams& p) {
    validate(p);
    Mode flight{"flight", 8,
                [p](double, const Vector& x) -> Vector { return flight_field<double>(fixed<8>(x), p); },
                [p](double, const Vector& x) {
                    return ad_jacobian<8>([&p](const auto& xa) { return flight_field(xa, p); }, x);
                }};
    Mode stance{"stance", 8,
                [p](double, const Vector& x) -> Vector { return stance_field<double>(fixed<8>(x), p); },
                [p](double, const Vector& x) {
                    return ad_jacobian<8>([&p](const auto& xa) { return stance_field(xa, p); }, x);
                }};

    GuardFn touchdown;
    const double ground = p.ground_mean;
    touchdown.value = [ground](double, const Vector& x, const Vector&) { return x(4) - ground; };
    touchdown.grad_x = [](double, const Vector& x, const Vector&) {
        RowVector g = RowVector::Zero(x.size());
        g(4) = 1.0;
        return g;
    };
    touchdown.grad_t = [](double, const Vector&, const Vector&) { return 0.0; };
    touchdown.sigma_g = p.sigma_ground;

    GuardFn liftoff;
    liftoff.value = [p](double, const Vector& x, const Vector&) {
        return p.l_0 - leg_geometry<double>(fixed<8>(x), p.l_b).len;
    };
    liftoff.grad_x = [p](double, const Vector& x, const Vector&) {
        const Matrix j = ad_jacobian<8>(
            [&p](const auto& xa) {
                using S = typename std::decay_t<decltype(xa)>::Scalar;
                return Eigen::Matrix<S, 1, 1>(S(p.l_0) - leg_geometry(xa, p.l_b).len);
            },
            x);
        return RowVector(j.row(0));
    };
    liftoff.grad_t = [](double, const Vector&, const Vector&) { return 0.0; };

    // The toe pins on touchdown and is carried by the body after liftoff;
    // both are identity maps on this state.
    ResetFn identity;
    identity.apply = [](double, const Vector& x, const Vector&) { return x; };
    identity.jac_x = [](double, const Vector& x, const Vector&) { return identity_jac(x); };
    identity.jac_t = [](double, const Vector& x, const Vector&) { return Vector(Vector::Zero(x.size())); };
    identity.jac_theta = [](double, const Vector& x, const Vector&) { return Matrix(x.size(), 0); };

    return HybridSystem(
        "aslip", {std::move(flight), std::move(stance)},
        {Transition{"touchdown", aslip::kFlight, aslip::kStance, std::move(touchdown), identity},
         Transition{"liftoff", aslip::kStance, aslip::kFlight, std::move(liftoff), identity}});
}

double circle_contact_force(const CircleParams& p, const Vector& x) {
    return contact_force<double>(fixed<4>(x), p.a_g);
}

double aslip_leg_length(const AslipParams& p, const Vector& x) {
    return leg_geometry<double>(fixed<8>(x), p.l_b).len;
}

double aslip_hip_angle(const AslipParams& p, const Vector& x) {
    return hip_angle<double>(fixed<8>(x), p.l_b);
}

double aslip_stance_energy(const AslipParams& p, const Vector& x) {
    const double l = aslip_leg_length(p, x);
    const double phi = aslip_hip_angle(p, x);
    const double kinetic = 0.5 * p.m_b * (x(5) * x(5) + x(6) * x(6)) + 0.5 * p.I_b * x(7) * x(7);
    return kinetic + p.m_b * p.a_g * x(1) + 0.5 * p.k_l * (l - p.l_0) * (l - p.l_0) +
           0.5 * p.k_h * (phi - p.phi_0) * (phi - p.phi_0);
}

const std::vector<std::string>& system_names() {
    static const std::vector<std::string> names{"ball2d", "circle_drop", "aslip"};
    return names;
}

}  // namespace uaskf
