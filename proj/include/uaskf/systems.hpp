#pragma once

#include <string>
#include <vector>

#include "uaskf/hybrid_core.hpp"

namespace uaskf {

/// Point mass bouncing on a tilted plane. State [x1, x2, x3, x4] =
/// [horizontal, vertical, horizontal velocity, vertical velocity].
struct BallParams {
    double a_g = 9.8;
    double theta = -0.25;  // ground angle, the reset parameter
    double alpha = 0.8;    // coefficient of restitution
    double ground_offset_mean = 0.0;
    double sigma_ground = 0.25;
    double sigma_theta = 0.05;
    // Exposes alpha as a second reset parameter with this std. dev.
    bool uncertain_restitution = false;
    double sigma_alpha = 0.0;
};

/// Point mass dropped onto a circle of uncertain radius centered at the origin.
struct CircleParams {
    double radius_mean = 2.0;
    double sigma_radius = 0.25;
    double a_g = 9.8;
};

/// Planar hopper with body inertia, hip offset, leg spring and hip torsion
/// spring. State [x_b, y_b, theta_b, x_t, y_t, xd_b, yd_b, thetad_b].
struct AslipParams {
    double m_b = 1.0;
    double a_g = 9.8;
    double l_b = 0.5;
    double I_b = 1.0;
    double k_h = 100.0;
    double k_l = 100.0;
    double l_0 = 1.0;
    double phi_0 = 0.0;
    double ground_mean = 0.0;
    double sigma_ground = 0.01;
};

namespace ball {
inline constexpr std::size_t kImpact = 0;
}

namespace circle {
inline constexpr ModeId kAerial{0};
inline constexpr ModeId kConstrained{1};
inline constexpr std::size_t kImpact = 0;
inline constexpr std::size_t kLiftoff = 1;
}  // namespace circle

namespace aslip {
inline constexpr ModeId kFlight{0};
inline constexpr ModeId kStance{1};
inline constexpr std::size_t kTouchdown = 0;
inline constexpr std::size_t kLiftoff = 1;
}  // namespace aslip

HybridSystem make_bouncing_ball(const BallParams& p = {});
HybridSystem make_circle_drop(const CircleParams& p = {});
HybridSystem make_aslip(const AslipParams& p = {});

/// Normal force per unit mass the circle exerts on a sliding mass; positive
/// pushes outward.
double circle_contact_force(const CircleParams& p, const Vector& x);

/// Hip-to-toe distance.
double aslip_leg_length(const AslipParams& p, const Vector& x);
/// Leg angle relative to the body axis.
double aslip_hip_angle(const AslipParams& p, const Vector& x);
/// Kinetic + gravitational + leg and hip spring energy with the toe pinned.
double aslip_stance_energy(const AslipParams& p, const Vector& x);

/// Identifiers accepted by the CLI.
const std::vector<std::string>& system_names();

}  // namespace uaskf
