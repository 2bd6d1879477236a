#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "uaskf/filters.hpp"
#include "uaskf/hybrid_core.hpp"

namespace uaskf {

struct SampleCloud {
    Matrix particles;  // N x n, one row per particle
    double t = 0.0;
    std::vector<ModeId> modes;
    std::size_t excluded = 0;  // particles dropped after diverging or missing the guard
};

/// When to stop each particle.
struct StopRule {
    enum class Kind { Horizon, FirstEventPlusSettle };
    Kind kind = Kind::Horizon;
    double value = 1.0;  // horizon T, or settle time tau after the first event
};

struct PropagationSpec {
    const HybridSystem* system = nullptr;
    GaussianBelief initial;
    std::vector<double> sigma_g;        // per transition
    std::vector<Matrix> sigma_theta;    // per transition
    std::size_t n_samples = 1000;
    StopRule stop;
    bool require_event = true;  // particles that never reach a guard are excluded
};

/// Deterministic per-index random stream derived from (seed, index).
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index);

/// Draws from N(mean, cov) using a symmetric square root, so PSD (including
/// singular) covariances are accepted.
class GaussianSampler {
public:
    GaussianSampler(Vector mean, const Matrix& cov);
    template <typename Rng>
    Vector operator()(Rng& rng) const {
        std::normal_distribution<double> n01(0.0, 1.0);
        Vector z(mean_.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n01(rng);
        return mean_ + root_ * z;
    }
    const Matrix& root() const noexcept { return root_; }

private:
    Vector mean_;
    Matrix root_;
};

/// Environment draw: offsets ~ N(0, sigma_g^2), theta ~ N(theta_mean, Sigma_theta).
template <typename Rng>
Environment sample_environment(const HybridSystem& system, const std::vector<double>& sigma_g,
                               const std::vector<Matrix>& sigma_theta, Rng& rng) {
    Environment env = Environment::nominal(system);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t i = 0; i < system.transitions().size(); ++i) {
        const double sg = i < sigma_g.size() ? sigma_g[i] : 0.0;
        env.guard_offsets[i] = sg * n01(rng);
        if (i < sigma_theta.size() && sigma_theta[i].size() > 0) {
            GaussianSampler draw(env.theta[i], sigma_theta[i]);
            env.theta[i] = draw(rng);
        }
    }
    return env;
}

SampleCloud sample_propagate(const PropagationSpec& spec, std::uint64_t seed);

/// Sample mean and unbiased (N - 1) covariance of a single-mode cloud.
GaussianBelief empirical_moments(const SampleCloud& cloud);

/// KL(G0 || G1) for Gaussians.
double kl_divergence(const GaussianBelief& g0, const GaussianBelief& g1);

}  // namespace uaskf
