#include "uaskf/montecarlo.hpp"

#include <cmath>

namespace uaskf {

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

GaussianSampler::GaussianSampler(Vector mean, const Matrix& cov) : mean_(std::move(mean)) {
    if (cov.rows() != mean_.size() || cov.cols() != mean_.size())
        throw Error(ErrorKind::InvalidArgument, "sampler covariance shape mismatch");
    if (mean_.size() == 0) {
        root_.resize(0, 0);
        return;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(cov));
    if (eig.eigenvalues().minCoeff() < -1e-8)
        throw Error(ErrorKind::InvalidCovariance, "sampler covariance is not PSD");
    const Vector sqrt_vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    root_ = eig.eigenvectors() * sqrt_vals.asDiagonal() * eig.eigenvectors().transpose();
}

namespace {

// Runs one particle; returns false when it must be excluded.
bool propagate_particle(const PropagationSpec& spec, const Vector& x0, const Environment& env,
                        HybridState& out) {
    const HybridSystem& sys = *spec.system;
    HybridState s{spec.initial.mode, spec.initial.t, x0};
    std::vector<EventRecord> events;
    try {
        if (spec.stop.kind == StopRule::Kind::Horizon) {
            s = advance(sys, s, spec.stop.value, env, &events);
        } else {
            // Search for the first event in bounded chunks, then settle.
            const double chunk = 0.05;
            const double give_up = spec.initial.t + 1e3 * chunk;
            while (events.empty() && s.t < give_up) {
                auto ev = detect_event(sys, s.mode, s.t, s.x, chunk, env);
                if (!ev) {
                    s.x = flow(sys, s.mode, s.t, s.x, chunk).x;
                    s.t += chunk;
                    continue;
                }
                const Transition& tr = sys.transition(ev->transition);
                Vector post = tr.reset.apply(ev->t, ev->x, env.theta[ev->transition]);
                events.push_back(EventRecord{ev->t, ev->transition, ev->x, post});
                s = HybridState{tr.to, ev->t, std::move(post)};
            }
            if (!events.empty()) s = advance(sys, s, spec.stop.value, env, &events);
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::NumericalDivergence || e.kind() == ErrorKind::GrazingContact ||
            e.kind() == ErrorKind::ZenoSuspicion)
            return false;
        throw;
    }
    if (spec.require_event && events.empty()) return false;
    out = std::move(s);
    return true;
}

}  // namespace

SampleCloud sample_propagate(const PropagationSpec& spec, std::uint64_t seed) {
    if (spec.system == nullptr) throw Error(ErrorKind::InvalidArgument, "propagation needs a system");
    if (spec.n_samples < 2) throw Error(ErrorKind::InvalidArgument, "need at least two samples");
    if (!(spec.stop.value > 0.0)) throw Error(ErrorKind::InvalidArgument, "stop time must be positive");
    check_belief(spec.initial);

    const GaussianSampler draw_x0(spec.initial.mean, spec.initial.cov);
    const auto n = static_cast<Eigen::Index>(spec.n_samples);
    const auto dim = spec.initial.mean.size();
    SampleCloud cloud;
    cloud.particles.resize(n, dim);
    double t_sum = 0.0;
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto rng = substream(seed, static_cast<std::uint64_t>(i));
        const Vector x0 = draw_x0(rng);
        const Environment env = sample_environment(*spec.system, spec.sigma_g, spec.sigma_theta, rng);
        HybridState end;
        if (!propagate_particle(spec, x0, env, end)) {
            ++cloud.excluded;
            continue;
        }
        if (end.x.size() != dim)
            throw Error(ErrorKind::InvalidArgument, "particle changed state dimension");
        cloud.particles.row(kept++) = end.x.transpose();
        cloud.modes.push_back(end.mode);
        t_sum += end.t;
    }
    cloud.particles.conservativeResize(kept, dim);
    if (static_cast<double>(cloud.excluded) > 0.01 * static_cast<double>(n))
        throw Error(ErrorKind::NumericalDivergence,
                    std::to_string(cloud.excluded) + " of " + std::to_string(n) +
                        " particles diverged or never reached a guard");
    cloud.t = kept > 0 ? t_sum / static_cast<double>(kept) : spec.initial.t;
    return cloud;
}

GaussianBelief empirical_moments(const SampleCloud& cloud) {
    const auto n = cloud.particles.rows();
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "need at least two particles");
    if (!cloud.particles.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite particle");
    for (const auto& m : cloud.modes) {
        if (!(m == cloud.modes.front()))
            throw Error(ErrorKind::MultimodalCloud, "particles occupy different modes");
    }
    GaussianBelief g;
    g.mode = cloud.modes.empty() ? ModeId{} : cloud.modes.front();
    g.t = cloud.t;
    g.mean = cloud.particles.colwise().mean().transpose();
    const Matrix centered = cloud.particles.rowwise() - g.mean.transpose();
    g.cov = symmetrized(Matrix(centered.transpose() * centered / static_cast<double>(n - 1)));
    return g;
}

namespace {

Eigen::LLT<Matrix> factor_pd(const Matrix& cov) {
    if (min_eigenvalue(cov) > 1e-12) {
        Eigen::LLT<Matrix> llt(cov);
        if (llt.info() == Eigen::Success) return llt;
    }
    const Matrix reg = cov + 1e-10 * Matrix::Identity(cov.rows(), cov.cols());
    Eigen::LLT<Matrix> llt(reg);
    if (llt.info() != Eigen::Success || min_eigenvalue(reg) <= 1e-12)
        throw Error(ErrorKind::SingularCovariance, "covariance is singular");
    return llt;
}

double log_det(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

double kl_divergence(const GaussianBelief& g0, const GaussianBelief& g1) {
    const auto k = g0.mean.size();
    if (g1.mean.size() != k || g0.cov.rows() != k || g1.cov.rows() != k)
        throw Error(ErrorKind::InvalidArgument, "KL divergence needs equal dimensions");
    const auto llt0 = factor_pd(g0.cov);
    const auto llt1 = factor_pd(g1.cov);
    const Vector dmu = g1.mean - g0.mean;
    const double trace = llt1.solve(g0.cov).trace();
    const double maha = dmu.dot(llt1.solve(dmu));
    const double kl =
        0.5 * (trace + maha - static_cast<double>(k) + log_det(llt1) - log_det(llt0));
    return std::max(kl, 0.0);
}

}  // namespace uaskf
