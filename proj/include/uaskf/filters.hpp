#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uaskf/hybrid_core.hpp"
#include "uaskf/saltation.hpp"

namespace uaskf {

enum class FilterVariant {
    EKF,    // reset Jacobian at events
    SKF,    // saltation matrix at events
    UASKF,  // saltation matrix plus guard and reset-parameter terms
};

const char* to_string(FilterVariant v);
std::optional<FilterVariant> parse_variant(const std::string& s);

struct GaussianBelief {
    ModeId mode;
    Vector mean;
    Matrix cov;
    double t = 0.0;
};

/// Throws InvalidCovariance unless cov is symmetric (1e-10) and PSD (-1e-8,
/// relative to the largest entry once that exceeds 1).
void check_belief(const GaussianBelief& b);

/// Per-mode linear measurement y = C x + v, v ~ N(0, V).
struct MeasurementModel {
    std::vector<Matrix> C;
    std::vector<Matrix> V;

    static MeasurementModel uniform(std::size_t n_modes, const Matrix& c, const Matrix& v);
};

/// Per-mode discrete process covariance W for one full step of length `step`;
/// partial steps of length d use (d / step) W.
struct ProcessNoise {
    std::vector<Matrix> W;
    double step = 0.01;

    static ProcessNoise uniform(std::size_t n_modes, const Matrix& w, double step);
    Matrix scaled(ModeId mode, double dt) const;
};

GaussianBelief predict_smooth(const HybridSystem& system, const GaussianBelief& belief, double dt,
                              const ProcessNoise& noise);

GaussianBelief measurement_update(const GaussianBelief& belief, const Vector& y,
                                  const MeasurementModel& model);

/// Instantaneous event map at the current mean: mean through the mean-parameter
/// reset, covariance through the variant's event map, mode switched.
GaussianBelief apply_event(const HybridSystem& system, const GaussianBelief& belief,
                           std::size_t transition, FilterVariant variant);

/// A priori update across dt, sub-stepping at every guard the mean reaches.
GaussianBelief hybrid_predict(const HybridSystem& system, const GaussianBelief& belief, double dt,
                              const ProcessNoise& noise, FilterVariant variant,
                              std::vector<EventRecord>* events = nullptr);

/// Applies the event map while the posterior mean sits in a guard it is
/// flowing into.
GaussianBelief posterior_guard_apply(const HybridSystem& system, const GaussianBelief& belief,
                                     FilterVariant variant);

struct TimedMeasurement {
    double t = 0.0;
    Vector y;  // empty: no measurement at this step
};

struct FilterConfig {
    FilterVariant variant = FilterVariant::UASKF;
    ProcessNoise noise;
    MeasurementModel measurement;
};

std::vector<GaussianBelief> run_filter(const HybridSystem& system, const GaussianBelief& initial,
                                       const std::vector<TimedMeasurement>& measurements,
                                       const FilterConfig& config);

}  // namespace uaskf
