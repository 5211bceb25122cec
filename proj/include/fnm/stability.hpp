#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fnm {

// Context probabilities are clamped into this interval where the curve would
// otherwise be 0/0 (a detector response of 0 or 1 against a context of the
// opposite certainty).
inline constexpr double kContextClampLow = 1e-9;
inline constexpr double kContextClampHigh = 1.0 - 1e-9;

double clamp_context(double h) noexcept;

// One curve of the posterior as a function of the context probability:
// a fixed detector response and a fixed prior.
struct CurveParams {
    double detector_prob = 0.5; // P(X | Y_i), in [0,1]
    double prior = 0.5;         // P(X), strictly inside (0,1)

    void validate() const;
};

// Normalized posterior t / (t + f), t = a h / p, f = (1-a)(1-h)/(1-p).
// Throws InvalidInput for a prior outside (0,1).
double posterior_at(const CurveParams& params, double h);

// d posterior / dh = u v / (u h + v (1-h))^2 with u = a/p, v = (1-a)/(1-p).
double posterior_derivative(const CurveParams& params, double h);

struct CurvePoint {
    double h = 0.0;
    double posterior = 0.0;
    double derivative = 0.0;
};

// `samples` evenly spaced points over h in [0, 1], endpoints included.
std::vector<CurvePoint> sample_curve(const CurveParams& params, std::size_t samples);

// Context value whose posterior equals `target`. Requires a in (0,1).
double invert_posterior(const CurveParams& params, double target);

// Largest error in h that keeps the posterior within epsilon of its value at
// h_star. If p* - epsilon or p* + epsilon leaves [0,1] only the other side
// constrains the error; if both leave, every h in [0,1] is acceptable and the
// distance to the farther end of [0,1] is returned.
double epsilon_h(const CurveParams& params, double h_star, double epsilon);

// Hoeffding sample count: ceil(ln(2/delta) / (2 eps_h^2)).
std::uint64_t required_samples(double eps_h, double delta);

enum class GatingMode { off, derivative, sample_count, both };

struct GatingConfig {
    GatingMode mode = GatingMode::derivative;
    double derivative_threshold = 10.0;
    double delta = 0.1;
    double epsilon = 0.1;

    void validate() const;
};

// True when the context measurement should be ignored (h replaced by the
// prior). Detector responses of exactly 0 or 1 make the posterior flat in h,
// so they never gate.
bool should_gate(const CurveParams& params, double h, std::uint64_t observed_samples,
                 const GatingConfig& config);

const char* to_string(GatingMode mode) noexcept;
GatingMode gating_mode_from_string(std::string_view name);

} // namespace fnm
