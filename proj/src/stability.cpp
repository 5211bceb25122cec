#include "fnm/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fnm/error.hpp"

namespace fnm {

double clamp_context(double h) noexcept { return std::clamp(h, kContextClampLow, kContextClampHigh); }

void CurveParams::validate() const {
    if (!(prior > 0.0 && prior < 1.0))
        throw InvalidInput("prior must lie strictly inside (0,1), got " + std::to_string(prior));
    if (!(detector_prob >= 0.0 && detector_prob <= 1.0))
        throw InvalidInput("detector probability must lie in [0,1], got " + std::to_string(detector_prob));
}

namespace {

struct Ratios {
    double u; // a / p
    double v; // (1 - a) / (1 - p)
};

Ratios ratios(const CurveParams& params) {
    params.validate();
    return {params.detector_prob / params.prior, (1.0 - params.detector_prob) / (1.0 - params.prior)};
}

} // namespace

double posterior_at(const CurveParams& params, double h) {
    const auto [u, v] = ratios(params);
    h = std::clamp(h, 0.0, 1.0);
    double t = u * h;
    double f = v * (1.0 - h);
    if (!(t + f > 0.0)) {
        // 0/0 only when the detector and the context rule each other out.
        h = clamp_context(h);
        t = u * h;
        f = v * (1.0 - h);
    }
    return t / (t + f);
}

double posterior_derivative(const CurveParams& params, double h) {
    const auto [u, v] = ratios(params);
    h = std::clamp(h, 0.0, 1.0);
    double denom = u * h + v * (1.0 - h);
    if (!(denom > 0.0)) {
        h = clamp_context(h);
        denom = u * h + v * (1.0 - h);
    }
    return u * v / (denom * denom);
}

std::vector<CurvePoint> sample_curve(const CurveParams& params, std::size_t samples) {
    params.validate();
    if (samples < 2)
        throw InvalidInput("a curve needs at least two samples");
    std::vector<CurvePoint> out;
    out.reserve(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        const double h = static_cast<double>(k) / static_cast<double>(samples - 1);
        out.push_back({h, posterior_at(params, h), posterior_derivative(params, h)});
    }
    return out;
}

double invert_posterior(const CurveParams& params, double target) {
    const auto [u, v] = ratios(params);
    if (params.detector_prob <= 0.0 || params.detector_prob >= 1.0)
        throw InvalidInput("posterior curve is constant for detector probability 0 or 1; not invertible");
    if (!(target >= 0.0 && target <= 1.0))
        throw InvalidInput("target posterior must lie in [0,1]");
    return v * target / (u * (1.0 - target) + v * target);
}

double epsilon_h(const CurveParams& params, double h_star, double epsilon) {
    params.validate();
    if (params.detector_prob <= 0.0 || params.detector_prob >= 1.0)
        throw InvalidInput("posterior curve is constant for detector probability 0 or 1; not invertible");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw InvalidInput("epsilon must lie in (0,1)");
    if (!(h_star >= 0.0 && h_star <= 1.0))
        throw InvalidInput("h* must lie in [0,1]");

    const double p_star = posterior_at(params, h_star);
    const double h_ref = clamp_context(h_star);
    double best = std::numeric_limits<double>::infinity();
    if (p_star - epsilon >= 0.0)
        best = std::min(best, std::abs(h_ref - invert_posterior(params, p_star - epsilon)));
    if (p_star + epsilon <= 1.0)
        best = std::min(best, std::abs(h_ref - invert_posterior(params, p_star + epsilon)));
    if (std::isinf(best))
        best = std::max(h_ref, 1.0 - h_ref);
    return best;
}

std::uint64_t required_samples(double eps_h, double delta) {
    if (!(eps_h > 0.0) || !std::isfinite(eps_h))
        throw InvalidInput("required_samples: eps_h must be positive");
    if (!(delta > 0.0 && delta < 1.0))
        throw InvalidInput("required_samples: delta must lie in (0,1)");
    const double m = std::log(2.0 / delta) / (2.0 * eps_h * eps_h);
    if (m >= static_cast<double>(std::numeric_limits<std::uint64_t>::max()))
        return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(std::ceil(m));
}

void GatingConfig::validate() const {
    if (!(derivative_threshold > 0.0))
        throw InvalidInput("derivative threshold must be positive");
    if (!(delta > 0.0 && delta < 1.0))
        throw InvalidInput("delta must lie in (0,1)");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw InvalidInput("epsilon must lie in (0,1)");
}

bool should_gate(const CurveParams& params, double h, std::uint64_t observed_samples,
                 const GatingConfig& config) {
    if (config.mode == GatingMode::off)
        return false;
    if (params.detector_prob <= 0.0 || params.detector_prob >= 1.0)
        return false;
    const bool use_derivative = config.mode == GatingMode::derivative || config.mode == GatingMode::both;
    const bool use_samples = config.mode == GatingMode::sample_count || config.mode == GatingMode::both;
    if (use_derivative && posterior_derivative(params, h) > config.derivative_threshold)
        return true;
    if (use_samples) {
        const double eps = epsilon_h(params, std::clamp(h, 0.0, 1.0), config.epsilon);
        if (observed_samples < required_samples(eps, config.delta))
            return true;
    }
    return false;
}

const char* to_string(GatingMode mode) noexcept {
    switch (mode) {
    case GatingMode::off: return "off";
    case GatingMode::derivative: return "derivative";
    case GatingMode::sample_count: return "sample-count";
    case GatingMode::both: return "both";
    }
    return "?";
}

GatingMode gating_mode_from_string(std::string_view name) {
    if (name == "off" || name == "none") return GatingMode::off;
    if (name == "derivative") return GatingMode::derivative;
    if (name == "sample-count" || name == "samples") return GatingMode::sample_count;
    if (name == "both") return GatingMode::both;
    throw InvalidInput("unknown gating mode '" + std::string(name) + "'");
}

} // namespace fnm
