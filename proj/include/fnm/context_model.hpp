#pragma once

#include <cstdint>
#include <limits>
#include <span>

#include "fnm/geometry.hpp"

namespace fnm {

// Sample count reported for quantities that are not measured from data
// (priors, exact models).
inline constexpr std::uint64_t kUnlimitedSamples = std::numeric_limits<std::uint64_t>::max();

// A neighbor of the query together with the value it is conditioned on.
// `belief` is the neighbor's current P(X = true); it selects the reference
// frame when several neighbors are present.
struct NeighborAssignment {
    const Detection* detection = nullptr;
    bool present = false;
    double belief = 0.0;
};

struct ConditionalEstimate {
    double prob_true = 0.0;                       // P(X_query = true | neighbors)
    std::uint64_t samples = kUnlimitedSamples;    // training observations behind it
    int sparsity_warnings = 0;                    // clamps / guard fallbacks taken

    double prob(bool value) const noexcept { return value ? prob_true : 1.0 - prob_true; }
};

// Source of the two ingredients of contextual inference: the prior P(X) of a
// location variable and the context conditional P(X | N). Implementations are
// immutable after construction and safe to share across threads.
class ContextModel {
public:
    virtual ~ContextModel() = default;

    virtual double prior(const Detection& query) const = 0;

    // Neighbors are given in canonical (ascending id) order.
    virtual ConditionalEstimate conditional(const Detection& query,
                                            std::span<const NeighborAssignment> neighbors) const = 0;

    // Largest neighbor set the model can condition on.
    virtual int max_neighbors() const noexcept = 0;
};

} // namespace fnm
