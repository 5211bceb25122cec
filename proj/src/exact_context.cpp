#include "fnm/exact_context.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fnm/error.hpp"

namespace fnm {

JointTable::JointTable(int variables, std::vector<double> probabilities)
    : variables_(variables), probs_(std::move(probabilities)) {
    if (variables_ < 0 || variables_ > kMaxJointVariables)
        throw InvalidInput("joint table supports at most " + std::to_string(kMaxJointVariables) +
                           " variables; reduce the scene size");
    if (probs_.size() != (std::size_t{1} << variables_))
        throw InvalidInput("joint table needs 2^n entries");
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0))
            throw InvalidInput("joint table entries must be non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw InvalidInput("joint table must sum to 1");
}

double JointTable::marginal(int variable) const {
    if (variable < 0 || variable >= variables_)
        throw InvalidInput("variable index out of range");
    double total = 0.0;
    for (std::uint32_t k = 0; k < probs_.size(); ++k)
        if (k >> variable & 1U)
            total += probs_[k];
    return total;
}

double JointTable::conditional(int target, std::span<const std::pair<int, bool>> evidence) const {
    if (target < 0 || target >= variables_)
        throw InvalidInput("variable index out of range");
    std::uint32_t mask = 0;
    std::uint32_t wanted = 0;
    for (const auto& [v, value] : evidence) {
        if (v < 0 || v >= variables_)
            throw InvalidInput("variable index out of range");
        mask |= 1U << v;
        if (value)
            wanted |= 1U << v;
    }
    double joint_true = 0.0;
    double total = 0.0;
    for (std::uint32_t k = 0; k < probs_.size(); ++k) {
        if ((k & mask) != wanted)
            continue;
        total += probs_[k];
        if (k >> target & 1U)
            joint_true += probs_[k];
    }
    if (!(total > 0.0))
        throw InvalidInput("conditioning on an assignment of probability zero");
    return joint_true / total;
}

JointTable JointTable::product(const JointTable& a, const JointTable& b) {
    const int n = a.variables_ + b.variables_;
    if (n > kMaxJointVariables)
        throw InvalidInput("joint table supports at most " + std::to_string(kMaxJointVariables) +
                           " variables; reduce the scene size");
    std::vector<double> probs(std::size_t{1} << n);
    for (std::uint32_t i = 0; i < a.probs_.size(); ++i)
        for (std::uint32_t j = 0; j < b.probs_.size(); ++j)
            probs[i | (j << a.variables_)] = a.probs_[i] * b.probs_[j];
    // Renormalize away the rounding of the products.
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (double& p : probs)
        p /= total;
    return JointTable(n, std::move(probs));
}

ExactContext::ExactContext(JointTable joint, std::span<const DetectionId> variable_ids, int max_neighbors)
    : joint_(std::move(joint)), max_neighbors_(max_neighbors) {
    if (static_cast<int>(variable_ids.size()) != joint_.variables())
        throw InvalidInput("one detection id per joint variable required");
    for (int i = 0; i < joint_.variables(); ++i)
        if (!index_.emplace(variable_ids[i], i).second)
            throw InvalidInput("duplicate detection id in exact context");
}

int ExactContext::variable(DetectionId id) const {
    auto it = index_.find(id);
    if (it == index_.end())
        throw InvalidInput("exact context has no variable for detection " + std::to_string(id));
    return it->second;
}

double ExactContext::prior(const Detection& query) const { return joint_.marginal(variable(query.id)); }

ConditionalEstimate ExactContext::conditional(const Detection& query,
                                              std::span<const NeighborAssignment> neighbors) const {
    std::vector<std::pair<int, bool>> evidence;
    evidence.reserve(neighbors.size());
    for (const auto& n : neighbors)
        evidence.emplace_back(variable(n.detection->id), n.present);
    return ConditionalEstimate{joint_.conditional(variable(query.id), evidence), kUnlimitedSamples, 0};
}

} // namespace fnm
