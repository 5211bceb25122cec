#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "fnm/context_model.hpp"

namespace fnm {

inline constexpr int kMaxJointVariables = 20;

// Explicit distribution over n binary variables. Entry k holds the
// probability of the assignment whose bit i is the value of variable i.
class JointTable {
public:
    JointTable() = default;
    JointTable(int variables, std::vector<double> probabilities);

    int variables() const noexcept { return variables_; }
    const std::vector<double>& probabilities() const noexcept { return probs_; }
    double probability(std::uint32_t assignment) const { return probs_.at(assignment); }

    double marginal(int variable) const;
    // P(X_target = true | X_v = value for each (v, value) in evidence).
    double conditional(int target, std::span<const std::pair<int, bool>> evidence) const;

    // Joint of independent blocks: the result's variables are a's followed by b's.
    static JointTable product(const JointTable& a, const JointTable& b);

    friend bool operator==(const JointTable&, const JointTable&) = default;

private:
    int variables_ = 0;
    std::vector<double> probs_;
};

// Context model that reads priors and conditionals straight off a joint
// table. Detections map to variables by id.
class ExactContext final : public ContextModel {
public:
    ExactContext(JointTable joint, std::span<const DetectionId> variable_ids, int max_neighbors = 2);

    double prior(const Detection& query) const override;
    ConditionalEstimate conditional(const Detection& query,
                                    std::span<const NeighborAssignment> neighbors) const override;
    int max_neighbors() const noexcept override { return max_neighbors_; }

    const JointTable& joint() const noexcept { return joint_; }

private:
    int variable(DetectionId id) const;

    JointTable joint_;
    std::unordered_map<DetectionId, int> index_;
    int max_neighbors_;
};

} // namespace fnm
