#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "fnm/context_model.hpp"
#include "fnm/geometry.hpp"
#include "fnm/stability.hpp"

namespace fnm {

enum class NeighborSearch { exhaustive, greedy };

const char* to_string(NeighborSearch search) noexcept;
NeighborSearch neighbor_search_from_string(std::string_view name);

struct InferenceConfig {
    int max_neighbors = 2;
    int iterations = 1;
    GatingConfig gating;
    NeighborSearch neighbor_search = NeighborSearch::exhaustive;
    // Detections below this confidence are never used as context.
    double candidate_floor = 0.0;
    // When set, the message from a neighbor j to the query i is j's posterior
    // recomputed without i whenever i was among j's own neighbors. Off by
    // default: messages are the current beliefs.
    bool leave_one_out = false;

    void validate() const;
};

// Per-image inference state. Indices refer to the detection order passed to
// rescore_scene.
struct SceneState {
    std::vector<LocationVariable> variables;
    std::vector<double> detector_probs;
    std::vector<std::vector<std::size_t>> chosen_neighbors;
    std::vector<bool> gated;
    int sparsity_warnings = 0;
};

struct RescoreResult {
    std::vector<double> confidences;
    SceneState state;
};

// Detector response combined with a known context value, normalized over the
// binary query: t / (t + f) with t = a h / p and f = (1 - a)(1 - h) / (1 - p).
// Same curve as posterior_at.
double combine(double detector_prob, double context_prob, double prior);

// Unnormalized posterior masses contributed by the context, summed over all
// assignments of the neighbor set:
//   true_mass  = sum_s w(s) P(X=T|s) / p
//   false_mass = sum_s w(s) P(X=F|s) / (1 - p)
// with w(s) the product of per-neighbor beliefs. An empty neighbor set gives
// masses of 1 on both sides.
struct ContextMixture {
    double true_mass = 1.0;
    double false_mass = 1.0;
    int assignments = 0;
    int gated_assignments = 0;
    int sparsity_warnings = 0;
};

// Optional per-assignment gating: when `gating` is set, each assignment whose
// context value trips should_gate for `detector_prob` contributes the prior
// instead.
struct MixtureGate {
    double detector_prob = 0.5;
    const GatingConfig* gating = nullptr;
};

ContextMixture context_mixture(const ContextModel& model, const Detection& query,
                               std::span<const Detection* const> neighbors, std::span<const double> beliefs,
                               MixtureGate gate = {});

// Posterior from a detector response and a context mixture.
double combine_mixture(double detector_prob, const ContextMixture& mixture);

// Informativeness of one neighbor subset:
//   sum over assignments (x_i, s) of |P(x_i|s) - P(x_i)| * prod beliefs(s).
double neighbor_score(const ContextModel& model, const Detection& query,
                      std::span<const Detection* const> neighbors, std::span<const double> beliefs);

// Subset of `candidates` (indices into `detections`) maximizing
// neighbor_score; at most config.max_neighbors members, at least one when any
// candidate exists. Ties go to the smaller set, then to the earlier indices.
std::vector<std::size_t> select_neighbors(std::size_t query, std::span<const Detection> detections,
                                          std::span<const std::size_t> candidates, std::span<const double> beliefs,
                                          const ContextModel& model, const InferenceConfig& config);

// Context-rescoring of the detections of one image. Detections must share an
// image id and carry unique ids.
RescoreResult rescore_scene(std::span<const Detection> detections, const ContextModel& model,
                            const InferenceConfig& config);

// Rescores a multi-image detection list. Images are processed by `jobs`
// workers; the output keeps the input order and does not depend on `jobs`.
struct DatasetRescore {
    std::vector<Detection> detections;
    std::vector<RescoreResult> per_image;
    std::vector<ImageId> image_order;
};

DatasetRescore rescore_dataset(std::span<const Detection> detections, const ContextModel& model,
                               const InferenceConfig& config, int jobs = 1);

// Runs fn(i) for i in [0, count) on `jobs` worker threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

} // namespace fnm
