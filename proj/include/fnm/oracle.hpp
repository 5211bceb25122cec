#pragma once

#include <vector>

#include "fnm/inference.hpp"
#include "fnm/synth.hpp"

namespace fnm {

// Configuration under which one in-place iteration reproduces the exact
// posterior on scenes whose neighbors are conditionally independent: no
// gating, one iteration, messages with the query left out.
InferenceConfig oracle_inference_config();

struct OracleReport {
    std::size_t scenes = 0;
    std::size_t variables = 0;
    double max_abs_error = 0.0;
    double mean_abs_error = 0.0;
    double median_abs_error = 0.0;
    double p95_abs_error = 0.0;
    std::vector<double> errors;
};

// Rescores every scene with its exact joint as context model and compares to
// exact_posterior. Scenes without a joint are rejected.
OracleReport oracle_check(const SyntheticDataset& data, const InferenceConfig& config);

} // namespace fnm
