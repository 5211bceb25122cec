#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fnm/evaluation.hpp"
#include "fnm/inference.hpp"
#include "fnm/relation_model.hpp"

namespace fnm {

inline const std::vector<double> kDefaultPriorGrid = {0.001, 0.002, 0.005, 0.01, 0.02, 0.05};

// Rescoring engine: the training detections rescored under the given priors.
using PriorEngine = std::function<std::vector<Detection>(const PriorTable&)>;
// Score of one category on a rescored detection list; higher is better.
using CategoryMetric = std::function<double(const std::string&, std::span<const Detection>)>;

struct PriorSearchStep {
    std::string category;
    double value = 0.0;
    double score = 0.0;
};

struct PriorFit {
    PriorTable priors;
    std::vector<PriorSearchStep> trace;
};

// One coordinate-wise pass over `categories` in order. For each category every
// grid value is tried with the other categories held at their current best;
// the highest score wins, ties toward the smaller value.
PriorFit fit_priors(std::span<const std::string> categories, PriorTable start, std::span<const double> grid,
                    const PriorEngine& engine, const CategoryMetric& metric);

// Same search with the relation model as engine and per-category AP on the
// training ground truth as metric. Categories are those of the model table.
PriorFit fit_priors(const RelationModel& model, std::span<const Detection> train_detections,
                    std::span<const GroundTruthBox> train_ground_truth, const InferenceConfig& config,
                    std::span<const double> grid = kDefaultPriorGrid, ApMode mode = ApMode::eleven_point,
                    double iou_threshold = 0.5, int jobs = 1);

} // namespace fnm
