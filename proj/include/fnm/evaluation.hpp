#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fnm/geometry.hpp"

namespace fnm {

struct GroundTruthBox {
    ImageId image_id = 0;
    std::string category;
    BoxGeometry box;
};

// Intersection over union of two center/size boxes.
double iou(const BoxGeometry& a, const BoxGeometry& b);

enum class MatchLabel { true_positive, false_positive };

// Matching outcome for one category. Detections appear in rank order:
// descending confidence, ties by ascending id.
struct MatchResult {
    std::string category;
    std::vector<DetectionId> ranked_ids;
    std::vector<double> ranked_confidences;
    std::vector<MatchLabel> labels;
    std::size_t ground_truth_count = 0;

    std::size_t true_positives() const noexcept;
};

// Greedy matching: in rank order each detection takes the highest-IoU
// unmatched ground truth of its image with IoU >= threshold. Inputs are
// assumed to belong to a single category.
MatchResult match_detections(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truth,
                             double iou_threshold = 0.5);

enum class ApMode { eleven_point, all_points };

const char* to_string(ApMode mode) noexcept;
ApMode ap_mode_from_string(std::string_view name);

// Throws UndefinedMetric when the category has no ground truth.
double average_precision(const MatchResult& result, ApMode mode = ApMode::eleven_point);

struct CategoryAp {
    std::string category;
    double ap = 0.0;
    std::size_t ground_truth = 0;
    std::size_t detections = 0;
};

// Unweighted mean over categories with at least one ground truth.
double mean_average_precision(std::span<const CategoryAp> per_category);
double mean_average_precision(std::span<const double> aps);

struct EvaluationReport {
    std::vector<CategoryAp> per_category; // sorted by category name
    double map = 0.0;
};

// Per-category AP over every category that has ground truth. Detections of
// categories without ground truth are ignored.
EvaluationReport evaluate(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truth,
                          ApMode mode = ApMode::eleven_point, double iou_threshold = 0.5);

// AP of a single category.
double category_average_precision(const std::string& category, std::span<const Detection> detections,
                                  std::span<const GroundTruthBox> ground_truth, ApMode mode = ApMode::eleven_point,
                                  double iou_threshold = 0.5);

} // namespace fnm
