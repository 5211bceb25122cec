#include "fnm/evaluation.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "fnm/error.hpp"

namespace fnm {

double iou(const BoxGeometry& a, const BoxGeometry& b) {
    if (!(a.width > 0.0 && a.height > 0.0 && b.width > 0.0 && b.height > 0.0))
        throw InvalidInput("iou: boxes must have positive width and height");
    const double ax0 = a.center.x - a.width / 2, ax1 = a.center.x + a.width / 2;
    const double ay0 = a.center.y - a.height / 2, ay1 = a.center.y + a.height / 2;
    const double bx0 = b.center.x - b.width / 2, bx1 = b.center.x + b.width / 2;
    const double by0 = b.center.y - b.height / 2, by1 = b.center.y + b.height / 2;
    const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = iw * ih;
    const double uni = a.width * a.height + b.width * b.height - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

std::size_t MatchResult::true_positives() const noexcept {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), MatchLabel::true_positive));
}

MatchResult match_detections(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truth,
                             double iou_threshold) {
    MatchResult result;
    if (!detections.empty())
        result.category = detections.front().category;
    else if (!ground_truth.empty())
        result.category = ground_truth.front().category;
    result.ground_truth_count = ground_truth.size();

    std::map<ImageId, std::vector<std::size_t>> gt_by_image;
    for (std::size_t g = 0; g < ground_truth.size(); ++g)
        gt_by_image[ground_truth[g].image_id].push_back(g);

    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (detections[a].confidence != detections[b].confidence)
            return detections[a].confidence > detections[b].confidence;
        return detections[a].id < detections[b].id;
    });

    std::vector<bool> taken(ground_truth.size(), false);
    for (auto d : order) {
        const auto& det = detections[d];
        result.ranked_ids.push_back(det.id);
        result.ranked_confidences.push_back(det.confidence);
        double best = -1.0;
        std::size_t best_gt = 0;
        if (auto it = gt_by_image.find(det.image_id); it != gt_by_image.end()) {
            for (auto g : it->second) {
                if (taken[g])
                    continue;
                const double overlap = iou(det.box, ground_truth[g].box);
                if (overlap > best) {
                    best = overlap;
                    best_gt = g;
                }
            }
        }
        if (best >= iou_threshold) {
            taken[best_gt] = true;
            result.labels.push_back(MatchLabel::true_positive);
        } else {
            result.labels.push_back(MatchLabel::false_positive);
        }
    }
    return result;
}

const char* to_string(ApMode mode) noexcept {
    return mode == ApMode::eleven_point ? "eleven-point" : "all-points";
}

ApMode ap_mode_from_string(std::string_view name) {
    if (name == "eleven-point" || name == "11point" || name == "voc07") return ApMode::eleven_point;
    if (name == "all-points" || name == "area") return ApMode::all_points;
    throw InvalidInput("unknown AP mode '" + std::string(name) + "'");
}

double average_precision(const MatchResult& result, ApMode mode) {
    if (result.ground_truth_count == 0)
        throw UndefinedMetric("average precision undefined for category '" + result.category +
                              "' without ground truth");
    const double gt = static_cast<double>(result.ground_truth_count);
    std::vector<double> recall;
    std::vector<double> precision;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < result.labels.size(); ++k) {
        if (result.labels[k] == MatchLabel::true_positive)
            ++tp;
        recall.push_back(static_cast<double>(tp) / gt);
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    }

    if (mode == ApMode::eleven_point) {
        double sum = 0.0;
        for (int i = 0; i <= 10; ++i) {
            const double t = i / 10.0;
            double best = 0.0;
            for (std::size_t k = 0; k < recall.size(); ++k)
                if (recall[k] >= t)
                    best = std::max(best, precision[k]);
            sum += best;
        }
        return sum / 11.0;
    }

    // Area under the precision envelope.
    std::vector<double> mrec{0.0};
    std::vector<double> mpre{0.0};
    mrec.insert(mrec.end(), recall.begin(), recall.end());
    mpre.insert(mpre.end(), precision.begin(), precision.end());
    mrec.push_back(1.0);
    mpre.push_back(0.0);
    for (std::size_t i = mpre.size() - 1; i > 0; --i)
        mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
    double ap = 0.0;
    for (std::size_t i = 1; i < mrec.size(); ++i)
        if (mrec[i] != mrec[i - 1])
            ap += (mrec[i] - mrec[i - 1]) * mpre[i];
    return ap;
}

double mean_average_precision(std::span<const CategoryAp> per_category) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : per_category)
        if (c.ground_truth > 0) {
            sum += c.ap;
            ++n;
        }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double mean_average_precision(std::span<const double> aps) {
    if (aps.empty())
        return 0.0;
    return std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
}

namespace {

template <typename Pred>
std::vector<Detection> filter_detections(std::span<const Detection> detections, Pred pred) {
    std::vector<Detection> out;
    for (const auto& d : detections)
        if (pred(d))
            out.push_back(d);
    return out;
}

} // namespace

double category_average_precision(const std::string& category, std::span<const Detection> detections,
                                  std::span<const GroundTruthBox> ground_truth, ApMode mode, double iou_threshold) {
    const auto dets = filter_detections(detections, [&](const Detection& d) { return d.category == category; });
    std::vector<GroundTruthBox> gts;
    for (const auto& g : ground_truth)
        if (g.category == category)
            gts.push_back(g);
    auto match = match_detections(dets, gts, iou_threshold);
    match.category = category;
    return average_precision(match, mode);
}

EvaluationReport evaluate(std::span<const Detection> detections, std::span<const GroundTruthBox> ground_truth,
                          ApMode mode, double iou_threshold) {
    std::map<std::string, std::vector<GroundTruthBox>> gt_by_cat;
    for (const auto& g : ground_truth)
        gt_by_cat[g.category].push_back(g);
    std::map<std::string, std::vector<Detection>> det_by_cat;
    for (const auto& d : detections)
        det_by_cat[d.category].push_back(d);

    EvaluationReport report;
    for (const auto& [category, gts] : gt_by_cat) {
        const auto& dets = det_by_cat[category];
        auto match = match_detections(dets, gts, iou_threshold);
        match.category = category;
        report.per_category.push_back(CategoryAp{category, average_precision(match, mode), gts.size(), dets.size()});
    }
    report.map = mean_average_precision(std::span<const CategoryAp>(report.per_category));
    return report;
}

} // namespace fnm
