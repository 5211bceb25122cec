#include "fnm/priors.hpp"

#include <algorithm>
#include <set>

#include "fnm/error.hpp"

namespace fnm {

PriorFit fit_priors(std::span<const std::string> categories, PriorTable start, std::span<const double> grid,
                    const PriorEngine& engine, const CategoryMetric& metric) {
    if (grid.empty())
        throw InvalidInput("fit_priors: empty grid");
    for (double v : grid)
        if (!(v > 0.0 && v < 1.0))
            throw InvalidInput("fit_priors: grid values must lie in (0, 1)");
    std::vector<double> values(grid.begin(), grid.end());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    PriorFit fit{std::move(start), {}};
    for (const auto& category : categories) {
        double best_value = values.front();
        double best_score = 0.0;
        bool first = true;
        for (double v : values) {
            PriorTable trial = fit.priors;
            trial.set(category, v);
            const auto rescored = engine(trial);
            const double score = metric(category, rescored);
            fit.trace.push_back({category, v, score});
            // Ascending grid, strict improvement: ties keep the smaller value.
            if (first || score > best_score) {
                best_score = score;
                best_value = v;
                first = false;
            }
        }
        fit.priors.set(category, best_value);
    }
    return fit;
}

PriorFit fit_priors(const RelationModel& model, std::span<const Detection> train_detections,
                    std::span<const GroundTruthBox> train_ground_truth, const InferenceConfig& config,
                    std::span<const double> grid, ApMode mode, double iou_threshold, int jobs) {
    std::set<std::string> with_truth;
    for (const auto& g : train_ground_truth)
        with_truth.insert(g.category);
    std::vector<std::string> categories;
    for (const auto& c : model.table.categories())
        if (with_truth.contains(c))
            categories.push_back(c);

    PriorTable start = model.priors;
    for (const auto& c : model.table.categories())
        if (!start.contains(c))
            start.set(c, kDefaultPrior);

    RelationModel trial = model;
    const PriorEngine engine = [&](const PriorTable& priors) {
        trial.priors = priors;
        RelationContext context(trial);
        return rescore_dataset(train_detections, context, config, jobs).detections;
    };
    const CategoryMetric metric = [&](const std::string& category, std::span<const Detection> dets) {
        return category_average_precision(category, dets, train_ground_truth, mode, iou_threshold);
    };
    return fit_priors(categories, std::move(start), grid, engine, metric);
}

} // namespace fnm
