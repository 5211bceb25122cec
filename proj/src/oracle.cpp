#include "fnm/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "fnm/error.hpp"
#include "fnm/exact_context.hpp"

namespace fnm {

InferenceConfig oracle_inference_config() {
    InferenceConfig config;
    config.gating.mode = GatingMode::off;
    config.iterations = 1;
    config.leave_one_out = true;
    return config;
}

OracleReport oracle_check(const SyntheticDataset& data, const InferenceConfig& config) {
    OracleReport report;
    for (const auto& scene : data.scenes) {
        if (!scene.joint)
            throw InvalidInput("oracle check needs scenes with an exact joint (clique templates)");
        const ExactContext context(*scene.joint, scene.joint_ids, config.max_neighbors);
        const auto result = rescore_scene(scene.detections, context, config);
        const auto exact = exact_posterior(scene);
        for (std::size_t i = 0; i < exact.size(); ++i)
            report.errors.push_back(std::abs(result.confidences[i] - exact[i]));
        ++report.scenes;
    }
    report.variables = report.errors.size();
    if (report.errors.empty())
        return report;
    double sum = 0.0;
    for (double e : report.errors) {
        sum += e;
        report.max_abs_error = std::max(report.max_abs_error, e);
    }
    report.mean_abs_error = sum / static_cast<double>(report.errors.size());
    auto sorted = report.errors;
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) { return sorted[static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1))]; };
    report.median_abs_error = quantile(0.5);
    report.p95_abs_error = quantile(0.95);
    return report;
}

} // namespace fnm
