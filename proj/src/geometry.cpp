#include "fnm/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "fnm/error.hpp"

namespace fnm {

void validate(const Detection& det) {
    if (!(det.confidence >= 0.0 && det.confidence <= 1.0))
        throw InvalidInput("detection " + std::to_string(det.id) + ": confidence " +
                           std::to_string(det.confidence) + " outside [0,1]");
    if (!(det.box.height > 0.0) || !(det.box.width > 0.0))
        throw InvalidInput("detection " + std::to_string(det.id) + ": box must have positive size");
    if (!std::isfinite(det.box.center.x) || !std::isfinite(det.box.center.y))
        throw InvalidInput("detection " + std::to_string(det.id) + ": non-finite center");
}

void BinningConfig::validate() const {
    auto check_range = [](const AxisRange& r, const char* name) {
        if (!(r.max > r.min) || !std::isfinite(r.min) || !std::isfinite(r.max))
            throw InvalidInput(std::string("binning: degenerate ") + name + " range");
    };
    check_range(offset_x, "offset_x");
    check_range(offset_y, "offset_y");
    check_range(scale, "scale");
    if (offset_bins_x < 1 || offset_bins_y < 1 || scale_bins < 1)
        throw InvalidInput("binning: bin counts must be >= 1");
    if (offset_bins_x > 255 || offset_bins_y > 255 || scale_bins > 255)
        throw InvalidInput("binning: at most 255 bins per axis");
    for (const auto& [category, factor] : scale_factors)
        if (!(factor > 0.0) || !std::isfinite(factor))
            throw InvalidInput("binning: scale factor for '" + category + "' must be positive");
}

double BinningConfig::scale_factor(const std::string& category) const {
    if (auto it = scale_factors.find(category); it != scale_factors.end())
        return it->second;
    throw MissingScaleFactor(category);
}

Vec2 relative_location(Vec2 query_center, Vec2 ref_center, double ref_height, double ref_scale_factor) {
    if (!(ref_height > 0.0))
        throw InvalidInput("relative_location: reference height must be positive");
    if (!(ref_scale_factor > 0.0))
        throw InvalidInput("relative_location: scale factor must be positive");
    const double unit = ref_height * ref_scale_factor;
    return {(query_center.x - ref_center.x) / unit, (query_center.y - ref_center.y) / unit};
}

double relative_scale(double query_height, double ref_height) {
    if (!(query_height > 0.0) || !(ref_height > 0.0))
        throw InvalidInput("relative_scale: heights must be positive");
    return std::log(query_height / ref_height);
}

RelativeFeature featurize(const BoxGeometry& query, const BoxGeometry& reference,
                          const std::string& reference_category, const BinningConfig& config) {
    const double factor = config.scale_factor(reference_category);
    return {relative_location(query.center, reference.center, reference.height, factor),
            relative_scale(query.height, reference.height)};
}

namespace {

int bin_axis(double value, const AxisRange& range, int bins) {
    if (std::isnan(value))
        return 0;
    const double width = (range.max - range.min) / bins;
    const double pos = std::floor((value - range.min) / width);
    if (pos < 0.0)
        return 0;
    if (pos >= bins)
        return bins - 1;
    return static_cast<int>(pos);
}

} // namespace

BinIndex bin_feature(const RelativeFeature& feature, const BinningConfig& config) {
    return {bin_axis(feature.offset.x, config.offset_x, config.offset_bins_x),
            bin_axis(feature.offset.y, config.offset_y, config.offset_bins_y),
            bin_axis(feature.scale_ratio, config.scale, config.scale_bins)};
}

} // namespace fnm
