#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace fnm {

using DetectionId = std::int64_t;
using ImageId = std::int64_t;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

// Position and size of an object or hypothesis. Height is the size measure;
// width only matters for box overlap.
struct BoxGeometry {
    Vec2 center;
    double height = 1.0;
    double width = 1.0;

    friend bool operator==(const BoxGeometry&, const BoxGeometry&) = default;
};

// One detector hypothesis. The confidence is interpreted as P(X = true | Y).
struct Detection {
    DetectionId id = 0;
    ImageId image_id = 0;
    std::string category;
    BoxGeometry box;
    double confidence = 0.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

// Throws InvalidInput when the detection violates its invariants.
void validate(const Detection& det);

// Binary presence variable attached to a detection.
struct LocationVariable {
    DetectionId detection_ref = 0;
    double belief_true = 0.0;

    double belief(bool value) const noexcept { return value ? belief_true : 1.0 - belief_true; }
};

// Scale-invariant description of one object relative to a reference object.
struct RelativeFeature {
    Vec2 offset;
    double scale_ratio = 0.0;
};

struct AxisRange {
    double min = 0.0;
    double max = 1.0;

    friend bool operator==(const AxisRange&, const AxisRange&) = default;
};

struct BinIndex {
    int x = 0;
    int y = 0;
    int scale = 0;

    friend bool operator==(const BinIndex&, const BinIndex&) = default;
    friend auto operator<=>(const BinIndex&, const BinIndex&) = default;
};

// Discretization of relative features. Values outside a range clamp to the
// nearest edge bin.
struct BinningConfig {
    AxisRange offset_x{-4.0, 4.0};
    AxisRange offset_y{-4.0, 4.0};
    int offset_bins_x = 16;
    int offset_bins_y = 16;
    AxisRange scale{-2.0, 2.0};
    int scale_bins = 8;
    // f(t): per-category multiplier of the reference height. Every category
    // that can act as a reference must be listed.
    std::map<std::string, double> scale_factors;

    void validate() const;
    // Throws MissingScaleFactor for unlisted categories.
    double scale_factor(const std::string& category) const;
    // Adds factor 1 for each listed category that has none yet.
    template <typename Range>
    void add_default_scale_factors(const Range& categories) {
        for (const auto& c : categories)
            scale_factors.try_emplace(c, 1.0);
    }
    int cells_per_category() const noexcept { return offset_bins_x * offset_bins_y * scale_bins; }

    friend bool operator==(const BinningConfig&, const BinningConfig&) = default;
};

// (query - ref) / (ref_height * ref_scale_factor), componentwise.
Vec2 relative_location(Vec2 query_center, Vec2 ref_center, double ref_height, double ref_scale_factor);

// Natural log of the height ratio.
double relative_scale(double query_height, double ref_height);

RelativeFeature featurize(const BoxGeometry& query, const BoxGeometry& reference,
                          const std::string& reference_category, const BinningConfig& config);

BinIndex bin_feature(const RelativeFeature& feature, const BinningConfig& config);

} // namespace fnm
