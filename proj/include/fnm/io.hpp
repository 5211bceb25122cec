#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fnm/evaluation.hpp"
#include "fnm/relation_model.hpp"
#include "fnm/synth.hpp"

namespace fnm {

inline constexpr int kModelSchemaVersion = 1;
inline constexpr int kDetectionSchemaVersion = 1;

using CategoryMap = std::map<std::int64_t, std::string>;

// Rounds to 9 significant digits, the precision of every written number.
double round_sig9(double value);

// Detection files come in two shapes. A bare array of COCO-style result
// records {image_id, category_id, bbox: [x, y, w, h], score} resolves
// category ids through `categories`. An object {categories, detections}
// carries its own category list and is what save_detections writes. Records
// may carry an "id"; otherwise the id is the record position. A record may
// name its category directly with "category".
std::vector<Detection> parse_detections(const std::string& text, const CategoryMap* categories = nullptr);
std::string format_detections(std::span<const Detection> detections);
std::vector<Detection> load_detections(const std::filesystem::path& path, const CategoryMap* categories = nullptr);
void save_detections(std::span<const Detection> detections, const std::filesystem::path& path);

struct ImageInfo {
    ImageId id = 0;
    double width = 0.0;
    double height = 0.0;

    friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

struct AnnotationSet {
    std::vector<ImageInfo> images;
    CategoryMap categories;
    // One scene per image, in image order.
    std::vector<AnnotatedScene> scenes;
    // Boxes reaching outside their image; reported, not fatal.
    std::vector<std::string> warnings;

    std::vector<GroundTruthBox> ground_truth() const;

    friend bool operator==(const AnnotationSet& a, const AnnotationSet& b) {
        return a.images == b.images && a.categories == b.categories && a.scenes == b.scenes;
    }
};

AnnotationSet parse_annotations(const std::string& text);
std::string format_annotations(const AnnotationSet& annotations);
AnnotationSet load_annotations(const std::filesystem::path& path);
void save_annotations(const AnnotationSet& annotations, const std::filesystem::path& path);

// Category ids 1..n in name order.
AnnotationSet make_annotations(const SyntheticDataset& data);

RelationModel parse_model(const std::string& text);
std::string format_model(const RelationModel& model);
RelationModel load_model(const std::filesystem::path& path);
void save_model(const RelationModel& model, const std::filesystem::path& path);

TemplateSpec parse_template(const std::string& text);
std::string format_template(const TemplateSpec& tmpl);
TemplateSpec load_template(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary file and a rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace fnm
