#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "fnm/evaluation.hpp"
#include "fnm/exact_context.hpp"
#include "fnm/geometry.hpp"
#include "fnm/relation_model.hpp"

namespace fnm {

struct BetaParams {
    double alpha = 1.0;
    double beta = 1.0;

    double mean() const noexcept { return alpha / (alpha + beta); }
    double log_density(double x) const;
    void validate() const;

    friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

double sample_beta(const BetaParams& params, std::mt19937_64& rng);

struct CategorySpec {
    std::string name;
    // Probability that a scene holds a free-standing instance.
    double prior = 0.5;
    double height_mean = 80.0;
    // Standard deviation of the log height.
    double height_spread = 0.2;
    double aspect = 1.0; // width / height
    double scale_factor = 1.0;

    friend bool operator==(const CategorySpec&, const CategorySpec&) = default;
};

// Every instance of `parent` spawns a `child` with `probability`. The child
// center sits at parent center + parent height * parent scale factor *
// (offset + spread * N(0, 1)) and its log height ratio is
// log_scale + log_scale_spread * N(0, 1).
struct RelationSpec {
    std::string parent;
    std::string child;
    Vec2 offset;
    double offset_spread = 0.1;
    double log_scale = 0.0;
    double log_scale_spread = 0.1;
    double probability = 1.0;

    friend bool operator==(const RelationSpec&, const RelationSpec&) = default;
};

struct NoiseSpec {
    BetaParams present{3.0, 1.0};
    BetaParams absent{1.0, 4.0};
    double miss_rate = 0.0;
    double false_positives_per_image = 2.0;
    // Per detected object, chance of an extra badly localized hypothesis
    // (shifted by most of a box height) scored like a false positive.
    double near_miss_rate = 0.0;
    // Relative standard deviation of box position and size.
    double jitter = 0.03;

    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct SceneTemplate {
    std::string name;
    std::vector<CategorySpec> categories;
    std::vector<RelationSpec> relations;
    NoiseSpec detector;
    double image_width = 640.0;
    double image_height = 480.0;
    std::uint64_t seed = 1;

    void validate() const;
    std::vector<std::string> category_names() const;
    // Binning with the template's scale factors.
    BinningConfig binning() const;

    friend bool operator==(const SceneTemplate&, const SceneTemplate&) = default;
};

// Scenes made of independent blocks of one to three presence variables. The
// first block of every scene has three variables that are pairwise
// independent but jointly dependent, so each one is informative only given
// both others. Detector confidences are calibrated: a detection drawn with
// the noise of a variable with marginal q has likelihood ratio
// c/(1-c) * (1-q)/q.
struct CliqueTemplate {
    std::string name;
    int min_variables = 3;
    int max_variables = 5;
    double marginal_min = 0.2;
    double marginal_max = 0.6;
    // Fraction of the strongest feasible interaction.
    double coupling = 0.9;
    // Beta concentration of the detector noise; larger is sharper.
    double concentration = 4.0;
    // Strength of additional pairwise interactions inside three-variable
    // blocks. Zero keeps neighbors conditionally independent.
    double pair_correlation = 0.0;
    std::uint64_t seed = 1;

    void validate() const;

    friend bool operator==(const CliqueTemplate&, const CliqueTemplate&) = default;
};

using TemplateSpec = std::variant<SceneTemplate, CliqueTemplate>;

// Confidence distributions of one detection given its variable's value.
struct DetectionNoise {
    BetaParams present;
    BetaParams absent;
};

struct SyntheticScene {
    ImageId image_id = 0;
    std::vector<GroundTruthObject> objects;
    // Index of the object that spawned each object, -1 for free-standing ones.
    std::vector<int> object_parent;
    std::vector<Detection> detections;
    // Object each detection was drawn from, -1 for false positives.
    std::vector<int> detection_source;

    // Exact model, present for clique scenes. Variable i of the joint belongs
    // to the detection with id joint_ids[i].
    std::optional<JointTable> joint;
    std::vector<DetectionId> joint_ids;
    std::vector<DetectionNoise> joint_noise;
};

struct SyntheticDataset {
    std::vector<std::string> categories;
    double image_width = 0.0;
    double image_height = 0.0;
    std::vector<SyntheticScene> scenes;

    std::vector<Detection> detections() const;
    std::vector<AnnotatedScene> annotated_scenes() const;
    std::vector<GroundTruthBox> ground_truth() const;
};

// Deterministic given the seed; scene i is drawn from its own derived seed.
// Image ids are 1..n and detection ids run consecutively from 0.
SyntheticDataset sample_dataset(const SceneTemplate& tmpl, std::size_t n_scenes, std::uint64_t seed);
SyntheticDataset sample_dataset(const CliqueTemplate& tmpl, std::size_t n_scenes, std::uint64_t seed);
SyntheticDataset sample_dataset(const TemplateSpec& tmpl, std::size_t n_scenes, std::uint64_t seed);

// Per-scene generator seed.
std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) noexcept;

// P(X_i = true | all detections) for every joint variable, by enumeration of
// joint(x) * prod_i P(c_i | x_i). Returned in scene.detections order.
std::vector<double> exact_posterior(const SyntheticScene& scene);

// Same, for an explicit joint; confidences and noise indexed by variable.
std::vector<double> exact_posterior(const JointTable& joint, std::span<const double> confidences,
                                    std::span<const DetectionNoise> noise);

// Calibrated detector noise for a variable with marginal q.
DetectionNoise calibrated_noise(double marginal, double concentration);

} // namespace fnm
