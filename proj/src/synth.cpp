#include "fnm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "fnm/error.hpp"

namespace fnm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double normal(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

bool bernoulli(std::mt19937_64& rng, double p) { return uniform(rng, 0.0, 1.0) < p; }

} // namespace

double BetaParams::log_density(double x) const {
    if (!(x > 0.0 && x < 1.0))
        throw InvalidInput("beta density needs x in (0, 1)");
    return (alpha - 1.0) * std::log(x) + (beta - 1.0) * std::log1p(-x) + std::lgamma(alpha + beta) -
           std::lgamma(alpha) - std::lgamma(beta);
}

void BetaParams::validate() const {
    if (!(alpha > 0.0 && beta > 0.0 && std::isfinite(alpha) && std::isfinite(beta)))
        throw InvalidInput("beta parameters must be positive");
}

double sample_beta(const BetaParams& params, std::mt19937_64& rng) {
    const double x = std::gamma_distribution<double>(params.alpha, 1.0)(rng);
    const double y = std::gamma_distribution<double>(params.beta, 1.0)(rng);
    double v = (x + y) > 0.0 ? x / (x + y) : 0.5;
    // Confidences must be valid probabilities strictly inside (0, 1).
    return std::clamp(v, 1e-6, 1.0 - 1e-6);
}

void SceneTemplate::validate() const {
    if (categories.empty())
        throw InvalidInput("template '" + name + "' has no categories");
    std::set<std::string> names;
    for (const auto& c : categories) {
        if (c.name.empty() || !names.insert(c.name).second)
            throw InvalidInput("template category names must be unique and non-empty");
        if (!is_probability(c.prior))
            throw InvalidInput("category '" + c.name + "': prior outside [0, 1]");
        if (!(c.height_mean > 0.0) || !(c.height_spread >= 0.0) || !(c.aspect > 0.0) || !(c.scale_factor > 0.0))
            throw InvalidInput("category '" + c.name + "': sizes must be positive and spreads non-negative");
    }
    for (const auto& r : relations) {
        if (!names.contains(r.parent) || !names.contains(r.child))
            throw InvalidInput("relation " + r.parent + " -> " + r.child + " names an unknown category");
        if (!is_probability(r.probability))
            throw InvalidInput("relation " + r.parent + " -> " + r.child + ": probability outside [0, 1]");
        if (!(r.offset_spread >= 0.0) || !(r.log_scale_spread >= 0.0))
            throw InvalidInput("relation " + r.parent + " -> " + r.child + ": negative spread");
    }
    detector.present.validate();
    detector.absent.validate();
    if (!is_probability(detector.miss_rate) || !is_probability(detector.near_miss_rate))
        throw InvalidInput("detector rates must lie in [0, 1]");
    if (!(detector.false_positives_per_image >= 0.0) || !(detector.jitter >= 0.0))
        throw InvalidInput("false-positive rate and jitter must be non-negative");
    if (!(image_width > 0.0 && image_height > 0.0))
        throw InvalidInput("image dimensions must be positive");
}

std::vector<std::string> SceneTemplate::category_names() const {
    std::vector<std::string> out;
    for (const auto& c : categories)
        out.push_back(c.name);
    return out;
}

BinningConfig SceneTemplate::binning() const {
    BinningConfig b;
    for (const auto& c : categories)
        b.scale_factors[c.name] = c.scale_factor;
    return b;
}

void CliqueTemplate::validate() const {
    if (min_variables < 1 || max_variables < min_variables || max_variables > kMaxJointVariables)
        throw InvalidInput("clique template needs 1 <= min_variables <= max_variables <= " +
                           std::to_string(kMaxJointVariables));
    if (!(marginal_min > 0.0 && marginal_max < 1.0 && marginal_min <= marginal_max))
        throw InvalidInput("clique marginals must satisfy 0 < min <= max < 1");
    if (!(coupling >= 0.0 && coupling < 1.0))
        throw InvalidInput("clique coupling must lie in [0, 1)");
    if (!(concentration > 0.0))
        throw InvalidInput("clique concentration must be positive");
    if (!(pair_correlation >= 0.0 && pair_correlation <= 1.0))
        throw InvalidInput("clique pair_correlation must lie in [0, 1]");
}

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) noexcept {
    return splitmix64(splitmix64(seed) ^ (0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(index) + 1)));
}

DetectionNoise calibrated_noise(double marginal, double concentration) {
    const double a = concentration * marginal;
    const double b = concentration * (1.0 - marginal);
    return DetectionNoise{BetaParams{a + 1.0, b}, BetaParams{a, b + 1.0}};
}

std::vector<Detection> SyntheticDataset::detections() const {
    std::vector<Detection> out;
    for (const auto& s : scenes)
        out.insert(out.end(), s.detections.begin(), s.detections.end());
    return out;
}

std::vector<AnnotatedScene> SyntheticDataset::annotated_scenes() const {
    std::vector<AnnotatedScene> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes)
        out.push_back(AnnotatedScene{s.image_id, s.objects});
    return out;
}

std::vector<GroundTruthBox> SyntheticDataset::ground_truth() const {
    std::vector<GroundTruthBox> out;
    for (const auto& s : scenes)
        for (const auto& o : s.objects)
            out.push_back(GroundTruthBox{s.image_id, o.category, o.box});
    return out;
}

namespace {

SyntheticScene sample_geometric_scene(const SceneTemplate& tmpl, std::mt19937_64& rng) {
    SyntheticScene scene;
    std::map<std::string, const CategorySpec*> spec;
    for (const auto& c : tmpl.categories)
        spec[c.name] = &c;

    auto make_box = [](Vec2 center, double height, double aspect) {
        return BoxGeometry{center, height, height * aspect};
    };

    // Free-standing objects, away from the image border.
    for (const auto& c : tmpl.categories) {
        const bool exists = bernoulli(rng, c.prior);
        const double cx = uniform(rng, 0.15, 0.85) * tmpl.image_width;
        const double cy = uniform(rng, 0.15, 0.85) * tmpl.image_height;
        const double h = c.height_mean * std::exp(c.height_spread * normal(rng));
        if (exists) {
            scene.objects.push_back({c.name, make_box({cx, cy}, h, c.aspect)});
            scene.object_parent.push_back(-1);
        }
    }

    // Relations, in listed order; children created earlier can be parents.
    for (const auto& r : tmpl.relations) {
        const std::size_t existing = scene.objects.size();
        for (std::size_t o = 0; o < existing; ++o) {
            if (scene.objects[o].category != r.parent)
                continue;
            const bool spawn = bernoulli(rng, r.probability);
            const double dx = r.offset.x + r.offset_spread * normal(rng);
            const double dy = r.offset.y + r.offset_spread * normal(rng);
            const double ls = r.log_scale + r.log_scale_spread * normal(rng);
            if (!spawn)
                continue;
            const auto parent = scene.objects[o].box;
            const double unit = parent.height * spec.at(r.parent)->scale_factor;
            const Vec2 center{parent.center.x + unit * dx, parent.center.y + unit * dy};
            scene.objects.push_back({r.child, make_box(center, parent.height * std::exp(ls), spec.at(r.child)->aspect)});
            scene.object_parent.push_back(static_cast<int>(o));
        }
    }

    const auto& noise = tmpl.detector;
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
        const auto& obj = scene.objects[o];
        const bool detected = !bernoulli(rng, noise.miss_rate);
        const double jx = normal(rng), jy = normal(rng), jh = normal(rng), jw = normal(rng);
        const double conf = sample_beta(noise.present, rng);
        if (detected) {
            BoxGeometry box = obj.box;
            box.center.x += noise.jitter * obj.box.height * jx;
            box.center.y += noise.jitter * obj.box.height * jy;
            box.height *= std::exp(noise.jitter * jh);
            box.width *= std::exp(noise.jitter * jw);
            scene.detections.push_back(Detection{0, 0, obj.category, box, conf});
            scene.detection_source.push_back(static_cast<int>(o));
        }
        const bool near_miss = bernoulli(rng, noise.near_miss_rate);
        const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double fp_conf = sample_beta(noise.absent, rng);
        if (near_miss) {
            BoxGeometry box = obj.box;
            box.center.x += 0.8 * obj.box.height * std::cos(angle);
            box.center.y += 0.8 * obj.box.height * std::sin(angle);
            scene.detections.push_back(Detection{0, 0, obj.category, box, fp_conf});
            scene.detection_source.push_back(-1);
        }
    }

    const int false_positives = std::poisson_distribution<int>(noise.false_positives_per_image)(rng);
    for (int k = 0; k < false_positives; ++k) {
        const auto& c = tmpl.categories[std::uniform_int_distribution<std::size_t>(0, tmpl.categories.size() - 1)(rng)];
        const Vec2 center{uniform(rng, 0.0, tmpl.image_width), uniform(rng, 0.0, tmpl.image_height)};
        const double h = c.height_mean * std::exp(c.height_spread * normal(rng));
        scene.detections.push_back(Detection{0, 0, c.name, make_box(center, h, c.aspect), sample_beta(noise.absent, rng)});
        scene.detection_source.push_back(-1);
    }
    return scene;
}

// Block of `size` variables with the given marginals; entry k follows the
// JointTable bit convention.
std::vector<double> block_joint(std::span<const double> marginals, double coupling, double pair_correlation,
                                std::mt19937_64& rng) {
    const int size = static_cast<int>(marginals.size());
    const std::size_t states = std::size_t{1} << size;
    auto g = [&](std::size_t k, int v) { return (k >> v & 1U) ? 1.0 - marginals[v] : -marginals[v]; };

    // Interaction terms: the top-order one for blocks of two or three, plus
    // optional pairwise ones inside blocks of three.
    std::vector<double> interaction(states, 0.0);
    if (size >= 2) {
        const double sign = bernoulli(rng, 0.5) ? 1.0 : -1.0;
        const double top = sign * uniform(rng, 0.5, 1.0);
        for (std::size_t k = 0; k < states; ++k) {
            double prod = 1.0;
            for (int v = 0; v < size; ++v)
                prod *= g(k, v);
            interaction[k] += top * prod / std::pow(0.25, size / 2.0);
        }
        if (size == 3 && pair_correlation > 0.0)
            for (int a = 0; a < 3; ++a)
                for (int b = a + 1; b < 3; ++b) {
                    const double w = pair_correlation * uniform(rng, -1.0, 1.0);
                    for (std::size_t k = 0; k < states; ++k)
                        interaction[k] += w * g(k, a) * g(k, b) / 0.25;
                }
    }
    // Largest multiple of the interaction keeping every entry positive.
    double scale = 1e300;
    for (std::size_t k = 0; k < states; ++k)
        if (interaction[k] < 0.0)
            scale = std::min(scale, 1.0 / -interaction[k]);
    if (scale == 1e300)
        scale = 0.0;
    scale *= coupling;

    std::vector<double> probs(states);
    double total = 0.0;
    for (std::size_t k = 0; k < states; ++k) {
        double base = 1.0;
        for (int v = 0; v < size; ++v)
            base *= (k >> v & 1U) ? marginals[v] : 1.0 - marginals[v];
        probs[k] = base * (1.0 + scale * interaction[k]);
        total += probs[k];
    }
    for (double& p : probs)
        p /= total;
    return probs;
}

SyntheticScene sample_clique_scene(const CliqueTemplate& tmpl, std::mt19937_64& rng) {
    SyntheticScene scene;
    const int n = std::uniform_int_distribution<int>(tmpl.min_variables, tmpl.max_variables)(rng);

    std::vector<int> sizes;
    for (int left = n; left > 0;) {
        const int size = sizes.empty() ? std::min(3, left) : std::uniform_int_distribution<int>(1, std::min(3, left))(rng);
        sizes.push_back(size);
        left -= size;
    }

    std::vector<double> marginals;
    std::optional<JointTable> joint;
    for (int size : sizes) {
        std::vector<double> m(size);
        for (double& q : m)
            q = uniform(rng, tmpl.marginal_min, tmpl.marginal_max);
        JointTable block(size, block_joint(m, tmpl.coupling, tmpl.pair_correlation, rng));
        joint = joint ? JointTable::product(*joint, block) : block;
        marginals.insert(marginals.end(), m.begin(), m.end());
    }

    // Draw the true assignment.
    const auto& probs = joint->probabilities();
    std::uint32_t state = static_cast<std::uint32_t>(
        std::discrete_distribution<std::size_t>(probs.begin(), probs.end())(rng));

    for (int v = 0; v < n; ++v) {
        const BoxGeometry box{{40.0 + 80.0 * v, 100.0}, 40.0, 40.0};
        const std::string category = "node";
        const bool present = state >> v & 1U;
        const auto noise = calibrated_noise(marginals[v], tmpl.concentration);
        const double conf = sample_beta(present ? noise.present : noise.absent, rng);
        if (present) {
            scene.objects.push_back({category, box});
            scene.object_parent.push_back(-1);
        }
        scene.detections.push_back(Detection{0, 0, category, box, conf});
        scene.detection_source.push_back(present ? static_cast<int>(scene.objects.size()) - 1 : -1);
        scene.joint_noise.push_back(noise);
    }
    scene.joint = std::move(joint);
    return scene;
}

template <typename Sampler>
SyntheticDataset assemble(std::size_t n_scenes, std::uint64_t seed, Sampler sampler) {
    if (n_scenes < 1)
        throw InvalidInput("sample_dataset needs at least one scene");
    SyntheticDataset data;
    data.scenes.reserve(n_scenes);
    DetectionId next_id = 0;
    for (std::size_t i = 0; i < n_scenes; ++i) {
        std::mt19937_64 rng(scene_seed(seed, i));
        SyntheticScene scene = sampler(rng);
        scene.image_id = static_cast<ImageId>(i + 1);
        for (auto& d : scene.detections) {
            d.id = next_id++;
            d.image_id = scene.image_id;
        }
        if (scene.joint)
            for (const auto& d : scene.detections)
                scene.joint_ids.push_back(d.id);
        data.scenes.push_back(std::move(scene));
    }
    return data;
}

} // namespace

SyntheticDataset sample_dataset(const SceneTemplate& tmpl, std::size_t n_scenes, std::uint64_t seed) {
    tmpl.validate();
    auto data = assemble(n_scenes, seed, [&](std::mt19937_64& rng) { return sample_geometric_scene(tmpl, rng); });
    data.categories = tmpl.category_names();
    std::sort(data.categories.begin(), data.categories.end());
    data.image_width = tmpl.image_width;
    data.image_height = tmpl.image_height;
    return data;
}

SyntheticDataset sample_dataset(const CliqueTemplate& tmpl, std::size_t n_scenes, std::uint64_t seed) {
    tmpl.validate();
    auto data = assemble(n_scenes, seed, [&](std::mt19937_64& rng) { return sample_clique_scene(tmpl, rng); });
    data.categories = {"node"};
    data.image_width = 40.0 + 80.0 * tmpl.max_variables;
    data.image_height = 200.0;
    return data;
}

SyntheticDataset sample_dataset(const TemplateSpec& tmpl, std::size_t n_scenes, std::uint64_t seed) {
    return std::visit([&](const auto& t) { return sample_dataset(t, n_scenes, seed); }, tmpl);
}

std::vector<double> exact_posterior(const JointTable& joint, std::span<const double> confidences,
                                    std::span<const DetectionNoise> noise) {
    const int n = joint.variables();
    if (n > kMaxJointVariables)
        throw InvalidInput("exact_posterior enumerates at most " + std::to_string(kMaxJointVariables) +
                           " variables; reduce the scene size");
    if (static_cast<int>(confidences.size()) != n || static_cast<int>(noise.size()) != n)
        throw InvalidInput("exact_posterior: one confidence and noise model per variable required");

    // Log-likelihoods keep sharp noise models from underflowing.
    std::vector<double> ll_true(n), ll_false(n);
    for (int v = 0; v < n; ++v) {
        ll_true[v] = noise[v].present.log_density(confidences[v]);
        ll_false[v] = noise[v].absent.log_density(confidences[v]);
    }
    const auto& probs = joint.probabilities();
    std::vector<double> log_w(probs.size());
    double max_log = -INFINITY;
    for (std::uint32_t k = 0; k < probs.size(); ++k) {
        if (probs[k] <= 0.0) {
            log_w[k] = -INFINITY;
            continue;
        }
        double lw = std::log(probs[k]);
        for (int v = 0; v < n; ++v)
            lw += (k >> v & 1U) ? ll_true[v] : ll_false[v];
        log_w[k] = lw;
        max_log = std::max(max_log, lw);
    }
    std::vector<double> mass(n, 0.0);
    double total = 0.0;
    for (std::uint32_t k = 0; k < probs.size(); ++k) {
        if (log_w[k] == -INFINITY)
            continue;
        const double w = std::exp(log_w[k] - max_log);
        total += w;
        for (int v = 0; v < n; ++v)
            if (k >> v & 1U)
                mass[v] += w;
    }
    for (double& m : mass)
        m = std::clamp(m / total, 0.0, 1.0);
    return mass;
}

std::vector<double> exact_posterior(const SyntheticScene& scene) {
    if (!scene.joint)
        throw InvalidInput("scene carries no joint distribution");
    std::map<DetectionId, std::size_t> position;
    for (std::size_t i = 0; i < scene.detections.size(); ++i)
        position[scene.detections[i].id] = i;
    std::vector<double> confidences;
    for (auto id : scene.joint_ids) {
        auto it = position.find(id);
        if (it == position.end())
            throw InvalidInput("joint variable without detection");
        confidences.push_back(scene.detections[it->second].confidence);
    }
    const auto by_variable = exact_posterior(*scene.joint, confidences, scene.joint_noise);
    std::vector<double> out(scene.detections.size(), 0.0);
    for (std::size_t v = 0; v < scene.joint_ids.size(); ++v)
        out[position[scene.joint_ids[v]]] = by_variable[v];
    return out;
}

} // namespace fnm
