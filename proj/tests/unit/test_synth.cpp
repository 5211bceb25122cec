#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fnm/error.hpp"
#include "fnm/synth.hpp"

using namespace fnm;

namespace {

SceneTemplate two_category_template() {
    SceneTemplate t;
    t.name = "test";
    t.categories = {{"table", 1.0, 80, 0.0, 1.5, 1.0}, {"chair", 0.0, 60, 0.2, 0.7, 1.0}};
    RelationSpec r;
    r.parent = "table";
    r.child = "chair";
    r.offset = {1.0, 0.25};
    r.offset_spread = 0.0;
    r.log_scale = -0.3;
    r.log_scale_spread = 0.0;
    r.probability = 0.35;
    t.relations = {r};
    t.detector.false_positives_per_image = 1.0;
    return t;
}

// Posterior by plain summation in ascending assignment order.
std::vector<double> direct_posterior(const JointTable& joint, std::span<const double> conf,
                                     std::span<const DetectionNoise> noise) {
    const int n = joint.variables();
    std::vector<double> num(n, 0.0);
    double total = 0.0;
    for (std::uint32_t s = 0; s < (1u << n); ++s) {
        double w = joint.probability(s);
        for (int i = 0; i < n; ++i) {
            const auto& b = (s >> i) & 1u ? noise[i].present : noise[i].absent;
            w *= std::exp(b.log_density(conf[i]));
        }
        total += w;
        for (int i = 0; i < n; ++i)
            if ((s >> i) & 1u)
                num[i] += w;
    }
    for (auto& v : num)
        v /= total;
    return num;
}

} // namespace

TEST_CASE("beta sampling") {
    std::mt19937_64 rng(1);
    const BetaParams b{3.0, 1.0};
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = sample_beta(b, rng);
        REQUIRE(x > 0.0);
        REQUIRE(x < 1.0);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = 3.0 / (16.0 * 5.0);
    CHECK(std::abs(mean - 0.75) < 3.0 * std::sqrt(var / n));
    CHECK(sq / n - mean * mean == doctest::Approx(var).epsilon(0.05));
    CHECK_THROWS_AS((BetaParams{0.0, 1.0}.validate()), InvalidInput);
    // Beta(1,1) density is 1 everywhere.
    CHECK(BetaParams{}.log_density(0.3) == doctest::Approx(0.0));
}

TEST_CASE("geometric scenes: determinism") {
    const auto t = two_category_template();
    const auto a = sample_dataset(t, 50, 42);
    const auto b = sample_dataset(t, 50, 42);
    REQUIRE(a.scenes.size() == 50);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(a.scenes[i].objects == b.scenes[i].objects);
        CHECK(a.scenes[i].detections == b.scenes[i].detections);
        CHECK(a.scenes[i].image_id == static_cast<ImageId>(i + 1));
    }
    CHECK(a.detections() != sample_dataset(t, 50, 43).detections());
    // Ids are consecutive from 0 over the whole set.
    const auto all = a.detections();
    for (std::size_t i = 0; i < all.size(); ++i)
        CHECK(all[i].id == static_cast<DetectionId>(i));
}

TEST_CASE("geometric scenes: zero spread reproduces the planted offset") {
    const auto t = two_category_template();
    const auto data = sample_dataset(t, 200, 5);
    std::size_t with_child = 0;
    for (const auto& s : data.scenes) {
        REQUIRE(s.objects.size() == s.object_parent.size());
        for (std::size_t k = 0; k < s.objects.size(); ++k) {
            if (s.object_parent[k] < 0)
                continue;
            ++with_child;
            const auto& parent = s.objects[s.object_parent[k]].box;
            const auto& child = s.objects[k].box;
            CHECK((child.center.x - parent.center.x) / parent.height == doctest::Approx(1.0).epsilon(1e-12));
            CHECK((child.center.y - parent.center.y) / parent.height == doctest::Approx(0.25).epsilon(1e-12));
            CHECK(std::log(child.height / parent.height) == doctest::Approx(-0.3).epsilon(1e-12));
        }
    }
    // Relation frequency within three standard deviations.
    const double n = 200, p = 0.35;
    CHECK(std::abs(static_cast<double>(with_child) - n * p) < 3.0 * std::sqrt(n * p * (1 - p)));
}

TEST_CASE("geometric scenes: detections trace their sources") {
    auto t = two_category_template();
    t.detector.miss_rate = 0.0;
    t.detector.false_positives_per_image = 0.0;
    const auto data = sample_dataset(t, 30, 8);
    for (const auto& s : data.scenes) {
        CHECK(s.detections.size() == s.objects.size());
        for (std::size_t d = 0; d < s.detections.size(); ++d) {
            REQUIRE(s.detection_source[d] >= 0);
            CHECK(s.detections[d].category == s.objects[s.detection_source[d]].category);
        }
        CHECK_FALSE(s.joint.has_value());
    }
    t.relations[0].parent = "sofa";
    CHECK_THROWS_AS(t.validate(), InvalidInput);
}

TEST_CASE("clique scenes") {
    CliqueTemplate t;
    const auto a = sample_dataset(t, 40, 3);
    const auto b = sample_dataset(t, 40, 3);
    for (std::size_t i = 0; i < a.scenes.size(); ++i) {
        const auto& s = a.scenes[i];
        REQUIRE(s.joint.has_value());
        CHECK(s.joint == b.scenes[i].joint);
        CHECK(s.detections == b.scenes[i].detections);
        const int n = s.joint->variables();
        CHECK(n >= t.min_variables);
        CHECK(n <= t.max_variables);
        CHECK(s.joint_ids.size() == static_cast<std::size_t>(n));
        // The first three variables are pairwise independent.
        const double p0 = s.joint->marginal(0), p1 = s.joint->marginal(1);
        const std::pair<int, bool> given1[] = {{1, true}};
        CHECK(s.joint->conditional(0, given1) == doctest::Approx(p0).epsilon(1e-9));
        const std::pair<int, bool> given2[] = {{2, false}};
        CHECK(s.joint->conditional(1, given2) == doctest::Approx(p1).epsilon(1e-9));
    }
}

TEST_CASE("exact posterior") {
    CliqueTemplate t;
    const auto data = sample_dataset(t, 30, 11);
    for (const auto& s : data.scenes) {
        std::vector<double> conf;
        for (auto id : s.joint_ids)
            for (const auto& d : s.detections)
                if (d.id == id)
                    conf.push_back(d.confidence);
        const auto ref = direct_posterior(*s.joint, conf, s.joint_noise);
        const auto got = exact_posterior(*s.joint, conf, s.joint_noise);
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }

    // Independent variables with calibrated noise: the posterior is the
    // confidence itself.
    const JointTable ind = JointTable::product(JointTable(1, {0.7, 0.3}), JointTable(1, {0.4, 0.6}));
    const DetectionNoise noise[] = {calibrated_noise(0.3, 4.0), calibrated_noise(0.6, 4.0)};
    const double conf[] = {0.22, 0.81};
    const auto post = exact_posterior(ind, conf, noise);
    CHECK(post[0] == doctest::Approx(0.22).epsilon(1e-12));
    CHECK(post[1] == doctest::Approx(0.81).epsilon(1e-12));

    // Nearly noise-free detector: the posterior follows the evidence.
    const DetectionNoise sharp[] = {{{200, 1}, {1, 200}}, {{200, 1}, {1, 200}}};
    const JointTable corr(2, {0.45, 0.05, 0.05, 0.45});
    const double evidence[] = {0.99, 0.01};
    const auto p = exact_posterior(corr, evidence, sharp);
    CHECK(p[0] > 1.0 - 1e-6);
    CHECK(p[1] < 1e-6);
}

TEST_CASE("joint size limit") {
    JointTable big(1, {0.5, 0.5});
    for (int i = 1; i < kMaxJointVariables; ++i)
        big = JointTable::product(big, JointTable(1, {0.5, 0.5}));
    CHECK(big.variables() == kMaxJointVariables);
    CHECK_THROWS_AS(JointTable::product(big, JointTable(1, {0.5, 0.5})), InvalidInput);
    CliqueTemplate t;
    t.max_variables = kMaxJointVariables + 1;
    CHECK_THROWS_AS(t.validate(), InvalidInput);
}

TEST_CASE("geometric scenes: frequencies over 10^4 scenes") {
    auto t = two_category_template();
    t.categories[1].prior = 0.3;
    const auto data = sample_dataset(t, 10000, 77);
    double spawned = 0, free_chairs = 0;
    for (const auto& s : data.scenes) {
        for (std::size_t k = 0; k < s.objects.size(); ++k) {
            if (s.objects[k].category != "chair")
                continue;
            (s.object_parent[k] >= 0 ? spawned : free_chairs) += 1;
        }
    }
    // One free table per scene, so both counts are Bernoulli sums over scenes.
    const double n = 10000;
    CHECK(std::abs(spawned - n * 0.35) < 3.0 * std::sqrt(n * 0.35 * 0.65));
    CHECK(std::abs(free_chairs - n * 0.3) < 3.0 * std::sqrt(n * 0.3 * 0.7));
}

TEST_CASE("exact posterior: variable order does not matter") {
    CliqueTemplate t;
    t.pair_correlation = 0.5;
    const auto data = sample_dataset(t, 20, 21);
    std::mt19937_64 rng(6);
    for (const auto& s : data.scenes) {
        const int n = s.joint->variables();
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i)
            perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        // Variable perm[i] of the original becomes variable i.
        std::vector<double> probs(s.joint->probabilities().size());
        for (std::uint32_t a = 0; a < probs.size(); ++a) {
            std::uint32_t b = 0;
            for (int i = 0; i < n; ++i)
                b |= ((a >> perm[i]) & 1u) << i;
            probs[b] = s.joint->probability(a);
        }
        std::vector<double> conf, conf_p;
        std::vector<DetectionNoise> noise_p;
        for (auto id : s.joint_ids)
            for (const auto& d : s.detections)
                if (d.id == id)
                    conf.push_back(d.confidence);
        for (int i = 0; i < n; ++i) {
            conf_p.push_back(conf[perm[i]]);
            noise_p.push_back(s.joint_noise[perm[i]]);
        }
        const auto base = exact_posterior(*s.joint, conf, s.joint_noise);
        const auto permuted = exact_posterior(JointTable(n, probs), conf_p, noise_p);
        for (int i = 0; i < n; ++i) {
            CHECK(permuted[i] == doctest::Approx(base[perm[i]]).epsilon(1e-12));
            CHECK(permuted[i] >= 0.0);
            CHECK(permuted[i] <= 1.0);
        }
    }
}
