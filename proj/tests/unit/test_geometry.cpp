#include <doctest.h>

#include <cmath>
#include <random>

#include "fnm/error.hpp"
#include "fnm/geometry.hpp"

using namespace fnm;

TEST_CASE("relative_location") {
    CHECK(relative_location({5, 7}, {5, 7}, 13, 1) == Vec2{0, 0});
    const auto v = relative_location({110, 220}, {100, 200}, 10, 1);
    CHECK(v.x == doctest::Approx(1.0));
    CHECK(v.y == doctest::Approx(2.0));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-100, 100);
    for (int i = 0; i < 100; ++i) {
        const Vec2 q{u(rng), u(rng)}, r{u(rng), u(rng)};
        const double h = 1 + std::abs(u(rng)), k = 0.1 + std::abs(u(rng)) / 10;
        const auto a = relative_location(q, r, h, 1.3);
        const auto b = relative_location({q.x * k, q.y * k}, {r.x * k, r.y * k}, h * k, 1.3);
        CHECK(a.x == doctest::Approx(b.x));
        CHECK(a.y == doctest::Approx(b.y));
    }
    CHECK_THROWS_AS(relative_location({0, 0}, {0, 0}, 0, 1), InvalidInput);
    CHECK_THROWS_AS(relative_location({0, 0}, {0, 0}, 1, 0), InvalidInput);
}

TEST_CASE("relative_scale") {
    CHECK(relative_scale(4, 4) == 0.0);
    CHECK(relative_scale(2, 1) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(relative_scale(3, 7) == doctest::Approx(-relative_scale(7, 3)));
    CHECK_THROWS_AS(relative_scale(0, 1), InvalidInput);
}

TEST_CASE("featurize") {
    BinningConfig b;
    b.scale_factors = {{"table", 1.5}};
    const BoxGeometry ref{{100, 100}, 20, 40};
    const auto self = featurize(ref, ref, "table", b);
    CHECK(self.offset == Vec2{0, 0});
    CHECK(self.scale_ratio == 0.0);
    // Hand-computed: offsets (30, -60) / (20 * 1.5), log(30 / 20).
    const auto f = featurize(BoxGeometry{{130, 40}, 30, 10}, ref, "table", b);
    CHECK(f.offset.x == doctest::Approx(1.0));
    CHECK(f.offset.y == doctest::Approx(-2.0));
    CHECK(f.scale_ratio == doctest::Approx(0.4054651081081644));
    const auto g = featurize(BoxGeometry{{390, 120}, 90, 30}, BoxGeometry{{300, 300}, 60, 120}, "table", b);
    CHECK(g.offset.x == doctest::Approx(f.offset.x));
    CHECK(g.offset.y == doctest::Approx(f.offset.y));
    CHECK(g.scale_ratio == doctest::Approx(f.scale_ratio));
    CHECK_THROWS_AS(featurize(ref, ref, "chair", b), MissingScaleFactor);
}

TEST_CASE("bin_feature") {
    BinningConfig b;
    CHECK(bin_feature({{-4.0, -4.0}, -2.0}, b) == BinIndex{0, 0, 0});
    CHECK(bin_feature({{9.0, 4.0}, 5.0}, b) == BinIndex{15, 15, 7});
    CHECK(bin_feature({{-9.0, -40.0}, -5.0}, b) == BinIndex{0, 0, 0});
    // Frozen by direct arithmetic: floor((v - min) / width).
    CHECK(bin_feature({{1.3, -2.0}, 0.405465}, b) == BinIndex{10, 4, 4});
    CHECK(bin_feature({{NAN, 0.0}, 0.0}, b).x == 0);
}

TEST_CASE("binning config validation") {
    BinningConfig b;
    CHECK_NOTHROW(b.validate());
    b.offset_bins_x = 256;
    CHECK_THROWS_AS(b.validate(), InvalidInput);
    b = {};
    b.scale = {1, 1};
    CHECK_THROWS_AS(b.validate(), InvalidInput);
    b = {};
    b.scale_factors["x"] = -1;
    CHECK_THROWS_AS(b.validate(), InvalidInput);
    b = {};
    b.add_default_scale_factors(std::vector<std::string>{"a", "b"});
    CHECK(b.scale_factor("a") == 1.0);
}

TEST_CASE("detection validation") {
    Detection d{1, 1, "chair", {{0, 0}, 10, 10}, 0.5};
    CHECK_NOTHROW(validate(d));
    d.confidence = 1.5;
    CHECK_THROWS_AS(validate(d), InvalidInput);
    d.confidence = 0.5;
    d.box.width = 0;
    CHECK_THROWS_AS(validate(d), InvalidInput);
}
