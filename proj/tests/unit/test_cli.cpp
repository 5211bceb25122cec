#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "fnm/io.hpp"

namespace fs = std::filesystem;
using fnm::cli::run;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const char* name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::string data_dir = FNM_DATA_DIR;

} // namespace

TEST_CASE("cli: sample-size") {
    const auto r = call({"sample-size", "--epsilon-h", "0.02", "--delta", "0.1"});
    CHECK(r.code == fnm::cli::kOk);
    CHECK(r.out == "samples 3745\n");
    const auto composed = call({"sample-size", "--epsilon", "0.1", "--delta", "0.1", "--detector-prob", "0.8",
                                "--prior", "0.02", "--context-prob", "0.01"});
    CHECK(composed.code == fnm::cli::kOk);
    CHECK(composed.out.find("samples 127124") != std::string::npos);
    CHECK(call({"sample-size", "--epsilon-h", "0.02", "--epsilon", "0.1"}).code == fnm::cli::kUsage);
}

TEST_CASE("cli: usage and data errors") {
    CHECK(call({}).code == fnm::cli::kUsage);
    CHECK(call({"frobnicate"}).code == fnm::cli::kUsage);
    CHECK(call({"curve", "--detector-prob", "0.5"}).code == fnm::cli::kUsage);
    CHECK(call({"eval", "--detections", "/nonexistent/d.json", "--annotations", "/nonexistent/a.json"}).code ==
          fnm::cli::kData);
}

TEST_CASE("cli: curve with a = p is the identity") {
    const auto r = call({"curve", "--detector-prob", "0.3", "--prior", "0.3", "--samples", "11"});
    REQUIRE(r.code == fnm::cli::kOk);
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "h,posterior,derivative");
    int rows = 0;
    while (std::getline(lines, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        const double h = std::stod(line.substr(0, c1));
        const double post = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        CHECK(post == doctest::Approx(h).epsilon(1e-9));
        ++rows;
    }
    CHECK(rows == 11);
}

TEST_CASE("cli: oracle-check") {
    const auto tmpl = data_dir + "/templates/clique_oracle.json";
    const auto ok = call({"oracle-check", tmpl, "--scenes", "50"});
    CHECK(ok.code == fnm::cli::kOk);
    CHECK(ok.out.find("scenes 50") != std::string::npos);
    // A negative tolerance cannot be met.
    CHECK(call({"oracle-check", tmpl, "--scenes", "5", "--tolerance", "-1"}).code == fnm::cli::kTolerance);
}

TEST_CASE("cli: pipeline and byte-identical replay") {
    const auto dir = scratch("fnm_cli_test");
    const auto tmpl = data_dir + "/templates/benchmark.json";
    REQUIRE(call({"synth", tmpl, "--scenes", "60", "--seed", "3", "-o", (dir / "train").string()}).code == 0);
    REQUIRE(call({"synth", tmpl, "--scenes", "20", "--seed", "4", "-o", (dir / "test").string()}).code == 0);
    const auto model = (dir / "model.json").string();
    REQUIRE(call({"train", "--annotations", (dir / "train/annotations.json").string(), "-o", model}).code == 0);
    const auto rescored = (dir / "rescored.json").string();
    const auto first = call({"rescore", "--model", model, "--detections", (dir / "test/detections.json").string(),
                             "-o", rescored, "--jobs", "2"});
    REQUIRE(first.code == 0);
    const auto manifest = rescored + ".manifest.json";
    REQUIRE(fs::exists(manifest));
    const auto original = fnm::read_text_file(rescored);
    fs::remove(rescored);
    REQUIRE(call({"replay", manifest}).code == 0);
    CHECK(fnm::read_text_file(rescored) == original);

    const auto eval = call({"eval", "--detections", rescored, "--annotations",
                            (dir / "test/annotations.json").string()});
    CHECK(eval.code == 0);
    CHECK(eval.out.find("mAP") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: an all-prior model leaves confidences unchanged") {
    const auto dir = scratch("fnm_cli_identity");
    // No training counts: every smoothed conditional is the prior.
    fnm::BinningConfig binning;
    binning.scale_factors = {{"cup", 1.0}, {"pen", 1.0}};
    const std::vector<std::string> cats{"cup", "pen"};
    fnm::save_model({fnm::RelationTable(binning, cats, 2), fnm::PriorTable(cats, 0.02)}, dir / "m.json");
    fnm::write_text_file(dir / "d.json", R"([
        {"image_id": 1, "category": "cup", "bbox": [10, 10, 20, 20], "score": 0.7},
        {"image_id": 1, "category": "pen", "bbox": [40, 10, 5, 30], "score": 0.2},
        {"image_id": 1, "category": "cup", "bbox": [70, 60, 20, 20], "score": 0.45}])");
    REQUIRE(call({"rescore", "--model", (dir / "m.json").string(), "--detections", (dir / "d.json").string(), "-o",
                  (dir / "r.json").string()})
                .code == 0);
    const auto before = fnm::load_detections(dir / "d.json");
    const auto after = fnm::load_detections(dir / "r.json");
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(after[i].confidence == doctest::Approx(before[i].confidence).epsilon(1e-9));
    // One iteration is the default.
    const auto manifest = fnm::read_text_file(dir / "r.json.manifest.json");
    CHECK(manifest.find("\"iterations\":\"1\"") != std::string::npos);
    fs::remove_all(dir);
}
