// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "fnm/evaluation.hpp"
#include "fnm/inference.hpp"
#include "fnm/io.hpp"
#include "fnm/oracle.hpp"
#include "fnm/relation_model.hpp"
#include "fnm/stability.hpp"
#include "fnm/synth.hpp"

namespace fs = std::filesystem;
using namespace fnm;

namespace {

const fs::path kData = FNM_DATA_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fnm_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out)
        *out = o.str();
    return code;
}

double map_of(const std::string& eval_output) {
    const auto pos = eval_output.rfind("mAP");
    return pos == std::string::npos ? -1.0 : std::stod(eval_output.substr(pos + 3));
}

// Posterior of a detection at the worked operating point.
Outcome worked_posterior() {
    const double v = combine(0.8, 0.01, 0.02);
    return {std::abs(v - 0.6644) <= 5e-4, fmt("combine(0.8, 0.01, 0.02) = %.10f", v)};
}

Outcome hoeffding() {
    const auto m_direct = required_samples(0.02, 0.1);
    const CurveParams c{0.8, 0.02};
    const double eh10 = epsilon_h(c, 0.01, 0.1);
    const double eh05 = epsilon_h(c, 0.01, 0.05);
    const auto m05 = required_samples(eh05, 0.1);
    const double m_rel = std::abs(static_cast<double>(m05) - 400048.0) / 400048.0;
    const double eh_rel = std::abs(eh10 - 0.0034) / 0.0034;
    const bool pass = m_direct == 3745 && m_rel <= 0.03 && eh_rel <= 0.02;
    return {pass, fmt("m(0.02, 0.1) = %llu; eps=0.05: m = %llu (%.2f%% off 400048); eps=0.1: eps_h = %.6g "
                      "(%.2f%% off 0.0034)",
                      static_cast<unsigned long long>(m_direct), static_cast<unsigned long long>(m05), 100 * m_rel,
                      eh10, 100 * eh_rel)};
}

Outcome curve_properties() {
    double line_err = 0.0;
    for (const auto& pt : sample_curve({0.02, 0.02}, 1001))
        line_err = std::max(line_err, std::abs(pt.posterior - pt.h));

    double max_deriv = 0.0;
    for (int i = 0; i <= 999; ++i) {
        const double h = 0.001 + (0.1 - 0.001) * i / 999.0;
        max_deriv = std::max(max_deriv, posterior_derivative({0.8, 0.02}, h));
    }

    // Central differences; the error is measured relative to the derivative
    // scale since it spans several orders of magnitude on the grid.
    double fd_err = 0.0;
    const double step = 1e-6;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
            for (int k = 0; k < 10; ++k) {
                const CurveParams c{0.05 + 0.1 * i, 0.05 + 0.1 * j};
                const double h = 0.05 + 0.1 * k;
                const double fd = (posterior_at(c, h + step) - posterior_at(c, h - step)) / (2 * step);
                const double d = posterior_derivative(c, h);
                fd_err = std::max(fd_err, std::abs(fd - d) / std::max(1.0, std::abs(d)));
            }
    const bool pass = line_err <= 1e-12 && max_deriv > 10.0 && fd_err <= 1e-5;
    return {pass, fmt("|posterior - h| <= %.3g at a = p; max derivative on [0.001, 0.1] = %.4g; finite-difference "
                      "error %.3g",
                      line_err, max_deriv, fd_err)};
}

Outcome oracle() {
    const auto tmpl = std::get<CliqueTemplate>(load_template(kData / "templates/clique_oracle.json"));
    const auto data = sample_dataset(tmpl, 200, tmpl.seed);
    std::size_t widest = 0;
    for (const auto& s : data.scenes)
        widest = std::max<std::size_t>(widest, s.joint->variables());
    const auto report = oracle_check(data, oracle_inference_config());
    const bool pass = report.scenes == 200 && widest <= 5 && report.max_abs_error <= 1e-6;
    return {pass, fmt("%zu scenes, %zu variables (at most %zu per scene), max |error| = %.3g", report.scenes,
                      report.variables, widest, report.max_abs_error)};
}

Outcome benchmark() {
    const auto dir = scratch("benchmark");
    const auto tmpl = (kData / "templates/benchmark.json").string();
    const auto d = [&](const char* f) { return (dir / f).string(); };
    bool ok = cli({"synth", tmpl, "--scenes", "2000", "--seed", "1", "-o", d("train")}) == 0 &&
              cli({"synth", tmpl, "--scenes", "500", "--seed", "2", "-o", d("test")}) == 0 &&
              cli({"train", "--annotations", d("train/annotations.json"), "-o", d("model.json")}) == 0 &&
              cli({"rescore", "--model", d("model.json"), "--detections", d("test/detections.json"), "-o",
                   d("fnm.json")}) == 0 &&
              cli({"rescore", "--model", d("model.json"), "--detections", d("test/detections.json"), "--gating",
                   "off", "-o", d("dfnm.json")}) == 0;
    if (!ok)
        return {false, "pipeline command failed"};
    auto score = [&](const std::string& dets) {
        std::string out;
        if (cli({"eval", "--detections", dets, "--annotations", d("test/annotations.json")}, &out) != 0)
            return -1.0;
        return map_of(out);
    };
    const double base = score(d("test/detections.json"));
    const double fnm = score(d("fnm.json"));
    const double dfnm = score(d("dfnm.json"));
    fs::remove_all(dir);
    const bool pass = base >= 0 && fnm - base >= 0.02 && dfnm < fnm;
    return {pass, fmt("mAP baseline %.4f, FNM %.4f (%+.2f points), dFNM %.4f (%+.2f points)", base, fnm,
                      100 * (fnm - base), dfnm, 100 * (dfnm - base))};
}

BoxGeometry moved(BoxGeometry b, double k, Vec2 t) {
    return {{b.center.x * k + t.x, b.center.y * k + t.y}, b.height * k, b.width * k};
}

std::vector<double> pipeline(const SyntheticDataset& train, const SyntheticDataset& test, double k, Vec2 t,
                             int jobs) {
    auto scenes = train.annotated_scenes();
    for (auto& s : scenes)
        for (auto& o : s.objects)
            o.box = moved(o.box, k, t);
    auto dets = test.detections();
    for (auto& det : dets)
        det.box = moved(det.box, k, t);
    BinningConfig binning;
    binning.add_default_scale_factors(train.categories);
    RelationModel model{fit_relations(scenes, binning, 2), PriorTable(train.categories, kDefaultPrior)};
    const RelationContext ctx(model);
    InferenceConfig config;
    config.iterations = 2;
    const auto out = rescore_dataset(dets, ctx, config, jobs);
    std::vector<double> conf;
    for (const auto& d : out.detections)
        conf.push_back(d.confidence);
    return conf;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        return INFINITY;
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Outcome invariance() {
    const auto tmpl = load_template(kData / "templates/benchmark.json");
    const auto train = sample_dataset(tmpl, 400, 31);
    const auto test = sample_dataset(tmpl, 100, 32);
    const auto ref = pipeline(train, test, 1.0, {0, 0}, 1);
    double geo = 0;
    for (double k : {0.5, 3.0})
        geo = std::max(geo, max_diff(ref, pipeline(train, test, k, {0, 0}, 1)));
    geo = std::max(geo, max_diff(ref, pipeline(train, test, 1.0, {137.25, -58.5}, 1)));
    const bool jobs_same = max_diff(ref, pipeline(train, test, 1.0, {0, 0}, 8)) == 0.0;
    std::size_t changed = 0;
    const auto raw = test.detections();
    for (std::size_t i = 0; i < ref.size(); ++i)
        changed += ref[i] != raw[i].confidence;

    // combine properties on random points.
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.001, 0.999);
    int violations = 0;
    for (int n = 0; n < 10000; ++n) {
        const double a = u(rng), h = u(rng), p = u(rng), a2 = u(rng), h2 = u(rng);
        if (std::abs(combine(a, p, p) - a) > 1e-12)
            ++violations;
        if (std::abs(combine(1 - a, 1 - h, 1 - p) - (1 - combine(a, h, p))) > 1e-12)
            ++violations;
        if ((a < a2) != (combine(a, h, p) < combine(a2, h, p)) && a != a2)
            ++violations;
        if ((h < h2) != (combine(a, h, p) < combine(a, h2, p)) && h != h2)
            ++violations;
        const double v = combine(a, h, p);
        if (!(v > 0.0 && v < 1.0))
            ++violations;
    }
    const bool pass = geo <= 1e-9 && jobs_same && violations == 0 && changed > 0;
    return {pass, fmt("%zu detections (%zu rescored): max change under rescale/translation %.3g; jobs 1 vs 8 %s; "
                      "combine property violations %d / 10000 points",
                      ref.size(), changed, geo, jobs_same ? "identical" : "DIFFER", violations)};
}

Outcome neighbor_selection() {
    const auto tmpl = std::get<SceneTemplate>(load_template(kData / "templates/informative_neighbor.json"));
    const auto train = sample_dataset(tmpl, 2000, tmpl.seed);
    RelationModel model{fit_relations(train.annotated_scenes(), tmpl.binning(), 2),
                        PriorTable(train.categories, kDefaultPrior)};
    const RelationContext ctx(model);
    InferenceConfig config;
    config.max_neighbors = 1;

    int hits = 0, trials = 0;
    std::size_t distractors = 0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
        const auto scene = sample_dataset(tmpl, 1, 100000 + t).scenes.front();
        const auto& dets = scene.detections;
        // Query: the detected planted object; target: the detection of its parent.
        std::size_t query = dets.size(), target = dets.size();
        for (std::size_t i = 0; i < dets.size(); ++i) {
            const int src = scene.detection_source[i];
            if (src >= 0 && scene.object_parent[src] >= 0) {
                query = i;
                for (std::size_t j = 0; j < dets.size(); ++j)
                    if (scene.detection_source[j] == scene.object_parent[src])
                        target = j;
                break;
            }
        }
        ++trials;
        if (query == dets.size() || target == dets.size())
            continue;
        std::vector<std::size_t> candidates;
        std::vector<double> beliefs;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            beliefs.push_back(dets[i].confidence);
            if (i != query)
                candidates.push_back(i);
        }
        distractors += candidates.size() - 1;
        const auto chosen = select_neighbors(query, dets, candidates, beliefs, ctx, config);
        hits += chosen.size() == 1 && chosen[0] == target;
    }
    const double rate = static_cast<double>(hits) / trials;
    return {rate >= 0.95, fmt("planted neighbor chosen in %d / %d trials (%.1f%%), %.1f distractors per trial", hits,
                              trials, 100 * rate, static_cast<double>(distractors) / trials)};
}

bool close(double a, double b, double scale) { return std::abs(a - b) <= 1e-8 * std::max({1.0, std::abs(a), scale}); }

Outcome round_trips() {
    const auto dir = scratch("io");
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0, 1);
    const auto tmpl = load_template(kData / "templates/benchmark.json");
    int cases = 0, failures = 0;
    std::string first_failure;
    auto note = [&](bool ok, const std::string& what) {
        ++cases;
        if (!ok && failures++ == 0)
            first_failure = what;
    };

    for (int i = 0; i < 250; ++i) {
        // Detections through files.
        const auto data = sample_dataset(tmpl, 1 + rng() % 4, rng());
        auto dets = data.detections();
        for (auto& d : dets)
            d.confidence = u(rng);
        save_detections(dets, dir / "d.json");
        const auto back = load_detections(dir / "d.json");
        bool ok = back.size() == dets.size();
        for (std::size_t k = 0; ok && k < dets.size(); ++k)
            ok = back[k].id == dets[k].id && back[k].image_id == dets[k].image_id &&
                 back[k].category == dets[k].category && close(back[k].confidence, dets[k].confidence, 1) &&
                 close(back[k].box.center.x, dets[k].box.center.x, 1e3) &&
                 close(back[k].box.center.y, dets[k].box.center.y, 1e3) &&
                 close(back[k].box.height, dets[k].box.height, 1e3) && close(back[k].box.width, dets[k].box.width, 1e3);
        ok = ok && format_detections(back) == read_text_file(dir / "d.json");
        note(ok, "detections case " + std::to_string(i));

        // Annotations.
        const auto ann = make_annotations(data);
        save_annotations(ann, dir / "a.json");
        const auto ann_back = load_annotations(dir / "a.json");
        ok = ann_back.images == ann.images && ann_back.categories == ann.categories &&
             ann_back.scenes.size() == ann.scenes.size() &&
             format_annotations(ann_back) == read_text_file(dir / "a.json");
        for (std::size_t s = 0; ok && s < ann.scenes.size(); ++s) {
            ok = ann_back.scenes[s].objects.size() == ann.scenes[s].objects.size();
            for (std::size_t o = 0; ok && o < ann.scenes[s].objects.size(); ++o)
                ok = ann_back.scenes[s].objects[o].category == ann.scenes[s].objects[o].category &&
                     close(ann_back.scenes[s].objects[o].box.center.x, ann.scenes[s].objects[o].box.center.x, 1e3);
        }
        note(ok, "annotations case " + std::to_string(i));

        // Models: counts are integers, priors pre-rounded, so equality is exact.
        BinningConfig binning;
        binning.add_default_scale_factors(data.categories);
        binning.scale_factors[data.categories.front()] = round_sig9(0.5 + u(rng));
        RelationModel model{fit_relations(data.annotated_scenes(), binning, 1 + static_cast<int>(rng() % 2)), {}};
        model.table.set_smoothing(round_sig9(u(rng) * 3), rng() % 2 ? SmoothingMode::prior : SmoothingMode::laplace);
        for (const auto& c : model.table.categories())
            model.priors.set(c, round_sig9(0.001 + 0.5 * u(rng)));
        save_model(model, dir / "m.json");
        const auto model_back = load_model(dir / "m.json");
        note(model_back == model && format_model(model_back) == read_text_file(dir / "m.json"),
             "model case " + std::to_string(i));

        // Templates.
        TemplateSpec spec;
        if (i % 2) {
            CliqueTemplate c;
            c.min_variables = 1 + static_cast<int>(rng() % 3);
            c.max_variables = c.min_variables + static_cast<int>(rng() % 3);
            c.marginal_min = round_sig9(0.05 + 0.3 * u(rng));
            c.marginal_max = round_sig9(c.marginal_min + 0.3 * u(rng));
            c.coupling = round_sig9(u(rng));
            c.concentration = round_sig9(1 + 5 * u(rng));
            c.pair_correlation = round_sig9(u(rng));
            c.seed = rng();
            spec = c;
        } else {
            auto g = std::get<SceneTemplate>(tmpl);
            g.name = "t\xC3\xA9st " + std::to_string(i);
            for (auto& c : g.categories)
                c.prior = round_sig9(u(rng));
            for (auto& r : g.relations)
                r.offset = {round_sig9(2 * u(rng) - 1), round_sig9(2 * u(rng) - 1)};
            g.detector.jitter = round_sig9(0.1 * u(rng));
            g.seed = rng();
            spec = g;
        }
        write_text_file(dir / "t.json", format_template(spec));
        note(load_template(dir / "t.json") == spec, "template case " + std::to_string(i));
    }

    // Manifest replay is byte-identical.
    const auto d = [&](const char* f) { return (dir / f).string(); };
    const auto bench = (kData / "templates/benchmark.json").string();
    bool replay_ok = cli({"synth", bench, "--scenes", "100", "--seed", "5", "-o", d("train")}) == 0 &&
                     cli({"synth", bench, "--scenes", "40", "--seed", "6", "-o", d("test")}) == 0 &&
                     cli({"train", "--annotations", d("train/annotations.json"), "-o", d("model.json")}) == 0 &&
                     cli({"rescore", "--model", d("model.json"), "--detections", d("test/detections.json"), "--jobs",
                          "3", "-o", d("out.json")}) == 0;
    std::size_t replayed = 0;
    if (replay_ok) {
        const std::vector<std::pair<fs::path, fs::path>> runs{
            {dir / "train/annotations.json", dir / "train/synth.manifest.json"},
            {dir / "model.json", dir / "model.json.manifest.json"},
            {dir / "out.json", dir / "out.json.manifest.json"}};
        for (const auto& [output, manifest] : runs) {
            const auto before = read_text_file(output);
            fs::remove(output);
            replay_ok = replay_ok && cli({"replay", manifest.string()}) == 0 && fs::exists(output) &&
                        read_text_file(output) == before;
            replayed += replay_ok;
        }
    }
    fs::remove_all(dir);
    const bool pass = failures == 0 && replay_ok;
    return {pass, fmt("%d io property cases, %d failures%s%s; %zu manifest replays byte-identical", cases, failures,
                      failures ? ", first: " : "", first_failure.c_str(), replayed)};
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_seconds;
        std::function<Outcome()> run;
    };
    const Criterion criteria[] = {
        {1, "worked posterior", 1, worked_posterior},
        {2, "Hoeffding sample bound", 1, hoeffding},
        {3, "curve properties", 1, curve_properties},
        {4, "oracle equivalence", 30, oracle},
        {5, "end-to-end detection improvement", 120, benchmark},
        {6, "invariance suite", 60, invariance},
        {7, "neighbor selection", 60, neighbor_selection},
        {8, "round trip and determinism", 60, round_trips},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("%s criterion %d (%s): %s [%.2f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    secs, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
