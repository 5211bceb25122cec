#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fnm/error.hpp"
#include "fnm/evaluation.hpp"
#include "fnm/inference.hpp"
#include "fnm/io.hpp"
#include "fnm/json_text.hpp"
#include "fnm/oracle.hpp"
#include "fnm/priors.hpp"
#include "fnm/relation_model.hpp"
#include "fnm/stability.hpp"
#include "fnm/synth.hpp"

namespace fnm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kManifestVersion = 1;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Raised for flag combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config = json::object();
    json inputs = json::object();
    json outputs = json::object();
    json model_version = nullptr;
    json seed = nullptr;
    json counters = json::object();
};

json config_snapshot(const CLI::App& sub) {
    json config = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty() || opt->get_lnames().front() == "help" || opt->get_lnames().front() == "manifest")
            continue;
        const auto& name = opt->get_lnames().front();
        const auto& results = opt->results();
        if (!results.empty())
            config[name] = results.size() == 1 ? json(results.front()) : json(results);
        else if (!opt->get_default_str().empty())
            config[name] = opt->get_default_str();
        else
            config[name] = nullptr;
    }
    for (const CLI::Option* opt : sub.get_options())
        if (opt->get_lnames().empty() && !opt->get_name().empty() && !opt->results().empty())
            config[opt->get_name()] = opt->results().front();
    return config;
}

void emit_manifest(const Manifest& m, const std::string& manifest_path, const std::string& output_path,
                   double seconds, std::ostream& err) {
    json doc = {{"manifest_version", kManifestVersion},
                {"tool", "fnm"},
                {"command", m.command},
                {"argv", m.argv},
                {"cwd", fs::current_path().string()},
                {"config", m.config},
                {"inputs", m.inputs},
                {"outputs", m.outputs},
                {"model_version", m.model_version},
                {"seed", m.seed},
                {"wall_clock_seconds", round_sig9(seconds)},
                {"counters", m.counters}};
    const auto text = canonical_json(doc);
    std::string path = manifest_path;
    if (path.empty() && !output_path.empty())
        path = output_path + ".manifest.json";
    if (path.empty())
        err << text;
    else
        write_text_file(path, text);
}

struct InferenceOptions {
    int iterations = 1;
    int max_neighbors = 0;
    std::string gating = "derivative";
    double derivative_threshold = 10.0;
    double delta = 0.1;
    double epsilon = 0.1;
    std::string neighbor_search = "exhaustive";
    double candidate_floor = 0.0;
    bool leave_one_out = false;
    int jobs = 1;

    void add_to(CLI::App* sub) {
        sub->add_option("--iterations", iterations, "Belief-propagation sweeps")->check(CLI::PositiveNumber);
        sub->add_option("--max-neighbors", max_neighbors, "Neighbors per query (1 or 2; 0 = model setting)")
            ->check(CLI::Range(0, 2));
        sub->add_option("--gating", gating, "off | derivative | sample-count | both");
        sub->add_option("--derivative-threshold", derivative_threshold, "Gate when d posterior/dh exceeds this");
        sub->add_option("--delta", delta, "Failure probability of the sample-count bound");
        sub->add_option("--epsilon", epsilon, "Tolerated posterior error of the sample-count bound");
        sub->add_option("--neighbor-search", neighbor_search, "exhaustive | greedy");
        sub->add_option("--candidate-floor", candidate_floor, "Minimum confidence of context candidates");
        sub->add_flag("--leave-one-out", leave_one_out, "Send neighbor messages computed without the query");
        sub->add_option("--jobs", jobs, "Worker threads over images")->check(CLI::PositiveNumber);
    }

    InferenceConfig make(int model_max_neighbors) const {
        InferenceConfig c;
        c.iterations = iterations;
        c.max_neighbors = max_neighbors == 0 ? model_max_neighbors : max_neighbors;
        c.gating.mode = gating_mode_from_string(gating);
        c.gating.derivative_threshold = derivative_threshold;
        c.gating.delta = delta;
        c.gating.epsilon = epsilon;
        c.neighbor_search = neighbor_search_from_string(neighbor_search);
        c.candidate_floor = candidate_floor;
        c.leave_one_out = leave_one_out;
        c.validate();
        return c;
    }
};

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty())
            continue;
        try {
            std::size_t used = 0;
            grid.push_back(std::stod(item, &used));
            if (used != item.size())
                throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("--grid: '" + item + "' is not a number");
        }
    }
    return grid;
}

// Splits detections into those whose category the model knows and the rest.
std::vector<std::size_t> unknown_category_records(std::span<const Detection> dets, const RelationModel& model,
                                                  std::ostream& err) {
    std::vector<std::size_t> unknown;
    for (std::size_t i = 0; i < dets.size(); ++i)
        if (!model.table.has_category(dets[i].category)) {
            unknown.push_back(i);
            err << "record " << i << " (detection " << dets[i].id << "): unknown category '" << dets[i].category
                << "'; confidence left unchanged\n";
        }
    return unknown;
}

class Runner {
public:
    void report_warnings(const AnnotationSet& set) {
        constexpr std::size_t kShown = 5;
        for (std::size_t i = 0; i < std::min(kShown, set.warnings.size()); ++i)
            err_ << "warning: " << set.warnings[i] << "\n";
        if (set.warnings.size() > kShown)
            err_ << "warning: " << set.warnings.size() - kShown << " more boxes extend outside their image\n";
    }

    Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    int run(const std::vector<std::string>& args) {
        CLI::App app{"Contextual rescoring of object detections with a few relevant neighbors", "fnm"};
        app.require_subcommand(1);
        app.option_defaults()->always_capture_default();

        std::string manifest_path;
        auto with_manifest = [&](CLI::App* sub) {
            sub->option_defaults()->always_capture_default();
            sub->add_option("--manifest", manifest_path, "Run manifest path (default: <output>.manifest.json)");
        };

        // train
        std::string annotations, output, smoothing_mode = "prior";
        int max_neighbors = 2, offset_bins = 16, scale_bins = 8;
        double smoothing = 1.0, offset_range = 4.0, scale_range = 2.0, initial_prior = kDefaultPrior;
        std::vector<std::string> scale_factors;
        auto* train = app.add_subcommand("train", "Count relation tables over annotated scenes");
        with_manifest(train);
        train->add_option("--annotations", annotations, "Annotation file")->required();
        train->add_option("--max-neighbors", max_neighbors, "Largest neighbor set (1 or 2)")->check(CLI::Range(1, 2));
        train->add_option("--smoothing", smoothing, "Pseudo-count alpha")->check(CLI::NonNegativeNumber);
        train->add_option("--smoothing-mode", smoothing_mode, "prior | laplace");
        train->add_option("--offset-bins", offset_bins, "Bins per offset axis")->check(CLI::Range(1, 255));
        train->add_option("--scale-bins", scale_bins, "Bins of the log scale ratio")->check(CLI::Range(1, 255));
        train->add_option("--offset-range", offset_range, "Offsets binned over [-r, r]")->check(CLI::PositiveNumber);
        train->add_option("--scale-range", scale_range, "Log scale ratios binned over [-r, r]")
            ->check(CLI::PositiveNumber);
        train->add_option("--scale-factor", scale_factors, "Per-category reference factor NAME=VALUE (default 1)");
        train->add_option("--prior", initial_prior, "Initial prior of every category");
        train->add_option("-o,--output", output, "Model file to write")->required();

        // fit-priors
        std::string model_path, detections_path, grid_text = "0.001,0.002,0.005,0.01,0.02,0.05", ap_mode = "eleven-point";
        double iou_threshold = 0.5;
        InferenceOptions infer;
        auto* fit = app.add_subcommand("fit-priors", "Choose per-category priors maximizing training AP");
        with_manifest(fit);
        fit->add_option("--model", model_path, "Model file")->envname("FNM_MODEL")->required();
        fit->add_option("--annotations", annotations, "Training annotations")->required();
        fit->add_option("--detections", detections_path, "Training detections")->required();
        fit->add_option("--grid", grid_text, "Comma-separated candidate priors");
        fit->add_option("--ap-mode", ap_mode, "eleven-point | all-points");
        fit->add_option("--iou", iou_threshold, "Match threshold")->check(CLI::Range(0.0, 1.0));
        infer.add_to(fit);
        fit->add_option("-o,--output", output, "Model file to write")->required();

        // rescore
        std::string categories_path, diagnostics_path;
        auto* rescore = app.add_subcommand("rescore", "Rescore detections with the context model");
        with_manifest(rescore);
        rescore->add_option("--model", model_path, "Model file")->envname("FNM_MODEL")->required();
        rescore->add_option("--detections", detections_path, "Detection file")->required();
        rescore->add_option("--categories", categories_path,
                            "Annotation file whose categories resolve bare result arrays");
        infer.add_to(rescore);
        rescore->add_option("--diagnostics", diagnostics_path, "Write chosen neighbors and gating flags here");
        rescore->add_option("-o,--output", output, "Rescored detection file")->required();

        // eval
        std::string csv_path;
        auto* eval = app.add_subcommand("eval", "Average precision of detections against annotations");
        with_manifest(eval);
        eval->add_option("--detections", detections_path, "Detection file")->required();
        eval->add_option("--annotations", annotations, "Annotation file")->required();
        eval->add_option("--ap-mode", ap_mode, "eleven-point | all-points");
        eval->add_option("--iou", iou_threshold, "Match threshold")->check(CLI::Range(0.0, 1.0));
        eval->add_option("--csv,-o", csv_path, "Also write the table as CSV");

        // curve
        double detector_prob = 0.8, prior = kDefaultPrior;
        std::size_t samples = 101;
        auto* curve = app.add_subcommand("curve", "Posterior and derivative as functions of the context value");
        with_manifest(curve);
        curve->add_option("--detector-prob", detector_prob, "Detector response a")->required()
            ->check(CLI::Range(0.0, 1.0));
        curve->add_option("--prior", prior, "Prior p")->required();
        curve->add_option("--samples", samples, "Points over h in [0, 1]")->check(CLI::Range(2, 10000000));
        curve->add_option("-o,--output", output, "CSV file (default: standard output)");

        // sample-size
        double epsilon = 0.1, epsilon_h_value = 0.0, delta = 0.1, context_prob = 0.01;
        auto* size = app.add_subcommand("sample-size", "Samples needed to measure a context value");
        with_manifest(size);
        auto* eps_opt = size->add_option("--epsilon", epsilon, "Tolerated posterior error");
        auto* eps_h_opt = size->add_option("--epsilon-h", epsilon_h_value, "Tolerated context error");
        eps_opt->excludes(eps_h_opt);
        size->add_option("--delta", delta, "Failure probability");
        auto* a_opt = size->add_option("--detector-prob", detector_prob, "Detector response a");
        auto* p_opt = size->add_option("--prior", prior, "Prior p");
        auto* h_opt = size->add_option("--context-prob", context_prob, "True context value h*");

        // synth
        std::string template_path, output_dir;
        std::uint64_t seed = 0;
        std::size_t scenes = 100;
        auto* synth = app.add_subcommand("synth", "Sample a synthetic dataset from a template");
        with_manifest(synth);
        synth->add_option("template", template_path, "Template file")->required();
        synth->add_option("--scenes", scenes, "Number of scenes")->check(CLI::PositiveNumber);
        auto* seed_opt = synth->add_option("--seed", seed, "Seed (default: the template's)");
        synth->add_option("-o,--output", output_dir, "Output directory")->required();

        // oracle-check
        double tolerance = 1e-6;
        auto* oracle = app.add_subcommand("oracle-check", "Compare inference with exact posteriors");
        with_manifest(oracle);
        oracle->add_option("template", template_path, "Clique template file")->required();
        oracle->add_option("--scenes", scenes, "Number of scenes")->check(CLI::PositiveNumber);
        auto* oracle_seed_opt = oracle->add_option("--seed", seed, "Seed (default: the template's)");
        oracle->add_option("--tolerance", tolerance, "Largest acceptable absolute error");

        // replay
        std::string replay_path;
        auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
        replay->add_option("manifest", replay_path, "Manifest file")->required();

        try {
            std::vector<std::string> reversed(args.rbegin(), args.rend());
            app.parse(reversed);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out_, err_);
            return code == 0 ? kOk : kUsage;
        }

        const auto start = std::chrono::steady_clock::now();
        Manifest m;
        m.argv = args;
        std::string manifest_output;
        int code = kOk;
        try {
            if (*replay)
                return run_replay(replay_path);

            if (*train) {
                m.command = "train";
                manifest_output = output;
                const auto set = load_annotations(annotations);
                report_warnings(set);
                BinningConfig binning;
                binning.offset_x = {-offset_range, offset_range};
                binning.offset_y = {-offset_range, offset_range};
                binning.offset_bins_x = binning.offset_bins_y = offset_bins;
                binning.scale = {-scale_range, scale_range};
                binning.scale_bins = scale_bins;
                for (const auto& sf : scale_factors) {
                    const auto eq = sf.find('=');
                    if (eq == std::string::npos)
                        throw UsageError("--scale-factor expects NAME=VALUE, got '" + sf + "'");
                    try {
                        binning.scale_factors[sf.substr(0, eq)] = std::stod(sf.substr(eq + 1));
                    } catch (const std::exception&) {
                        throw UsageError("--scale-factor: bad value in '" + sf + "'");
                    }
                }
                std::set<std::string> names;
                for (const auto& [id, name] : set.categories)
                    names.insert(name);
                binning.add_default_scale_factors(names);
                RelationModel model;
                model.table = fit_relations(set.scenes, binning, max_neighbors);
                model.table.set_smoothing(smoothing, smoothing_mode_from_string(smoothing_mode));
                model.priors = PriorTable(model.table.categories(), initial_prior);
                save_model(model, output);

                std::size_t objects = 0;
                for (const auto& s : set.scenes)
                    objects += s.objects.size();
                m.inputs["annotations"] = annotations;
                m.outputs["model"] = output;
                m.model_version = kModelSchemaVersion;
                m.counters = {{"scenes", set.scenes.size()},
                              {"objects", objects},
                              {"categories", model.table.categories().size()},
                              {"pair_cells", model.table.sorted_pairs().size()},
                              {"triple_cells", model.table.sorted_triples().size()},
                              {"annotation_warnings", set.warnings.size()}};
                out_ << "trained " << model.table.categories().size() << " categories on " << set.scenes.size()
                     << " scenes (" << objects << " objects) -> " << output << "\n";
            } else if (*fit) {
                m.command = "fit-priors";
                manifest_output = output;
                const auto grid = parse_grid(grid_text);
                if (grid.empty())
                    throw UsageError("--grid is empty");
                auto model = load_model(model_path);
                const auto set = load_annotations(annotations);
                const auto dets = load_detections(detections_path, &set.categories);
                std::vector<Detection> known;
                for (const auto& d : dets)
                    if (model.table.has_category(d.category))
                        known.push_back(d);
                const auto config = infer.make(model.table.max_neighbors());
                const auto gt = set.ground_truth();
                const auto result = fit_priors(model, known, gt, config, grid, ap_mode_from_string(ap_mode),
                                               iou_threshold, infer.jobs);
                model.priors = result.priors;
                save_model(model, output);
                for (const auto& [c, p] : model.priors.values())
                    out_ << c << " " << num(p) << "\n";
                m.inputs = {{"model", model_path}, {"annotations", annotations}, {"detections", detections_path}};
                m.outputs["model"] = output;
                m.model_version = kModelSchemaVersion;
                m.counters = {{"detections", dets.size()},
                              {"skipped_unknown_category", dets.size() - known.size()},
                              {"evaluations", result.trace.size()}};
            } else if (*rescore) {
                m.command = "rescore";
                manifest_output = output;
                const auto model = load_model(model_path);
                CategoryMap categories;
                if (!categories_path.empty())
                    categories = load_annotations(categories_path).categories;
                auto dets = load_detections(detections_path, categories_path.empty() ? nullptr : &categories);
                const auto unknown = unknown_category_records(dets, model, err_);
                std::vector<bool> skip(dets.size(), false);
                for (auto i : unknown)
                    skip[i] = true;
                std::vector<Detection> known;
                std::vector<std::size_t> known_index;
                for (std::size_t i = 0; i < dets.size(); ++i)
                    if (!skip[i]) {
                        known.push_back(dets[i]);
                        known_index.push_back(i);
                    }
                const auto config = infer.make(model.table.max_neighbors());
                const RelationContext context(model);
                const auto result = rescore_dataset(known, context, config, infer.jobs);
                for (std::size_t k = 0; k < known.size(); ++k)
                    dets[known_index[k]].confidence = result.detections[k].confidence;
                save_detections(dets, output);

                int gated = 0, warnings = 0;
                for (const auto& r : result.per_image) {
                    gated += static_cast<int>(std::count(r.state.gated.begin(), r.state.gated.end(), true));
                    warnings += r.state.sparsity_warnings;
                }
                if (!diagnostics_path.empty()) {
                    json rows = json::array();
                    std::map<ImageId, std::size_t> image_slot;
                    for (std::size_t g = 0; g < result.image_order.size(); ++g)
                        image_slot[result.image_order[g]] = g;
                    std::vector<std::size_t> seen(result.per_image.size(), 0);
                    for (const auto& d : known) {
                        const auto g = image_slot.at(d.image_id);
                        const auto& state = result.per_image[g].state;
                        const auto k = seen[g]++;
                        std::vector<DetectionId> chosen;
                        // Indices in the state refer to the image's detection list, which
                        // follows input order.
                        for (auto j : state.chosen_neighbors[k])
                            chosen.push_back(state.variables[j].detection_ref);
                        rows.push_back({{"id", d.id},
                                        {"image_id", d.image_id},
                                        {"neighbors", chosen},
                                        {"gated", static_cast<bool>(state.gated[k])},
                                        {"detector_prob", round_sig9(state.detector_probs[k])},
                                        {"belief", round_sig9(state.variables[k].belief_true)}});
                    }
                    write_text_file(diagnostics_path, canonical_json(json{{"detections", rows}}));
                    m.outputs["diagnostics"] = diagnostics_path;
                }
                m.inputs = {{"model", model_path}, {"detections", detections_path}};
                if (!categories_path.empty())
                    m.inputs["categories"] = categories_path;
                m.outputs["detections"] = output;
                m.model_version = kModelSchemaVersion;
                m.counters = {{"detections", dets.size()},
                              {"images", result.image_order.size()},
                              {"skipped_unknown_category", unknown.size()},
                              {"gated_queries", gated},
                              {"sparsity_warnings", warnings}};
                if (!unknown.empty())
                    err_ << unknown.size() << " of " << dets.size()
                         << " records had categories unknown to the model and kept their confidence\n";
                out_ << "rescored " << known.size() << " detections in " << result.image_order.size()
                     << " images -> " << output << "\n";
            } else if (*eval) {
                m.command = "eval";
                manifest_output = csv_path;
                const auto set = load_annotations(annotations);
                const auto dets = load_detections(detections_path, &set.categories);
                const auto report = evaluate(dets, set.ground_truth(), ap_mode_from_string(ap_mode), iou_threshold);
                std::size_t width = 8;
                for (const auto& c : report.per_category)
                    width = std::max(width, c.category.size());
                for (const auto& c : report.per_category) {
                    out_ << c.category << std::string(width - c.category.size() + 2, ' ') << num(c.ap)
                         << "  (gt " << c.ground_truth << ", det " << c.detections << ")\n";
                }
                out_ << "mAP" << std::string(width - 1, ' ') << num(report.map) << "\n";
                if (!csv_path.empty()) {
                    std::string csv = "category,ap,ground_truth,detections\n";
                    for (const auto& c : report.per_category)
                        csv += c.category + "," + num(c.ap) + "," + std::to_string(c.ground_truth) + "," +
                               std::to_string(c.detections) + "\n";
                    csv += "mAP," + num(report.map) + ",,\n";
                    write_text_file(csv_path, csv);
                    m.outputs["csv"] = csv_path;
                }
                m.inputs = {{"detections", detections_path}, {"annotations", annotations}};
                m.counters = {{"detections", dets.size()},
                              {"categories", report.per_category.size()},
                              {"map", round_sig9(report.map)}};
            } else if (*curve) {
                m.command = "curve";
                manifest_output = output;
                const auto points = sample_curve(CurveParams{detector_prob, prior}, samples);
                std::string csv = "h,posterior,derivative\n";
                for (const auto& p : points)
                    csv += num(p.h) + "," + num(p.posterior) + "," + num(p.derivative) + "\n";
                if (output.empty()) {
                    out_ << csv;
                } else {
                    write_text_file(output, csv);
                    m.outputs["csv"] = output;
                }
                m.counters = {{"points", points.size()}};
            } else if (*size) {
                m.command = "sample-size";
                double eh = epsilon_h_value;
                if (eps_h_opt->count() == 0) {
                    if (a_opt->count() == 0 || p_opt->count() == 0 || h_opt->count() == 0)
                        throw UsageError(
                            "sample-size needs --epsilon-h, or --epsilon with --detector-prob, --prior and "
                            "--context-prob");
                    eh = epsilon_h(CurveParams{detector_prob, prior}, context_prob, epsilon);
                    out_ << "epsilon_h " << num(eh) << "\n";
                } else if (a_opt->count() || p_opt->count() || h_opt->count()) {
                    throw UsageError("--epsilon-h does not combine with curve parameters");
                }
                const auto m_samples = required_samples(eh, delta);
                out_ << "samples " << m_samples << "\n";
                m.counters = {{"epsilon_h", round_sig9(eh)}, {"samples", m_samples}};
            } else if (*synth) {
                m.command = "synth";
                const auto tmpl = load_template(template_path);
                const std::uint64_t s = seed_opt->count()
                                            ? seed
                                            : std::visit([](const auto& t) { return t.seed; }, tmpl);
                const auto data = sample_dataset(tmpl, scenes, s);
                const fs::path dir(output_dir);
                fs::create_directories(dir);
                save_annotations(make_annotations(data), dir / "annotations.json");
                const auto dets = data.detections();
                save_detections(dets, dir / "detections.json");
                manifest_output = (dir / "synth").string();
                m.inputs["template"] = template_path;
                m.outputs = {{"annotations", (dir / "annotations.json").string()},
                             {"detections", (dir / "detections.json").string()}};
                m.seed = s;
                std::size_t objects = 0;
                for (const auto& sc : data.scenes)
                    objects += sc.objects.size();
                m.counters = {{"scenes", data.scenes.size()}, {"objects", objects}, {"detections", dets.size()}};
                out_ << "sampled " << data.scenes.size() << " scenes, " << objects << " objects, " << dets.size()
                     << " detections -> " << output_dir << "\n";
            } else if (*oracle) {
                m.command = "oracle-check";
                const auto tmpl = load_template(template_path);
                const auto* clique = std::get_if<CliqueTemplate>(&tmpl);
                if (!clique)
                    throw InvalidInput("oracle-check needs a clique template");
                const std::uint64_t s = oracle_seed_opt->count() ? seed : clique->seed;
                const auto data = sample_dataset(*clique, scenes, s);
                const auto report = oracle_check(data, oracle_inference_config());
                out_ << "scenes " << report.scenes << "\nvariables " << report.variables << "\nmax_abs_error "
                     << num(report.max_abs_error) << "\nmean_abs_error " << num(report.mean_abs_error)
                     << "\nmedian_abs_error " << num(report.median_abs_error) << "\np95_abs_error "
                     << num(report.p95_abs_error) << "\n";
                m.inputs["template"] = template_path;
                m.seed = s;
                m.counters = {{"scenes", report.scenes},
                              {"variables", report.variables},
                              {"max_abs_error", round_sig9(report.max_abs_error)},
                              {"mean_abs_error", round_sig9(report.mean_abs_error)}};
                if (report.max_abs_error > tolerance) {
                    err_ << "max error " << num(report.max_abs_error) << " exceeds tolerance " << num(tolerance)
                         << "\n";
                    code = kTolerance;
                }
            }
        } catch (const UsageError& e) {
            err_ << "usage error: " << e.what() << "\n";
            return kUsage;
        } catch (const Error& e) {
            err_ << "error: " << e.what() << "\n";
            return kData;
        } catch (const std::exception& e) {
            err_ << "error: " << e.what() << "\n";
            return kData;
        }

        for (CLI::App* sub : app.get_subcommands())
            m.config = config_snapshot(*sub);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        try {
            emit_manifest(m, manifest_path, manifest_output, seconds, err_);
        } catch (const std::exception& e) {
            err_ << "error: cannot write manifest: " << e.what() << "\n";
            return kData;
        }
        return code;
    }

private:
    int run_replay(const std::string& path) {
        const json doc = parse_json(read_text_file(path), "manifest");
        if (!doc.is_object() || !doc.contains("argv") || !doc["argv"].is_array())
            throw ParseError("manifest: missing argv");
        const auto argv = doc["argv"].get<std::vector<std::string>>();
        if (!argv.empty() && argv.front() == "replay")
            throw ParseError("manifest: refusing to replay a replay");
        const auto previous = fs::current_path();
        if (doc.contains("cwd") && doc["cwd"].is_string())
            fs::current_path(doc["cwd"].get<std::string>());
        int code = kOk;
        try {
            code = Runner(out_, err_).run(argv);
        } catch (...) {
            fs::current_path(previous);
            throw;
        }
        fs::current_path(previous);
        return code;
    }

    std::ostream& out_;
    std::ostream& err_;
};

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    return Runner(out, err).run(args);
}

} // namespace fnm::cli
