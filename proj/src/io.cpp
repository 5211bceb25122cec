#include "fnm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fnm/error.hpp"
#include "fnm/json_text.hpp"

namespace fnm {

using nlohmann::json;

double round_sig9(double value) {
    if (!std::isfinite(value) || value == 0.0)
        return value;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return std::strtod(buf, nullptr);
}

namespace {

bool is_row(const json& v) { return v.is_array() || v.is_object(); }

} // namespace

std::string canonical_json(const json& value) {
    if (!value.is_object())
        return value.dump() + "\n";
    std::string out = "{\n";
    bool first = true;
    for (auto it = value.begin(); it != value.end(); ++it) {
        if (!first)
            out += ",\n";
        first = false;
        out += " " + json(it.key()).dump() + ": ";
        const auto& v = it.value();
        if (v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), is_row)) {
            out += "[\n";
            for (std::size_t i = 0; i < v.size(); ++i)
                out += "  " + v[i].dump() + (i + 1 < v.size() ? ",\n" : "\n");
            out += " ]";
        } else {
            out += v.dump();
        }
    }
    out += "\n}\n";
    return out;
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t pos = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
        const auto line_start = text.rfind('\n', pos == 0 ? 0 : pos - 1);
        const auto column = pos - (line_start == std::string::npos ? 0 : line_start + 1) + 1;
        throw ParseError(what + ": syntax error at line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + e.what());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InvalidInput("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw InvalidInput("cannot write '" + path.string() + "'");
        out << text;
        if (!out)
            throw InvalidInput("write failed for '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

namespace {

// Field access with the offending record named in errors.
class Record {
public:
    Record(const json& value, std::string context) : value_(value), context_(std::move(context)) {
        if (!value_.is_object())
            fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& message) const { throw ParseError(context_ + ": " + message); }

    bool has(const char* key) const { return value_.contains(key); }

    const json& at(const char* key) const {
        auto it = value_.find(key);
        if (it == value_.end())
            fail(std::string("missing field '") + key + "'");
        return *it;
    }

    double number(const char* key) const {
        const auto& v = at(key);
        if (!v.is_number())
            fail(std::string("field '") + key + "' must be a number");
        return v.get<double>();
    }

    double number_or(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::int64_t integer(const char* key) const {
        const auto& v = at(key);
        if (!v.is_number_integer())
            fail(std::string("field '") + key + "' must be an integer");
        return v.get<std::int64_t>();
    }

    std::int64_t integer_or(const char* key, std::int64_t fallback) const { return has(key) ? integer(key) : fallback; }

    std::string string(const char* key) const {
        const auto& v = at(key);
        if (!v.is_string())
            fail(std::string("field '") + key + "' must be a string");
        return v.get<std::string>();
    }

    std::string string_or(const char* key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }

    std::vector<double> numbers(const char* key, std::size_t count) const {
        const auto& v = at(key);
        if (!v.is_array() || v.size() != count)
            fail(std::string("field '") + key + "' must be an array of " + std::to_string(count) + " numbers");
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number())
                fail(std::string("field '") + key + "' must hold numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }

    // Rejects keys outside `allowed`.
    void only(std::initializer_list<const char*> allowed) const {
        for (auto it = value_.begin(); it != value_.end(); ++it)
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
                fail("unknown field '" + it.key() + "'");
    }

    const json& value() const { return value_; }
    const std::string& context() const { return context_; }

private:
    const json& value_;
    std::string context_;
};

BoxGeometry box_from_bbox(const Record& r, const char* key) {
    const auto b = r.numbers(key, 4);
    if (!(b[2] > 0.0 && b[3] > 0.0) || !std::isfinite(b[0]) || !std::isfinite(b[1]))
        r.fail("bbox width and height must be positive");
    return BoxGeometry{{b[0] + b[2] / 2.0, b[1] + b[3] / 2.0}, b[3], b[2]};
}

json bbox_of(const BoxGeometry& box) {
    return json::array({round_sig9(box.center.x - box.width / 2.0), round_sig9(box.center.y - box.height / 2.0),
                        round_sig9(box.width), round_sig9(box.height)});
}

CategoryMap parse_categories(const json& list, const std::string& what) {
    if (!list.is_array())
        throw ParseError(what + ": 'categories' must be an array");
    CategoryMap out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        Record r(list[i], what + " category " + std::to_string(i));
        const auto id = r.integer("id");
        if (!out.emplace(id, r.string("name")).second)
            r.fail("duplicate category id " + std::to_string(id));
    }
    return out;
}

json categories_json(const CategoryMap& map) {
    json list = json::array();
    for (const auto& [id, name] : map)
        list.push_back({{"id", id}, {"name", name}});
    return list;
}

CategoryMap number_categories(std::set<std::string> names) {
    CategoryMap map;
    std::int64_t id = 1;
    for (const auto& n : names)
        map.emplace(id++, n);
    return map;
}

} // namespace

std::vector<Detection> parse_detections(const std::string& text, const CategoryMap* categories) {
    const json doc = parse_json(text, "detections");
    const json* records = &doc;
    CategoryMap own;
    if (doc.is_object()) {
        Record top(doc, "detections file");
        if (top.has("version") && top.integer("version") != kDetectionSchemaVersion)
            throw VersionMismatch(kDetectionSchemaVersion, static_cast<int>(top.integer("version")));
        own = parse_categories(top.at("categories"), "detections file");
        categories = &own;
        records = &top.at("detections");
    }
    if (!records->is_array())
        throw ParseError("detections: expected an array of records");

    std::vector<Detection> out;
    out.reserve(records->size());
    std::set<DetectionId> ids;
    for (std::size_t i = 0; i < records->size(); ++i) {
        Record r((*records)[i], "detection record " + std::to_string(i));
        Detection d;
        d.id = r.integer_or("id", static_cast<std::int64_t>(i));
        d.image_id = r.integer("image_id");
        if (r.has("category")) {
            d.category = r.string("category");
        } else {
            const auto cid = r.integer("category_id");
            if (!categories)
                r.fail("category_id " + std::to_string(cid) + " needs a category map");
            auto it = categories->find(cid);
            if (it == categories->end())
                r.fail("category_id " + std::to_string(cid) + " is not in the category map");
            d.category = it->second;
        }
        d.box = box_from_bbox(r, "bbox");
        d.confidence = r.number("score");
        if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
            r.fail("score " + std::to_string(d.confidence) + " outside [0, 1]");
        if (!ids.insert(d.id).second)
            r.fail("duplicate id " + std::to_string(d.id));
        out.push_back(std::move(d));
    }
    return out;
}

std::string format_detections(std::span<const Detection> detections) {
    std::set<std::string> names;
    for (const auto& d : detections)
        names.insert(d.category);
    const auto map = number_categories(names);
    std::map<std::string, std::int64_t> id_of;
    for (const auto& [id, name] : map)
        id_of[name] = id;

    json records = json::array();
    for (const auto& d : detections)
        records.push_back({{"id", d.id},
                           {"image_id", d.image_id},
                           {"category_id", id_of.at(d.category)},
                           {"bbox", bbox_of(d.box)},
                           {"score", round_sig9(d.confidence)}});
    json doc = {{"version", kDetectionSchemaVersion}, {"categories", categories_json(map)}, {"detections", records}};
    return canonical_json(doc);
}

std::vector<Detection> load_detections(const std::filesystem::path& path, const CategoryMap* categories) {
    try {
        return parse_detections(read_text_file(path), categories);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_detections(std::span<const Detection> detections, const std::filesystem::path& path) {
    write_text_file(path, format_detections(detections));
}

std::vector<GroundTruthBox> AnnotationSet::ground_truth() const {
    std::vector<GroundTruthBox> out;
    for (const auto& s : scenes)
        for (const auto& o : s.objects)
            out.push_back(GroundTruthBox{s.image_id, o.category, o.box});
    return out;
}

AnnotationSet parse_annotations(const std::string& text) {
    const json doc = parse_json(text, "annotations");
    Record top(doc, "annotations file");
    AnnotationSet set;
    set.categories = parse_categories(top.at("categories"), "annotations file");

    const auto& images = top.at("images");
    if (!images.is_array())
        throw ParseError("annotations file: 'images' must be an array");
    std::map<ImageId, std::size_t> slot;
    for (std::size_t i = 0; i < images.size(); ++i) {
        Record r(images[i], "image " + std::to_string(i));
        ImageInfo info{r.integer("id"), r.number("width"), r.number("height")};
        if (!(info.width > 0.0 && info.height > 0.0))
            r.fail("image dimensions must be positive");
        if (!slot.emplace(info.id, set.images.size()).second)
            r.fail("duplicate image id " + std::to_string(info.id));
        set.images.push_back(info);
        set.scenes.push_back(AnnotatedScene{info.id, {}});
    }

    const auto& annotations = top.at("annotations");
    if (!annotations.is_array())
        throw ParseError("annotations file: 'annotations' must be an array");
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        Record r(annotations[i], "annotation " + std::to_string(i));
        const auto image = r.integer("image_id");
        auto s = slot.find(image);
        if (s == slot.end())
            r.fail("image_id " + std::to_string(image) + " does not match any image");
        const auto cid = r.integer("category_id");
        auto c = set.categories.find(cid);
        if (c == set.categories.end())
            r.fail("category_id " + std::to_string(cid) + " does not match any category");
        const auto box = box_from_bbox(r, "bbox");
        const auto& info = set.images[s->second];
        const double x0 = box.center.x - box.width / 2, x1 = box.center.x + box.width / 2;
        const double y0 = box.center.y - box.height / 2, y1 = box.center.y + box.height / 2;
        if (x0 < 0.0 || y0 < 0.0 || x1 > info.width || y1 > info.height)
            set.warnings.push_back(r.context() + ": bbox extends outside image " + std::to_string(image));
        set.scenes[s->second].objects.push_back(GroundTruthObject{c->second, box});
    }
    return set;
}

std::string format_annotations(const AnnotationSet& set) {
    std::map<std::string, std::int64_t> id_of;
    for (const auto& [id, name] : set.categories)
        id_of.emplace(name, id);
    json images = json::array();
    for (const auto& im : set.images)
        images.push_back({{"id", im.id}, {"width", round_sig9(im.width)}, {"height", round_sig9(im.height)}});
    json annotations = json::array();
    std::int64_t next = 1;
    for (const auto& s : set.scenes)
        for (const auto& o : s.objects) {
            auto it = id_of.find(o.category);
            if (it == id_of.end())
                throw UnknownCategory(o.category);
            annotations.push_back(
                {{"id", next++}, {"image_id", s.image_id}, {"category_id", it->second}, {"bbox", bbox_of(o.box)}});
        }
    json doc = {{"images", images}, {"categories", categories_json(set.categories)}, {"annotations", annotations}};
    return canonical_json(doc);
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
    try {
        return parse_annotations(read_text_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_annotations(const AnnotationSet& annotations, const std::filesystem::path& path) {
    write_text_file(path, format_annotations(annotations));
}

AnnotationSet make_annotations(const SyntheticDataset& data) {
    AnnotationSet set;
    std::set<std::string> names(data.categories.begin(), data.categories.end());
    for (const auto& s : data.scenes)
        for (const auto& o : s.objects)
            names.insert(o.category);
    set.categories = number_categories(names);
    for (const auto& s : data.scenes) {
        set.images.push_back(ImageInfo{s.image_id, data.image_width, data.image_height});
        set.scenes.push_back(AnnotatedScene{s.image_id, s.objects});
    }
    return set;
}

// Models ---------------------------------------------------------------------

namespace {

json range_json(const AxisRange& r) { return json::array({round_sig9(r.min), round_sig9(r.max)}); }

AxisRange range_from(const Record& r, const char* key) {
    const auto v = r.numbers(key, 2);
    return AxisRange{v[0], v[1]};
}

void push_cell(json& row, const RelationTable& table, std::uint64_t cell) {
    const auto bin = table.cell_bin(cell);
    row.push_back(table.cell_category(cell));
    row.push_back(bin.x);
    row.push_back(bin.y);
    row.push_back(bin.scale);
}

std::uint64_t read_cell(const RelationTable& table, const json& row, std::size_t at, const std::string& context) {
    const auto category = row[at].get<std::int64_t>();
    if (category < 0 || static_cast<std::size_t>(category) >= table.categories().size())
        throw ParseError(context + ": category index out of range");
    const BinIndex bin{row[at + 1].get<int>(), row[at + 2].get<int>(), row[at + 3].get<int>()};
    const auto& b = table.binning();
    if (bin.x < 0 || bin.x >= b.offset_bins_x || bin.y < 0 || bin.y >= b.offset_bins_y || bin.scale < 0 ||
        bin.scale >= b.scale_bins)
        throw ParseError(context + ": bin index out of range");
    return table.cell(static_cast<std::uint32_t>(category), bin);
}

std::vector<std::int64_t> integer_row(const json& row, std::size_t size, const std::string& context) {
    if (!row.is_array() || row.size() != size)
        throw ParseError(context + ": expected " + std::to_string(size) + " integers");
    std::vector<std::int64_t> out;
    for (const auto& v : row) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
            throw ParseError(context + ": expected non-negative integers");
        out.push_back(v.get<std::int64_t>());
    }
    return out;
}

} // namespace

std::string format_model(const RelationModel& model) {
    const auto& t = model.table;
    const auto& b = t.binning();
    json factors = json::object();
    for (const auto& [c, f] : b.scale_factors)
        factors[c] = round_sig9(f);
    json binning = {{"offset_x", range_json(b.offset_x)},
                    {"offset_y", range_json(b.offset_y)},
                    {"offset_bins", json::array({b.offset_bins_x, b.offset_bins_y})},
                    {"scale", range_json(b.scale)},
                    {"scale_bins", b.scale_bins},
                    {"scale_factors", factors}};
    json priors = json::object();
    for (const auto& [c, p] : model.priors.values())
        priors[c] = round_sig9(p);

    json pairs = json::array();
    for (const auto& e : t.sorted_pairs()) {
        json row = json::array({e.reference});
        push_cell(row, t, e.query_cell);
        row.push_back(e.count);
        pairs.push_back(std::move(row));
    }
    json triples = json::array();
    for (const auto& [k, count] : t.sorted_triples()) {
        json row = json::array({k.reference});
        push_cell(row, t, k.other_cell);
        push_cell(row, t, k.query_cell);
        row.push_back(count);
        triples.push_back(std::move(row));
    }
    json doc = {{"format", "fnm-model"},
                {"schema_version", kModelSchemaVersion},
                {"binning", binning},
                {"categories", t.categories()},
                {"max_neighbors", t.max_neighbors()},
                {"smoothing", {{"alpha", round_sig9(t.smoothing())}, {"mode", to_string(t.smoothing_mode())}}},
                {"priors", priors},
                {"reference_totals", t.reference_totals()},
                {"pairs", pairs},
                {"triples", triples}};
    return canonical_json(doc);
}

RelationModel parse_model(const std::string& text) {
    const json doc = parse_json(text, "model");
    Record top(doc, "model");
    if (top.string_or("format", "fnm-model") != "fnm-model")
        top.fail("not a model file");
    const auto version = top.integer("schema_version");
    if (version != kModelSchemaVersion)
        throw VersionMismatch(kModelSchemaVersion, static_cast<int>(version));

    Record bin(top.at("binning"), "model binning");
    BinningConfig b;
    b.offset_x = range_from(bin, "offset_x");
    b.offset_y = range_from(bin, "offset_y");
    const auto bins = bin.numbers("offset_bins", 2);
    b.offset_bins_x = static_cast<int>(bins[0]);
    b.offset_bins_y = static_cast<int>(bins[1]);
    b.scale = range_from(bin, "scale");
    b.scale_bins = static_cast<int>(bin.integer("scale_bins"));
    const auto& factors = bin.at("scale_factors");
    if (!factors.is_object())
        bin.fail("'scale_factors' must be an object");
    for (auto it = factors.begin(); it != factors.end(); ++it) {
        if (!it.value().is_number())
            bin.fail("scale factor of '" + it.key() + "' must be a number");
        b.scale_factors[it.key()] = it.value().get<double>();
    }

    const auto& cats = top.at("categories");
    if (!cats.is_array() || !std::all_of(cats.begin(), cats.end(), [](const json& c) { return c.is_string(); }))
        top.fail("'categories' must be an array of strings");
    RelationModel model;
    try {
        model.table = RelationTable(b, cats.get<std::vector<std::string>>(), static_cast<int>(top.integer("max_neighbors")));
    } catch (const InvalidInput& e) {
        top.fail(e.what());
    }
    auto& t = model.table;

    Record smoothing(top.at("smoothing"), "model smoothing");
    t.set_smoothing(smoothing.number("alpha"), smoothing_mode_from_string(smoothing.string("mode")));

    const auto& priors = top.at("priors");
    if (!priors.is_object())
        top.fail("'priors' must be an object");
    for (auto it = priors.begin(); it != priors.end(); ++it) {
        if (!it.value().is_number())
            top.fail("prior of '" + it.key() + "' must be a number");
        try {
            model.priors.set(it.key(), it.value().get<double>());
        } catch (const InvalidInput& e) {
            top.fail(e.what());
        }
    }

    const auto totals = integer_row(top.at("reference_totals"), t.categories().size(), "model reference_totals");
    for (std::uint32_t r = 0; r < totals.size(); ++r)
        t.add_reference(r, static_cast<std::uint64_t>(totals[r]));

    const auto& pairs = top.at("pairs");
    if (!pairs.is_array())
        top.fail("'pairs' must be an array");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::string ctx = "model pair " + std::to_string(i);
        const auto row = integer_row(pairs[i], 6, ctx);
        if (static_cast<std::size_t>(row[0]) >= t.categories().size())
            throw ParseError(ctx + ": reference index out of range");
        t.add_pair(static_cast<std::uint32_t>(row[0]), read_cell(t, pairs[i], 1, ctx), static_cast<std::uint64_t>(row[5]));
    }
    const auto& triples = top.at("triples");
    if (!triples.is_array())
        top.fail("'triples' must be an array");
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const std::string ctx = "model triple " + std::to_string(i);
        const auto row = integer_row(triples[i], 10, ctx);
        if (static_cast<std::size_t>(row[0]) >= t.categories().size())
            throw ParseError(ctx + ": reference index out of range");
        t.add_triple(TripleKey{static_cast<std::uint32_t>(row[0]), read_cell(t, triples[i], 1, ctx),
                               read_cell(t, triples[i], 5, ctx)},
                     static_cast<std::uint64_t>(row[9]));
    }
    return model;
}

RelationModel load_model(const std::filesystem::path& path) {
    try {
        return parse_model(read_text_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_model(const RelationModel& model, const std::filesystem::path& path) {
    write_text_file(path, format_model(model));
}

// Templates ------------------------------------------------------------------

namespace {

json beta_json(const BetaParams& b) { return {{"alpha", round_sig9(b.alpha)}, {"beta", round_sig9(b.beta)}}; }

BetaParams beta_from(const Record& parent, const char* key, BetaParams fallback) {
    if (!parent.has(key))
        return fallback;
    Record r(parent.at(key), parent.context() + "." + key);
    r.only({"alpha", "beta"});
    return BetaParams{r.number("alpha"), r.number("beta")};
}

SceneTemplate geometric_from(const Record& top) {
    top.only({"kind", "name", "seed", "image", "categories", "relations", "detector"});
    SceneTemplate t;
    t.name = top.string_or("name", "");
    t.seed = static_cast<std::uint64_t>(top.integer_or("seed", 1));
    if (top.has("image")) {
        Record im(top.at("image"), "template image");
        im.only({"width", "height"});
        t.image_width = im.number("width");
        t.image_height = im.number("height");
    }
    const auto& cats = top.at("categories");
    if (!cats.is_array())
        top.fail("'categories' must be an array");
    for (std::size_t i = 0; i < cats.size(); ++i) {
        Record r(cats[i], "template category " + std::to_string(i));
        r.only({"name", "prior", "height_mean", "height_spread", "aspect", "scale_factor"});
        CategorySpec c;
        c.name = r.string("name");
        c.prior = r.number_or("prior", c.prior);
        c.height_mean = r.number_or("height_mean", c.height_mean);
        c.height_spread = r.number_or("height_spread", c.height_spread);
        c.aspect = r.number_or("aspect", c.aspect);
        c.scale_factor = r.number_or("scale_factor", c.scale_factor);
        t.categories.push_back(c);
    }
    if (top.has("relations")) {
        const auto& rels = top.at("relations");
        if (!rels.is_array())
            top.fail("'relations' must be an array");
        for (std::size_t i = 0; i < rels.size(); ++i) {
            Record r(rels[i], "template relation " + std::to_string(i));
            r.only({"parent", "child", "offset", "offset_spread", "log_scale", "log_scale_spread", "probability"});
            RelationSpec s;
            s.parent = r.string("parent");
            s.child = r.string("child");
            const auto off = r.numbers("offset", 2);
            s.offset = Vec2{off[0], off[1]};
            s.offset_spread = r.number_or("offset_spread", s.offset_spread);
            s.log_scale = r.number_or("log_scale", s.log_scale);
            s.log_scale_spread = r.number_or("log_scale_spread", s.log_scale_spread);
            s.probability = r.number_or("probability", s.probability);
            t.relations.push_back(s);
        }
    }
    if (top.has("detector")) {
        Record d(top.at("detector"), "template detector");
        d.only({"present", "absent", "miss_rate", "false_positives_per_image", "near_miss_rate", "jitter"});
        auto& n = t.detector;
        n.present = beta_from(d, "present", n.present);
        n.absent = beta_from(d, "absent", n.absent);
        n.miss_rate = d.number_or("miss_rate", n.miss_rate);
        n.false_positives_per_image = d.number_or("false_positives_per_image", n.false_positives_per_image);
        n.near_miss_rate = d.number_or("near_miss_rate", n.near_miss_rate);
        n.jitter = d.number_or("jitter", n.jitter);
    }
    return t;
}

CliqueTemplate clique_from(const Record& top) {
    top.only({"kind", "name", "seed", "min_variables", "max_variables", "marginal_min", "marginal_max", "coupling",
              "concentration", "pair_correlation"});
    CliqueTemplate t;
    t.name = top.string_or("name", "");
    t.seed = static_cast<std::uint64_t>(top.integer_or("seed", 1));
    t.min_variables = static_cast<int>(top.integer_or("min_variables", t.min_variables));
    t.max_variables = static_cast<int>(top.integer_or("max_variables", t.max_variables));
    t.marginal_min = top.number_or("marginal_min", t.marginal_min);
    t.marginal_max = top.number_or("marginal_max", t.marginal_max);
    t.coupling = top.number_or("coupling", t.coupling);
    t.concentration = top.number_or("concentration", t.concentration);
    t.pair_correlation = top.number_or("pair_correlation", t.pair_correlation);
    return t;
}

} // namespace

TemplateSpec parse_template(const std::string& text) {
    const json doc = parse_json(text, "template");
    Record top(doc, "template");
    const auto kind = top.string_or("kind", "geometric");
    TemplateSpec spec;
    try {
        if (kind == "geometric") {
            auto t = geometric_from(top);
            t.validate();
            spec = std::move(t);
        } else if (kind == "clique") {
            auto t = clique_from(top);
            t.validate();
            spec = std::move(t);
        } else {
            top.fail("unknown template kind '" + kind + "'");
        }
    } catch (const InvalidInput& e) {
        throw ParseError(std::string("template: ") + e.what());
    }
    return spec;
}

std::string format_template(const TemplateSpec& spec) {
    json doc;
    if (const auto* t = std::get_if<SceneTemplate>(&spec)) {
        json cats = json::array();
        for (const auto& c : t->categories)
            cats.push_back({{"name", c.name},
                            {"prior", round_sig9(c.prior)},
                            {"height_mean", round_sig9(c.height_mean)},
                            {"height_spread", round_sig9(c.height_spread)},
                            {"aspect", round_sig9(c.aspect)},
                            {"scale_factor", round_sig9(c.scale_factor)}});
        json rels = json::array();
        for (const auto& r : t->relations)
            rels.push_back({{"parent", r.parent},
                            {"child", r.child},
                            {"offset", json::array({round_sig9(r.offset.x), round_sig9(r.offset.y)})},
                            {"offset_spread", round_sig9(r.offset_spread)},
                            {"log_scale", round_sig9(r.log_scale)},
                            {"log_scale_spread", round_sig9(r.log_scale_spread)},
                            {"probability", round_sig9(r.probability)}});
        const auto& n = t->detector;
        doc = {{"kind", "geometric"},
               {"name", t->name},
               {"seed", t->seed},
               {"image", {{"width", round_sig9(t->image_width)}, {"height", round_sig9(t->image_height)}}},
               {"categories", cats},
               {"relations", rels},
               {"detector",
                {{"present", beta_json(n.present)},
                 {"absent", beta_json(n.absent)},
                 {"miss_rate", round_sig9(n.miss_rate)},
                 {"false_positives_per_image", round_sig9(n.false_positives_per_image)},
                 {"near_miss_rate", round_sig9(n.near_miss_rate)},
                 {"jitter", round_sig9(n.jitter)}}}};
    } else {
        const auto& c = std::get<CliqueTemplate>(spec);
        doc = {{"kind", "clique"},
               {"name", c.name},
               {"seed", c.seed},
               {"min_variables", c.min_variables},
               {"max_variables", c.max_variables},
               {"marginal_min", round_sig9(c.marginal_min)},
               {"marginal_max", round_sig9(c.marginal_max)},
               {"coupling", round_sig9(c.coupling)},
               {"concentration", round_sig9(c.concentration)},
               {"pair_correlation", round_sig9(c.pair_correlation)}};
    }
    return canonical_json(doc);
}

TemplateSpec load_template(const std::filesystem::path& path) {
    try {
        return parse_template(read_text_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace fnm
