#include "fnm/relation_model.hpp"

#include <algorithm>
#include <set>
#include <utility>

#include "fnm/error.hpp"

namespace fnm {

// ---------------------------------------------------------------- PriorTable

PriorTable::PriorTable(std::span<const std::string> categories, double value) {
    for (const auto& c : categories)
        set(c, value);
}

double PriorTable::get(const std::string& category) const {
    auto it = values_.find(category);
    if (it == values_.end())
        throw UnknownCategory(category);
    return it->second;
}

void PriorTable::set(const std::string& category, double value) {
    if (!(value > 0.0 && value < 1.0))
        throw InvalidInput("prior for '" + category + "' must lie strictly inside (0,1)");
    values_[category] = value;
}

const char* to_string(SmoothingMode mode) noexcept {
    return mode == SmoothingMode::prior ? "prior" : "laplace";
}

SmoothingMode smoothing_mode_from_string(std::string_view name) {
    if (name == "prior") return SmoothingMode::prior;
    if (name == "laplace") return SmoothingMode::laplace;
    throw InvalidInput("unknown smoothing mode '" + std::string(name) + "'");
}

std::size_t TripleKeyHash::operator()(const TripleKey& k) const noexcept {
    std::uint64_t h = k.reference * 0x9E3779B97F4A7C15ULL;
    h ^= k.other_cell + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h ^= k.query_cell * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h ^ (h >> 31));
}

// ------------------------------------------------------------- RelationTable

RelationTable::RelationTable(BinningConfig binning, std::vector<std::string> categories, int max_neighbors)
    : binning_(std::move(binning)), categories_(std::move(categories)), max_neighbors_(max_neighbors) {
    binning_.validate();
    if (max_neighbors_ < 1 || max_neighbors_ > 2)
        throw InvalidInput("max_neighbors must be 1 or 2");
    std::sort(categories_.begin(), categories_.end());
    categories_.erase(std::unique(categories_.begin(), categories_.end()), categories_.end());
    for (std::uint32_t i = 0; i < categories_.size(); ++i)
        index_.emplace(categories_[i], i);
    const double cells_total = static_cast<double>(categories_.size()) * binning_.cells_per_category();
    if (cells_total * std::max<double>(1.0, static_cast<double>(categories_.size())) > 9.0e18)
        throw InvalidInput("binning too fine for the number of categories");
    totals_.assign(categories_.size(), 0);
}

void RelationTable::set_smoothing(double alpha, SmoothingMode mode) {
    if (!(alpha >= 0.0))
        throw InvalidInput("smoothing must be non-negative");
    smoothing_ = alpha;
    smoothing_mode_ = mode;
}

std::uint32_t RelationTable::category_index(const std::string& category) const {
    auto it = index_.find(category);
    if (it == index_.end())
        throw UnknownCategory(category);
    return it->second;
}

bool RelationTable::has_category(const std::string& category) const noexcept {
    return index_.contains(category);
}

std::uint64_t RelationTable::cell(std::uint32_t category, const BinIndex& bin) const noexcept {
    const std::uint64_t linear =
        (static_cast<std::uint64_t>(bin.x) * binning_.offset_bins_y + bin.y) * binning_.scale_bins + bin.scale;
    return static_cast<std::uint64_t>(category) * binning_.cells_per_category() + linear;
}

std::uint32_t RelationTable::cell_category(std::uint64_t cell) const noexcept {
    return static_cast<std::uint32_t>(cell / binning_.cells_per_category());
}

BinIndex RelationTable::cell_bin(std::uint64_t cell) const noexcept {
    std::uint64_t linear = cell % binning_.cells_per_category();
    BinIndex bin;
    bin.scale = static_cast<int>(linear % binning_.scale_bins);
    linear /= binning_.scale_bins;
    bin.y = static_cast<int>(linear % binning_.offset_bins_y);
    bin.x = static_cast<int>(linear / binning_.offset_bins_y);
    return bin;
}

std::uint64_t RelationTable::cells_total() const noexcept {
    return categories_.size() * static_cast<std::uint64_t>(binning_.cells_per_category());
}

std::uint64_t RelationTable::pair_key(std::uint32_t reference, std::uint64_t cell) const noexcept {
    return reference * cells_total() + cell;
}

std::uint64_t RelationTable::reference_total(std::uint32_t reference) const noexcept {
    return reference < totals_.size() ? totals_[reference] : 0;
}

std::uint64_t RelationTable::pair_count(std::uint32_t reference, std::uint64_t query_cell) const noexcept {
    auto it = pairs_.find(pair_key(reference, query_cell));
    return it == pairs_.end() ? 0 : it->second;
}

std::uint64_t RelationTable::triple_count(std::uint32_t reference, std::uint64_t other_cell,
                                          std::uint64_t query_cell, bool other_present) const noexcept {
    auto it = triples_.find(TripleKey{reference, other_cell, query_cell});
    const std::uint64_t both = it == triples_.end() ? 0 : it->second;
    if (other_present)
        return both;
    // An empty cell cannot hold the query.
    if (other_cell == query_cell)
        return 0;
    return pair_count(reference, query_cell) - both;
}

std::uint64_t RelationTable::triple_population(std::uint32_t reference, std::uint64_t other_cell,
                                               bool other_present) const noexcept {
    const std::uint64_t with_other = pair_count(reference, other_cell);
    return other_present ? with_other : reference_total(reference) - with_other;
}

void RelationTable::add_reference(std::uint32_t reference, std::uint64_t count) {
    totals_.at(reference) += count;
}

void RelationTable::add_pair(std::uint32_t reference, std::uint64_t query_cell, std::uint64_t count) {
    pairs_[pair_key(reference, query_cell)] += count;
}

void RelationTable::add_triple(const TripleKey& key, std::uint64_t count) { triples_[key] += count; }

void RelationTable::merge(const RelationTable& other) {
    if (!(binning_ == other.binning_) || categories_ != other.categories_ ||
        max_neighbors_ != other.max_neighbors_)
        throw InvalidInput("cannot merge relation tables trained with different settings");
    for (std::size_t i = 0; i < totals_.size(); ++i)
        totals_[i] += other.totals_[i];
    for (const auto& [key, count] : other.pairs_)
        pairs_[key] += count;
    for (const auto& [key, count] : other.triples_)
        triples_[key] += count;
}

std::vector<PairEntry> RelationTable::sorted_pairs() const {
    std::vector<PairEntry> out;
    out.reserve(pairs_.size());
    const std::uint64_t total = cells_total();
    for (const auto& [key, count] : pairs_)
        if (count > 0)
            out.push_back(PairEntry{static_cast<std::uint32_t>(key / total), key % total, count});
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::pair<TripleKey, std::uint64_t>> RelationTable::sorted_triples() const {
    std::vector<std::pair<TripleKey, std::uint64_t>> out;
    out.reserve(triples_.size());
    for (const auto& [key, count] : triples_)
        if (count > 0)
            out.emplace_back(key, count);
    std::sort(out.begin(), out.end());
    return out;
}

double RelationTable::smoothed(std::uint64_t n, std::uint64_t m, double prior) const noexcept {
    const double a = smoothing_;
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    if (smoothing_mode_ == SmoothingMode::prior) {
        if (mm + a <= 0.0)
            return prior;
        return (nn + a * prior) / (mm + a);
    }
    if (mm + 2.0 * a <= 0.0)
        return 0.5;
    return (nn + a) / (mm + 2.0 * a);
}

bool operator==(const RelationTable& a, const RelationTable& b) {
    return a.binning_ == b.binning_ && a.categories_ == b.categories_ && a.max_neighbors_ == b.max_neighbors_ &&
           a.smoothing_ == b.smoothing_ && a.smoothing_mode_ == b.smoothing_mode_ && a.totals_ == b.totals_ &&
           a.sorted_pairs() == b.sorted_pairs() && a.sorted_triples() == b.sorted_triples();
}

// ------------------------------------------------------------- fit_relations

namespace {

void count_scene(const AnnotatedScene& scene, RelationTable& table, std::vector<std::uint32_t>& cats) {
    const auto& objects = scene.objects;
    const auto& binning = table.binning();
    cats.clear();
    for (const auto& o : objects)
        cats.push_back(table.category_index(o.category));

    std::vector<std::uint64_t> cells(objects.size());
    std::vector<std::uint64_t> unique;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> combos;
    for (std::size_t r = 0; r < objects.size(); ++r) {
        const auto& ref = objects[r];
        table.add_reference(cats[r]);
        unique.clear();
        for (std::size_t o = 0; o < objects.size(); ++o) {
            if (o == r)
                continue;
            const auto feature = featurize(objects[o].box, ref.box, ref.category, binning);
            cells[o] = table.cell(cats[o], bin_feature(feature, binning));
            unique.push_back(cells[o]);
        }
        std::sort(unique.begin(), unique.end());
        unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
        for (auto c : unique)
            table.add_pair(cats[r], c);

        if (table.max_neighbors() < 2)
            continue;
        combos.clear();
        for (std::size_t a = 0; a < objects.size(); ++a) {
            if (a == r)
                continue;
            for (std::size_t b = 0; b < objects.size(); ++b) {
                if (b == r || b == a)
                    continue;
                combos.emplace_back(cells[a], cells[b]);
            }
        }
        std::sort(combos.begin(), combos.end());
        combos.erase(std::unique(combos.begin(), combos.end()), combos.end());
        for (const auto& [other, query] : combos)
            table.add_triple(TripleKey{cats[r], other, query});
    }
}

} // namespace

RelationTable fit_relations(std::span<const AnnotatedScene> scenes, const BinningConfig& binning,
                            int max_neighbors) {
    if (scenes.empty())
        throw InvalidInput("fit_relations: no training scenes");
    if (max_neighbors < 1 || max_neighbors > 2)
        throw InvalidInput("fit_relations: max_neighbors must be 1 or 2");
    std::set<std::string> names;
    for (const auto& scene : scenes)
        for (const auto& o : scene.objects) {
            if (!binning.scale_factors.contains(o.category))
                throw MissingScaleFactor(o.category);
            if (!(o.box.height > 0.0))
                throw InvalidInput("fit_relations: object of category '" + o.category + "' in image " +
                                   std::to_string(scene.image_id) + " has non-positive height");
            names.insert(o.category);
        }
    RelationTable table(binning, std::vector<std::string>(names.begin(), names.end()), max_neighbors);
    std::vector<std::uint32_t> scratch;
    for (const auto& scene : scenes)
        count_scene(scene, table, scratch);
    return table;
}

// -------------------------------------------------------- context_conditional

namespace {

// Minimum denominator accepted on the reference-swap path.
constexpr double kSwapGuard = 1e-9;

// Lookup with `ref` as reference frame; `other` is the optional second neighbor.
ConditionalEstimate lookup(const RelationTable& table, const PriorTable& priors, const Detection& query,
                           const Detection& ref, const NeighborAssignment* other) {
    const auto& binning = table.binning();
    const std::uint32_t ref_cat = table.category_index(ref.category);
    const std::uint32_t query_cat = table.category_index(query.category);
    const std::uint64_t query_cell =
        table.cell(query_cat, bin_feature(featurize(query.box, ref.box, ref.category, binning), binning));
    const double query_prior = priors.get(query.category);

    std::uint64_t n = 0;
    std::uint64_t m = 0;
    if (other == nullptr) {
        n = table.pair_count(ref_cat, query_cell);
        m = table.reference_total(ref_cat);
    } else {
        if (table.max_neighbors() < 2)
            throw InvalidInput("relation table was trained for single neighbors only");
        const Detection& o = *other->detection;
        const std::uint64_t other_cell = table.cell(
            table.category_index(o.category), bin_feature(featurize(o.box, ref.box, ref.category, binning), binning));
        n = table.triple_count(ref_cat, other_cell, query_cell, other->present);
        m = table.triple_population(ref_cat, other_cell, other->present);
    }
    ConditionalEstimate e;
    e.prob_true = std::clamp(table.smoothed(n, m, query_prior), 0.0, 1.0);
    e.samples = m;
    return e;
}

ConditionalEstimate conditional_true(const RelationTable& table, const PriorTable& priors, const Detection& query,
                                     std::span<const NeighborAssignment> neighbors) {
    if (neighbors.empty()) {
        table.category_index(query.category);
        return ConditionalEstimate{priors.get(query.category), kUnlimitedSamples, 0};
    }
    if (static_cast<int>(neighbors.size()) > table.max_neighbors())
        throw InvalidInput("more neighbors than the relation table was trained for");

    // Reference: highest-belief present neighbor, ties to the lowest id.
    const NeighborAssignment* ref = nullptr;
    for (const auto& n : neighbors) {
        if (!n.present)
            continue;
        if (ref == nullptr || n.belief > ref->belief ||
            (n.belief == ref->belief && n.detection->id < ref->detection->id))
            ref = &n;
    }
    if (ref != nullptr) {
        const NeighborAssignment* other = nullptr;
        for (const auto& n : neighbors)
            if (&n != ref)
                other = &n;
        return lookup(table, priors, query, *ref->detection, other);
    }

    // Every neighbor is absent: swap the query in as the reference frame.
    const NeighborAssignment& swapped = neighbors.front();
    const auto rest = neighbors.subspan(1);

    std::vector<NeighborAssignment> with_query;
    with_query.reserve(neighbors.size());
    with_query.push_back(NeighborAssignment{&query, true, 1.0});
    with_query.insert(with_query.end(), rest.begin(), rest.end());
    std::sort(with_query.begin(), with_query.end(),
              [](const auto& a, const auto& b) { return a.detection->id < b.detection->id; });

    const ConditionalEstimate swapped_given_query = conditional_true(table, priors, *swapped.detection, with_query);
    const ConditionalEstimate query_given_rest = conditional_true(table, priors, query, rest);
    const ConditionalEstimate swapped_given_rest = conditional_true(table, priors, *swapped.detection, rest);

    ConditionalEstimate result;
    result.samples = std::min({swapped_given_query.samples, query_given_rest.samples, swapped_given_rest.samples});
    result.sparsity_warnings = swapped_given_query.sparsity_warnings + query_given_rest.sparsity_warnings +
                               swapped_given_rest.sparsity_warnings;

    const double denominator = 1.0 - swapped_given_rest.prob_true;
    if (denominator < kSwapGuard) {
        result.prob_true = priors.get(query.category);
        result.sparsity_warnings += 1;
        return result;
    }
    const double value = (1.0 - swapped_given_query.prob_true) * query_given_rest.prob_true / denominator;
    if (value > 1.0) {
        // The complementary (all-absent) value would be negative.
        result.sparsity_warnings += 1;
    }
    result.prob_true = std::clamp(value, 0.0, 1.0);
    return result;
}

} // namespace

ConditionalEstimate context_conditional(const RelationTable& table, const PriorTable& prior,
                                        const Detection& query,
                                        std::span<const NeighborAssignment> neighbors) {
    return conditional_true(table, prior, query, neighbors);
}

double context_conditional(const RelationTable& table, const PriorTable& prior, const Detection& query,
                           std::span<const NeighborAssignment> neighbors, bool query_value) {
    return conditional_true(table, prior, query, neighbors).prob(query_value);
}

std::uint64_t observed_samples(const RelationTable& table, const PriorTable& prior, const Detection& query,
                               std::span<const NeighborAssignment> neighbors) {
    try {
        return conditional_true(table, prior, query, neighbors).samples;
    } catch (const UnknownCategory&) {
        return 0;
    }
}

double RelationContext::prior(const Detection& query) const { return model_.priors.get(query.category); }

ConditionalEstimate RelationContext::conditional(const Detection& query,
                                                 std::span<const NeighborAssignment> neighbors) const {
    return conditional_true(model_.table, model_.priors, query, neighbors);
}

} // namespace fnm
