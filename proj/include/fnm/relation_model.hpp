#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fnm/context_model.hpp"
#include "fnm/geometry.hpp"

namespace fnm {

struct GroundTruthObject {
    std::string category;
    BoxGeometry box;

    friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

struct AnnotatedScene {
    ImageId image_id = 0;
    std::vector<GroundTruthObject> objects;

    friend bool operator==(const AnnotatedScene&, const AnnotatedScene&) = default;
};

// Per-category P(X = true), fixed over location and size.
class PriorTable {
public:
    PriorTable() = default;
    PriorTable(std::span<const std::string> categories, double value);

    double get(const std::string& category) const;
    void set(const std::string& category, double value);
    bool contains(const std::string& category) const { return values_.contains(category); }
    const std::map<std::string, double>& values() const noexcept { return values_; }

    friend bool operator==(const PriorTable&, const PriorTable&) = default;

private:
    std::map<std::string, double> values_;
};

inline constexpr double kDefaultPrior = 0.02;

enum class SmoothingMode {
    prior,   // (n + a p) / (m + a): unobserved cells fall back to the prior
    laplace, // (n + a) / (m + 2a)
};

const char* to_string(SmoothingMode mode) noexcept;
SmoothingMode smoothing_mode_from_string(std::string_view name);

// Key of a triple count: the reference category, the cell of a second
// neighbor and the cell of the query, both relative to the reference.
struct TripleKey {
    std::uint32_t reference = 0;
    std::uint64_t other_cell = 0;
    std::uint64_t query_cell = 0;

    friend bool operator==(const TripleKey&, const TripleKey&) = default;
    friend auto operator<=>(const TripleKey&, const TripleKey&) = default;
};

struct PairEntry {
    std::uint32_t reference = 0;
    std::uint64_t query_cell = 0;
    std::uint64_t count = 0;

    friend bool operator==(const PairEntry&, const PairEntry&) = default;
    friend auto operator<=>(const PairEntry&, const PairEntry&) = default;
};

struct TripleKeyHash {
    std::size_t operator()(const TripleKey& k) const noexcept;
};

// Counts of object configurations in scale-invariant coordinates.
//
// A "cell" is a query category together with a bin of the relative feature.
// Counts record presence: a reference contributes at most one to any pair
// cell, and at most one to any (other cell, query cell) triple, where the two
// cells must be occupied by distinct objects. Absent-neighbor counts are
// derived by subtraction, so only presence triples are stored.
class RelationTable {
public:
    RelationTable() = default;
    RelationTable(BinningConfig binning, std::vector<std::string> categories, int max_neighbors);

    const BinningConfig& binning() const noexcept { return binning_; }
    const std::vector<std::string>& categories() const noexcept { return categories_; }
    int max_neighbors() const noexcept { return max_neighbors_; }

    double smoothing() const noexcept { return smoothing_; }
    SmoothingMode smoothing_mode() const noexcept { return smoothing_mode_; }
    void set_smoothing(double alpha, SmoothingMode mode);

    // Throws UnknownCategory.
    std::uint32_t category_index(const std::string& category) const;
    bool has_category(const std::string& category) const noexcept;

    std::uint64_t cell(std::uint32_t category, const BinIndex& bin) const noexcept;
    std::uint32_t cell_category(std::uint64_t cell) const noexcept;
    BinIndex cell_bin(std::uint64_t cell) const noexcept;

    std::uint64_t reference_total(std::uint32_t reference) const noexcept;
    std::uint64_t pair_count(std::uint32_t reference, std::uint64_t query_cell) const noexcept;
    std::uint64_t triple_count(std::uint32_t reference, std::uint64_t other_cell, std::uint64_t query_cell,
                               bool other_present) const noexcept;
    // Population a triple conditional is estimated from.
    std::uint64_t triple_population(std::uint32_t reference, std::uint64_t other_cell,
                                    bool other_present) const noexcept;

    void add_reference(std::uint32_t reference, std::uint64_t count = 1);
    void add_pair(std::uint32_t reference, std::uint64_t query_cell, std::uint64_t count = 1);
    void add_triple(const TripleKey& key, std::uint64_t count = 1);

    // Adds the counts of another table trained with identical settings.
    void merge(const RelationTable& other);

    // Entries in ascending key order, for serialization.
    std::vector<PairEntry> sorted_pairs() const;
    std::vector<std::pair<TripleKey, std::uint64_t>> sorted_triples() const;
    const std::vector<std::uint64_t>& reference_totals() const noexcept { return totals_; }

    // Smoothed estimate of a proportion n / m.
    double smoothed(std::uint64_t n, std::uint64_t m, double prior) const noexcept;

    friend bool operator==(const RelationTable& a, const RelationTable& b);

private:
    std::uint64_t cells_total() const noexcept;
    std::uint64_t pair_key(std::uint32_t reference, std::uint64_t cell) const noexcept;

    BinningConfig binning_;
    std::vector<std::string> categories_;
    std::map<std::string, std::uint32_t> index_;
    int max_neighbors_ = 2;
    double smoothing_ = 1.0;
    SmoothingMode smoothing_mode_ = SmoothingMode::prior;

    std::vector<std::uint64_t> totals_;
    std::unordered_map<std::uint64_t, std::uint64_t> pairs_;
    std::unordered_map<TripleKey, std::uint64_t, TripleKeyHash> triples_;
};

// Counts every ordered (reference, other) pair, and for max_neighbors = 2 every
// (reference, other, query) triple, over the ground truth of the scenes.
// Categories are collected from the scenes and must all have scale factors.
RelationTable fit_relations(std::span<const AnnotatedScene> scenes, const BinningConfig& binning,
                            int max_neighbors);

// A trained table together with its priors; the learned context model.
struct RelationModel {
    RelationTable table;
    PriorTable priors;

    friend bool operator==(const RelationModel&, const RelationModel&) = default;
};

// P(X_query = query_value | neighbors). Reference frame: the highest-belief
// present neighbor. With no present neighbor the query itself becomes the
// reference through P(X_i|N) = P(X_k|X_i,N\k) P(X_i|N\k) / P(X_k|N\k), with
// X_k the first neighbor; the all-absent value is the complement.
ConditionalEstimate context_conditional(const RelationTable& table, const PriorTable& prior,
                                        const Detection& query,
                                        std::span<const NeighborAssignment> neighbors);

double context_conditional(const RelationTable& table, const PriorTable& prior, const Detection& query,
                           std::span<const NeighborAssignment> neighbors, bool query_value);

// Training observations behind the conditional used by context_conditional;
// the minimum over the composed cells on the reference-swap path.
std::uint64_t observed_samples(const RelationTable& table, const PriorTable& prior, const Detection& query,
                               std::span<const NeighborAssignment> neighbors);

// ContextModel view of a RelationModel. Holds a reference; the model must
// outlive it.
class RelationContext final : public ContextModel {
public:
    explicit RelationContext(const RelationModel& model) : model_(model) {}

    double prior(const Detection& query) const override;
    ConditionalEstimate conditional(const Detection& query,
                                    std::span<const NeighborAssignment> neighbors) const override;
    int max_neighbors() const noexcept override { return model_.table.max_neighbors(); }

private:
    const RelationModel& model_;
};

} // namespace fnm
