#include "fnm/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_set>

#include "fnm/error.hpp"

namespace fnm {

const char* to_string(NeighborSearch search) noexcept {
    return search == NeighborSearch::exhaustive ? "exhaustive" : "greedy";
}

NeighborSearch neighbor_search_from_string(std::string_view name) {
    if (name == "exhaustive") return NeighborSearch::exhaustive;
    if (name == "greedy") return NeighborSearch::greedy;
    throw InvalidInput("unknown neighbor search '" + std::string(name) + "'");
}

void InferenceConfig::validate() const {
    if (max_neighbors < 1 || max_neighbors > 2)
        throw InvalidInput("max_neighbors must be 1 or 2");
    if (iterations < 1)
        throw InvalidInput("iterations must be >= 1");
    if (!(candidate_floor >= 0.0 && candidate_floor <= 1.0))
        throw InvalidInput("candidate floor must lie in [0,1]");
    gating.validate();
}

double combine(double detector_prob, double context_prob, double prior) {
    return posterior_at(CurveParams{detector_prob, prior}, context_prob);
}

namespace {

// Assignment `bits` gives neighbor k the value of bit k.
std::vector<NeighborAssignment> assignment(std::span<const Detection* const> neighbors,
                                           std::span<const double> beliefs, unsigned bits, double& weight) {
    std::vector<NeighborAssignment> out(neighbors.size());
    weight = 1.0;
    for (std::size_t k = 0; k < neighbors.size(); ++k) {
        const bool present = (bits >> k) & 1U;
        out[k] = NeighborAssignment{neighbors[k], present, beliefs[k]};
        weight *= present ? beliefs[k] : 1.0 - beliefs[k];
    }
    return out;
}

} // namespace

ContextMixture context_mixture(const ContextModel& model, const Detection& query,
                               std::span<const Detection* const> neighbors, std::span<const double> beliefs,
                               MixtureGate gate) {
    if (neighbors.size() != beliefs.size())
        throw InvalidInput("context_mixture: one belief per neighbor required");
    ContextMixture mix;
    if (neighbors.empty())
        return mix;
    const double p = model.prior(query);
    if (!(p > 0.0 && p < 1.0))
        throw InvalidInput("prior for category '" + query.category + "' must lie strictly inside (0,1)");
    mix.true_mass = 0.0;
    mix.false_mass = 0.0;
    const unsigned count = 1U << neighbors.size();
    for (unsigned bits = 0; bits < count; ++bits) {
        double weight = 0.0;
        const auto assigned = assignment(neighbors, beliefs, bits, weight);
        const ConditionalEstimate est = model.conditional(query, assigned);
        double h = clamp_context(est.prob_true);
        mix.sparsity_warnings += est.sparsity_warnings;
        if (gate.gating != nullptr &&
            should_gate(CurveParams{gate.detector_prob, p}, h, est.samples, *gate.gating)) {
            h = p;
            ++mix.gated_assignments;
        }
        mix.true_mass += weight * h / p;
        mix.false_mass += weight * (1.0 - h) / (1.0 - p);
        ++mix.assignments;
    }
    return mix;
}

double combine_mixture(double detector_prob, const ContextMixture& mixture) {
    const double t = detector_prob * mixture.true_mass;
    const double f = (1.0 - detector_prob) * mixture.false_mass;
    if (!(t + f > 0.0))
        return detector_prob;
    return t / (t + f);
}

double neighbor_score(const ContextModel& model, const Detection& query,
                      std::span<const Detection* const> neighbors, std::span<const double> beliefs) {
    const double p = model.prior(query);
    double score = 0.0;
    const unsigned count = 1U << neighbors.size();
    for (unsigned bits = 0; bits < count; ++bits) {
        double weight = 0.0;
        const auto assigned = assignment(neighbors, beliefs, bits, weight);
        const ConditionalEstimate est = model.conditional(query, assigned);
        for (bool value : {true, false})
            score += std::abs(est.prob(value) - (value ? p : 1.0 - p)) * weight;
    }
    return score;
}

namespace {

bool beats(double score, double best) {
    if (best == -std::numeric_limits<double>::infinity())
        return true;
    return score > best + 1e-12 * std::max(1.0, std::abs(best));
}

double subset_score(std::size_t query, std::span<const Detection> detections, std::span<const std::size_t> subset,
                    std::span<const double> beliefs, const ContextModel& model) {
    std::vector<const Detection*> neighbors;
    std::vector<double> weights;
    for (auto j : subset) {
        neighbors.push_back(&detections[j]);
        weights.push_back(beliefs[j]);
    }
    return neighbor_score(model, detections[query], neighbors, weights);
}

} // namespace

std::vector<std::size_t> select_neighbors(std::size_t query, std::span<const Detection> detections,
                                          std::span<const std::size_t> candidates, std::span<const double> beliefs,
                                          const ContextModel& model, const InferenceConfig& config) {
    if (candidates.empty())
        return {};
    const int limit = std::min(config.max_neighbors, model.max_neighbors());
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best;

    std::vector<std::size_t> subset(1);
    for (std::size_t a = 0; a < candidates.size(); ++a) {
        subset[0] = candidates[a];
        const double s = subset_score(query, detections, subset, beliefs, model);
        if (beats(s, best_score)) {
            best_score = s;
            best = subset;
        }
    }
    if (limit < 2 || candidates.size() < 2)
        return best;

    const double single_best = best_score;
    const std::vector<std::size_t> single = best;
    subset.resize(2);
    if (config.neighbor_search == NeighborSearch::exhaustive) {
        for (std::size_t a = 0; a < candidates.size(); ++a)
            for (std::size_t b = a + 1; b < candidates.size(); ++b) {
                subset[0] = candidates[a];
                subset[1] = candidates[b];
                const double s = subset_score(query, detections, subset, beliefs, model);
                if (beats(s, best_score)) {
                    best_score = s;
                    best = subset;
                }
            }
        return best;
    }

    // Greedy: keep the best single and try each addition.
    double pair_best = single_best;
    for (auto c : candidates) {
        if (c == single[0])
            continue;
        subset[0] = std::min(c, single[0]);
        subset[1] = std::max(c, single[0]);
        // Canonical order follows detection ids, not indices.
        if (detections[subset[0]].id > detections[subset[1]].id)
            std::swap(subset[0], subset[1]);
        const double s = subset_score(query, detections, subset, beliefs, model);
        if (beats(s, pair_best)) {
            pair_best = s;
            best = subset;
        }
    }
    return best;
}

namespace {

struct SceneRunner {
    std::span<const Detection> detections;
    const ContextModel& model;
    const InferenceConfig& config;
    SceneState state;
    std::vector<double> beliefs;

    double update(std::size_t i, std::span<const std::size_t> neighbors, std::span<const double> messages,
                  ContextMixture* out_mix) const {
        std::vector<const Detection*> ptrs;
        ptrs.reserve(neighbors.size());
        for (auto j : neighbors)
            ptrs.push_back(&detections[j]);
        const double a = state.detector_probs[i];
        const ContextMixture mix = context_mixture(model, detections[i], ptrs, messages,
                                                   MixtureGate{a, &config.gating});
        if (out_mix != nullptr)
            *out_mix = mix;
        return combine_mixture(a, mix);
    }

    double message(std::size_t from, std::size_t to) const {
        if (!config.leave_one_out)
            return beliefs[from];
        const auto& chosen = state.chosen_neighbors[from];
        if (std::find(chosen.begin(), chosen.end(), to) == chosen.end())
            return beliefs[from];
        std::vector<std::size_t> rest;
        std::vector<double> rest_beliefs;
        for (auto k : chosen)
            if (k != to) {
                rest.push_back(k);
                rest_beliefs.push_back(beliefs[k]);
            }
        return update(from, rest, rest_beliefs, nullptr);
    }
};

} // namespace

RescoreResult rescore_scene(std::span<const Detection> detections, const ContextModel& model,
                            const InferenceConfig& config) {
    config.validate();
    RescoreResult result;
    const std::size_t n = detections.size();
    if (n == 0)
        return result;

    std::unordered_set<DetectionId> ids;
    for (const auto& d : detections) {
        validate(d);
        if (d.image_id != detections.front().image_id)
            throw InvalidInput("rescore_scene: detections span several images");
        if (!ids.insert(d.id).second)
            throw InvalidInput("rescore_scene: duplicate detection id " + std::to_string(d.id));
    }

    SceneRunner run{detections, model, config, {}, {}};
    run.state.variables.resize(n);
    run.state.detector_probs.resize(n);
    run.state.chosen_neighbors.assign(n, {});
    run.state.gated.assign(n, false);
    run.beliefs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        run.state.detector_probs[i] = detections[i].confidence;
        run.beliefs[i] = detections[i].confidence;
    }

    // Canonical order: ascending detection id.
    std::vector<std::size_t> canonical(n);
    for (std::size_t i = 0; i < n; ++i)
        canonical[i] = i;
    std::sort(canonical.begin(), canonical.end(),
              [&](std::size_t a, std::size_t b) { return detections[a].id < detections[b].id; });

    std::vector<std::size_t> order = canonical;
    std::vector<std::size_t> candidates;
    std::vector<double> messages;
    for (int iter = 0; iter < config.iterations; ++iter) {
        // Most decided variables first.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ca = std::abs(run.beliefs[a] - 0.5);
            const double cb = std::abs(run.beliefs[b] - 0.5);
            if (ca != cb)
                return ca > cb;
            return detections[a].id < detections[b].id;
        });
        for (auto i : order) {
            candidates.clear();
            for (auto j : canonical)
                if (j != i && detections[j].confidence >= config.candidate_floor)
                    candidates.push_back(j);
            const auto chosen = select_neighbors(i, detections, candidates, run.beliefs, model, config);
            messages.clear();
            for (auto j : chosen)
                messages.push_back(run.message(j, i));
            ContextMixture mix;
            run.beliefs[i] = run.update(i, chosen, messages, &mix);
            run.state.chosen_neighbors[i] = chosen;
            run.state.gated[i] = mix.gated_assignments > 0;
            run.state.sparsity_warnings += mix.sparsity_warnings;
        }
    }

    for (std::size_t i = 0; i < n; ++i)
        run.state.variables[i] = LocationVariable{detections[i].id, run.beliefs[i]};
    result.confidences = run.beliefs;
    result.state = std::move(run.state);
    return result;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), std::max<std::size_t>(count, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count)
                    return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure)
                        failure = std::current_exception();
                    next.store(count);
                }
            }
        });
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

DatasetRescore rescore_dataset(std::span<const Detection> detections, const ContextModel& model,
                               const InferenceConfig& config, int jobs) {
    config.validate();
    DatasetRescore out;
    std::map<ImageId, std::size_t> slot;
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        auto [it, inserted] = slot.try_emplace(detections[i].image_id, groups.size());
        if (inserted) {
            groups.emplace_back();
            out.image_order.push_back(detections[i].image_id);
        }
        groups[it->second].push_back(i);
    }

    out.per_image.resize(groups.size());
    parallel_for(groups.size(), jobs, [&](std::size_t g) {
        std::vector<Detection> scene;
        scene.reserve(groups[g].size());
        for (auto i : groups[g])
            scene.push_back(detections[i]);
        out.per_image[g] = rescore_scene(scene, model, config);
    });

    out.detections.assign(detections.begin(), detections.end());
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t k = 0; k < groups[g].size(); ++k)
            out.detections[groups[g][k]].confidence = out.per_image[g].confidences[k];
    return out;
}

} // namespace fnm
