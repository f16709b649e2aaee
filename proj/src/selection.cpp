#include "fedsel/selection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fedsel/error.hpp"
#include "fedsel/rng.hpp"

namespace fedsel {

std::string_view to_string(Policy policy) {
    switch (policy) {
        case Policy::random: return "random";
        case Policy::cost: return "cost";
        case Policy::utility: return "utility";
        case Policy::utility_cost: return "utility_cost";
        case Policy::clp_utility_cost: return "clp_utility_cost";
    }
    return "unknown";
}

Policy parse_policy(std::string_view name) {
    for (auto p : {Policy::random, Policy::cost, Policy::utility, Policy::utility_cost, Policy::clp_utility_cost})
        if (to_string(p) == name) return p;
    throw ConfigError("unknown selection policy '" + std::string(name) +
                      "' (expected random, cost, utility, utility_cost or clp_utility_cost)");
}

void SelectionConfig::validate() const {
    if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw ConfigError("selection.k_fraction must lie in (0, 1]");
    if (!(exploration_factor >= 0.0 && exploration_factor < 1.0))
        throw ConfigError("selection.exploration_factor must lie in [0, 1)");
    if (!(cap_fraction >= 0.0) || !std::isfinite(cap_fraction))
        throw ConfigError("selection.cap_fraction must be >= 0");
}

std::optional<std::size_t> selection_cap(double cap_fraction, std::size_t max_rounds) {
    if (cap_fraction <= 0.0) return std::nullopt;
    // The tolerance absorbs representation error, e.g. 0.1 * 300.
    const double raw = cap_fraction * static_cast<double>(max_rounds);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

double utility(std::span<const double> per_sample_losses, std::size_t num_samples) {
    if (per_sample_losses.empty() || num_samples != per_sample_losses.size())
        throw SelectionError("utility needs one loss per sample and at least one sample");
    double sum_sq = 0.0;
    for (double l : per_sample_losses) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw SelectionError("losses must be finite and non-negative");
        sum_sq += l * l;
    }
    const auto n = static_cast<double>(num_samples);
    return n * std::sqrt(sum_sq / n);
}

double utility_per_cost(std::span<const double> per_sample_losses, std::size_t num_samples, double cost) {
    if (!(cost > 0.0)) throw SelectionError("cost must be > 0");
    return utility(per_sample_losses, num_samples) / cost;
}

bool is_eligible(const ClientStats& client, std::optional<std::size_t> cap) noexcept {
    return !cap || client.times_selected < *cap;
}

std::size_t count_eligible(std::span<const ClientStats> pool, std::optional<std::size_t> cap) noexcept {
    return static_cast<std::size_t>(
        std::count_if(pool.begin(), pool.end(), [&](const auto& c) { return is_eligible(c, cap); }));
}

namespace {

std::vector<const ClientStats*> eligible_clients(std::span<const ClientStats> pool, std::size_t k,
                                                 std::optional<std::size_t> cap) {
    std::vector<const ClientStats*> out;
    for (const auto& c : pool)
        if (is_eligible(c, cap)) out.push_back(&c);
    if (out.size() < k)
        throw SelectionError("need " + std::to_string(k) + " clients but only " + std::to_string(out.size()) +
                             " are eligible (short by " + std::to_string(k - out.size()) + ")");
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->client_id < b->client_id; });
    return out;
}

// Partial Fisher-Yates over `from` (already in ascending id order), taking
// `count` entries.
void draw_uniform(std::vector<const ClientStats*>& from, std::size_t count, Rng& rng, std::vector<int>& into) {
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + rng.below(from.size() - i);
        std::swap(from[i], from[j]);
        into.push_back(from[i]->client_id);
    }
    from.erase(from.begin(), from.begin() + static_cast<std::ptrdiff_t>(count));
}

std::vector<int> sorted(std::vector<int> ids) {
    std::sort(ids.begin(), ids.end());
    return ids;
}

using ScoreFn = std::function<double(const ClientStats&)>;

std::vector<int> explore_exploit(std::span<const ClientStats> pool, std::size_t k, double exploration,
                                 std::optional<std::size_t> cap, std::uint64_t seed, const ScoreFn& score) {
    if (!(exploration >= 0.0 && exploration < 1.0)) throw SelectionError("exploration factor must lie in [0, 1)");
    auto eligible = eligible_clients(pool, k, cap);

    std::vector<const ClientStats*> explored, unexplored;
    for (auto* c : eligible) (c->explored() ? explored : unexplored).push_back(c);

    const auto explore_slots = static_cast<std::size_t>(std::floor(exploration * static_cast<double>(k)));
    const auto exploit_slots = k - explore_slots;

    std::stable_sort(explored.begin(), explored.end(), [&](auto* a, auto* b) { return score(*a) > score(*b); });
    std::vector<int> chosen;
    const auto exploit_taken = std::min(exploit_slots, explored.size());
    for (std::size_t i = 0; i < exploit_taken; ++i) chosen.push_back(explored[i]->client_id);
    explored.erase(explored.begin(), explored.begin() + static_cast<std::ptrdiff_t>(exploit_taken));

    Rng rng(seed);
    const auto remaining = k - exploit_taken;
    const auto from_unexplored = std::min(remaining, unexplored.size());
    draw_uniform(unexplored, from_unexplored, rng, chosen);
    draw_uniform(explored, remaining - from_unexplored, rng, chosen);
    return sorted(std::move(chosen));
}

bool any_explored(std::span<const ClientStats> pool) {
    return std::any_of(pool.begin(), pool.end(), [](const auto& c) { return c.explored(); });
}

}  // namespace

std::vector<int> select_random(std::span<const ClientStats> pool, std::size_t k,
                               std::optional<std::size_t> cap, std::uint64_t seed) {
    auto eligible = eligible_clients(pool, k, cap);
    Rng rng(seed);
    std::vector<int> chosen;
    draw_uniform(eligible, k, rng, chosen);
    return sorted(std::move(chosen));
}

std::vector<int> select_lowest_cost(std::span<const ClientStats> pool, std::size_t k,
                                    std::optional<std::size_t> cap) {
    auto eligible = eligible_clients(pool, k, cap);
    std::stable_sort(eligible.begin(), eligible.end(), [](auto* a, auto* b) { return a->cost < b->cost; });
    std::vector<int> chosen;
    for (std::size_t i = 0; i < k; ++i) chosen.push_back(eligible[i]->client_id);
    return sorted(std::move(chosen));
}

std::vector<int> select_utility(std::span<const ClientStats> pool, std::size_t k, double exploration,
                                std::optional<std::size_t> cap, std::uint64_t seed) {
    if (!any_explored(pool)) return select_random(pool, k, cap, seed);
    return explore_exploit(pool, k, exploration, cap, seed, [](const ClientStats& c) { return *c.last_utility; });
}

std::vector<int> select_utility_cost(std::span<const ClientStats> pool, std::size_t k, double exploration,
                                     std::optional<std::size_t> cap, std::uint64_t seed) {
    if (!any_explored(pool)) return select_lowest_cost(pool, k, cap);
    for (const auto& c : pool)
        if (!(c.cost > 0.0)) throw SelectionError("client " + std::to_string(c.client_id) + " has non-positive cost");
    return explore_exploit(pool, k, exploration, cap, seed,
                           [](const ClientStats& c) { return *c.last_utility / c.cost; });
}

std::vector<int> select_clients(Policy policy, std::span<const ClientStats> pool, std::size_t k,
                                double exploration, std::optional<std::size_t> cap, std::uint64_t seed) {
    switch (policy) {
        case Policy::random: return select_random(pool, k, cap, seed);
        case Policy::cost: return select_lowest_cost(pool, k, cap);
        case Policy::utility: return select_utility(pool, k, exploration, cap, seed);
        case Policy::utility_cost:
        case Policy::clp_utility_cost: return select_utility_cost(pool, k, exploration, cap, seed);
    }
    throw SelectionError("unknown policy");
}

}  // namespace fedsel
