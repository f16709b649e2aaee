#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedsel {

enum class Policy { random, cost, utility, utility_cost, clp_utility_cost };

std::string_view to_string(Policy policy);
Policy parse_policy(std::string_view name);

/// Selection state of one client, owned by the engine.
struct ClientStats {
    int client_id = 0;
    double cost = 1.0;
    std::optional<double> last_utility;  ///< most recent measurement, no decay
    std::size_t times_selected = 0;

    bool explored() const noexcept { return last_utility.has_value(); }
};

struct SelectionConfig {
    Policy policy = Policy::random;
    double k_fraction = 0.10;
    double exploration_factor = 0.10;
    double cap_fraction = 0.10;  ///< of max_rounds; 0 disables the cap
    std::uint64_t seed = 0;

    void validate() const;
};

/// Selection cap for a run of `max_rounds`: ceil(cap_fraction * max_rounds),
/// or none when cap_fraction is 0.
std::optional<std::size_t> selection_cap(double cap_fraction, std::size_t max_rounds);

/// |B| * sqrt(mean(loss^2)).
double utility(std::span<const double> per_sample_losses, std::size_t num_samples);
double utility_per_cost(std::span<const double> per_sample_losses, std::size_t num_samples, double cost);

bool is_eligible(const ClientStats& client, std::optional<std::size_t> cap) noexcept;
std::size_t count_eligible(std::span<const ClientStats> pool, std::optional<std::size_t> cap) noexcept;

// Every selector returns client ids in ascending order and throws
// SelectionError when fewer than K clients are eligible.

std::vector<int> select_random(std::span<const ClientStats> pool, std::size_t k,
                               std::optional<std::size_t> cap, std::uint64_t seed);

/// K cheapest eligible clients, ties by ascending id.
std::vector<int> select_lowest_cost(std::span<const ClientStats> pool, std::size_t k,
                                    std::optional<std::size_t> cap);

/// floor(e*K) exploration slots and K - floor(e*K) exploitation slots.
/// Exploitation takes the highest-utility explored clients (ties by id).
/// Exploration draws uniformly from unexplored clients, falling back to the
/// remaining explored ones; an exploitation shortfall also spills into
/// exploration. With no explored client in the pool the round is random.
std::vector<int> select_utility(std::span<const ClientStats> pool, std::size_t k, double exploration,
                                std::optional<std::size_t> cap, std::uint64_t seed);

/// As select_utility, ranking by utility / cost. With no explored client in
/// the pool the K cheapest clients are taken.
std::vector<int> select_utility_cost(std::span<const ClientStats> pool, std::size_t k, double exploration,
                                     std::optional<std::size_t> cap, std::uint64_t seed);

/// Dispatch on policy; clp_utility_cost selects like utility_cost.
std::vector<int> select_clients(Policy policy, std::span<const ClientStats> pool, std::size_t k,
                                double exploration, std::optional<std::size_t> cap, std::uint64_t seed);

}  // namespace fedsel
