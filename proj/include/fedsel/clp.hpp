#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace fedsel {

/// Global accuracy per round; index 0 holds round 1.
class AccuracyCurve {
public:
    void append(double accuracy);
    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

private:
    std::vector<double> values_;
};

enum class ScalingStrategy { steady_step, rapid_taper, modest_shift };

std::string_view to_string(ScalingStrategy strategy);
ScalingStrategy parse_strategy(std::string_view name);

struct ClpConfig {
    std::size_t window = 5;
    double threshold = 0.005;
    ScalingStrategy strategy = ScalingStrategy::steady_step;
    double alpha = 0.01;
    double beta = 2.0;
    double initial_fraction = 0.10;  ///< M
    std::optional<std::size_t> k_min;  ///< default round_half_up(0.10 * N_pool)
    std::optional<std::size_t> k_max;  ///< default N_pool

    /// (alpha, beta) = (0.01, 2), (2, 0.01), (0.015, 0.015) respectively.
    static ClpConfig defaults_for(ScalingStrategy strategy);
    void validate() const;
};

struct CountBounds {
    std::size_t k_min = 1;
    std::size_t k_max = 1;
};

/// floor(x + 0.5)
long long round_half_up(double x);

CountBounds resolve_bounds(const ClpConfig& config, std::size_t n_pool);

/// Trailing mean of |A(r) - A(r-1)| over the last `window` rounds, or none
/// while the curve has fewer than window + 1 points.
std::optional<double> smoothed_derivative(std::span<const double> curve, std::size_t window);

/// True iff the smoothed derivative at the latest round is below threshold.
bool clp_ended(std::span<const double> curve, std::size_t window, double threshold);

/// Participants for `round` given whether the critical period is still
/// active and the previous round's count.
///
/// round 1:           round_half_up(M * N_pool)
/// active:            steady_step, modest_shift: prev + round_half_up(alpha * N_pool)
///                    rapid_taper:               round_half_up(alpha * prev)
/// ended:             steady_step:               round_half_up(prev / beta)
///                    rapid_taper, modest_shift: prev - round_half_up(beta * N_pool)
///
/// Always clamped to [k_min, k_max]; after the period a count at k_min stays there.
std::size_t participant_count(const ClpConfig& config, std::size_t round, bool clp_active,
                              std::size_t prev_count, std::size_t n_pool);

/// Latching detector plus count schedule, as driven by the round loop.
class ClpController {
public:
    ClpController(ClpConfig config, std::size_t n_pool);

    /// Count to request for the next round.
    std::size_t next_count();

    /// Feeds the accuracy of the round just finished. Returns true exactly
    /// once, on the round the critical period is first detected as over.
    bool observe(double accuracy);

    bool active() const noexcept { return !end_round_.has_value(); }
    std::optional<std::size_t> end_round() const noexcept { return end_round_; }
    std::optional<double> mu_at_end() const noexcept { return mu_at_end_; }
    const AccuracyCurve& curve() const noexcept { return curve_; }
    const ClpConfig& config() const noexcept { return config_; }

private:
    ClpConfig config_;
    std::size_t n_pool_;
    AccuracyCurve curve_;
    std::size_t round_ = 0;
    std::size_t prev_count_ = 0;
    std::optional<std::size_t> end_round_;
    std::optional<double> mu_at_end_;
};

}  // namespace fedsel
