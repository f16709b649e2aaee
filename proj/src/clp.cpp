#include "fedsel/clp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsel/error.hpp"

namespace fedsel {

void AccuracyCurve::append(double accuracy) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw IntegrityError("accuracy must lie in [0, 1]");
    values_.push_back(accuracy);
}

std::string_view to_string(ScalingStrategy strategy) {
    switch (strategy) {
        case ScalingStrategy::steady_step: return "steady_step";
        case ScalingStrategy::rapid_taper: return "rapid_taper";
        case ScalingStrategy::modest_shift: return "modest_shift";
    }
    return "unknown";
}

ScalingStrategy parse_strategy(std::string_view name) {
    for (auto s : {ScalingStrategy::steady_step, ScalingStrategy::rapid_taper, ScalingStrategy::modest_shift})
        if (to_string(s) == name) return s;
    throw ConfigError("unknown CLP strategy '" + std::string(name) +
                      "' (expected steady_step, rapid_taper or modest_shift)");
}

ClpConfig ClpConfig::defaults_for(ScalingStrategy strategy) {
    ClpConfig c;
    c.strategy = strategy;
    switch (strategy) {
        case ScalingStrategy::steady_step: c.alpha = 0.01; c.beta = 2.0; break;
        case ScalingStrategy::rapid_taper: c.alpha = 2.0; c.beta = 0.01; break;
        case ScalingStrategy::modest_shift: c.alpha = 0.015; c.beta = 0.015; break;
    }
    return c;
}

void ClpConfig::validate() const {
    if (window < 1) throw ConfigError("clp.window must be >= 1");
    if (!(threshold > 0.0)) throw ConfigError("clp.threshold must be > 0");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("clp.alpha must be > 0");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("clp.beta must be > 0");
    if (!(initial_fraction > 0.0 && initial_fraction <= 1.0))
        throw ConfigError("clp.initial_fraction must lie in (0, 1]");
    if (k_min && *k_min < 1) throw ConfigError("clp.k_min must be >= 1");
    if (k_min && k_max && *k_min > *k_max) throw ConfigError("clp.k_min must not exceed clp.k_max");
}

long long round_half_up(double x) { return static_cast<long long>(std::floor(x + 0.5)); }

CountBounds resolve_bounds(const ClpConfig& config, std::size_t n_pool) {
    CountBounds b;
    b.k_max = config.k_max.value_or(n_pool);
    b.k_min = config.k_min.value_or(
        static_cast<std::size_t>(std::max<long long>(1, round_half_up(0.10 * static_cast<double>(n_pool)))));
    if (b.k_min < 1 || b.k_min > b.k_max)
        throw ConfigError("CLP bounds need 1 <= k_min <= k_max (k_min " + std::to_string(b.k_min) + ", k_max " +
                          std::to_string(b.k_max) + ")");
    if (b.k_max > n_pool)
        throw ConfigError("clp.k_max " + std::to_string(b.k_max) + " exceeds the pool of " + std::to_string(n_pool));
    return b;
}

std::optional<double> smoothed_derivative(std::span<const double> curve, std::size_t window) {
    if (window < 1 || curve.size() < window + 1) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = curve.size() - window; i < curve.size(); ++i) sum += std::abs(curve[i] - curve[i - 1]);
    return sum / static_cast<double>(window);
}

bool clp_ended(std::span<const double> curve, std::size_t window, double threshold) {
    const auto mu = smoothed_derivative(curve, window);
    return mu && *mu < threshold;
}

std::size_t participant_count(const ClpConfig& config, std::size_t round, bool clp_active,
                              std::size_t prev_count, std::size_t n_pool) {
    config.validate();
    if (round < 1) throw ConfigError("rounds are numbered from 1");
    const auto bounds = resolve_bounds(config, n_pool);
    auto clamp = [&](long long k) {
        return static_cast<std::size_t>(std::clamp<long long>(k, static_cast<long long>(bounds.k_min),
                                                              static_cast<long long>(bounds.k_max)));
    };
    const auto n = static_cast<double>(n_pool);
    if (round == 1) return clamp(round_half_up(config.initial_fraction * n));

    const auto prev = static_cast<long long>(prev_count);
    if (clp_active) {
        if (config.strategy == ScalingStrategy::rapid_taper)
            return clamp(round_half_up(config.alpha * static_cast<double>(prev)));
        return clamp(prev + round_half_up(config.alpha * n));
    }
    if (prev_count <= bounds.k_min) return bounds.k_min;
    if (config.strategy == ScalingStrategy::steady_step)
        return clamp(round_half_up(static_cast<double>(prev) / config.beta));
    return clamp(prev - round_half_up(config.beta * n));
}

ClpController::ClpController(ClpConfig config, std::size_t n_pool) : config_(config), n_pool_(n_pool) {
    config_.validate();
    resolve_bounds(config_, n_pool_);
}

std::size_t ClpController::next_count() {
    ++round_;
    prev_count_ = participant_count(config_, round_, active(), prev_count_, n_pool_);
    return prev_count_;
}

bool ClpController::observe(double accuracy) {
    curve_.append(accuracy);
    if (!active()) return false;
    const auto mu = smoothed_derivative(curve_.values(), config_.window);
    if (mu && *mu < config_.threshold) {
        end_round_ = curve_.size();
        mu_at_end_ = *mu;
        return true;
    }
    return false;
}

}  // namespace fedsel
