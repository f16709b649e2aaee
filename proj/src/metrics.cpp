#include <algorithm>

#include "fedsel/engine.hpp"
#include "fedsel/error.hpp"

namespace fedsel {

std::vector<double> accuracy_curve(const ExperimentResult& result) {
    std::vector<double> curve;
    curve.reserve(result.rounds.size());
    for (const auto& r : result.rounds) curve.push_back(r.accuracy);
    return curve;
}

std::optional<std::size_t> rounds_to_accuracy(std::span<const double> curve, double target) {
    for (std::size_t i = 0; i < curve.size(); ++i)
        if (curve[i] >= target) return i + 1;
    return std::nullopt;
}

std::optional<std::size_t> rounds_to_accuracy(const ExperimentResult& result, double target) {
    const auto curve = accuracy_curve(result);
    return rounds_to_accuracy(curve, target);
}

std::optional<double> cost_to_accuracy(const ExperimentResult& result, double target) {
    const auto r = rounds_to_accuracy(result, target);
    if (!r) return std::nullopt;
    return result.rounds[*r - 1].cumulative_emissions;
}

std::size_t convergence_round(std::span<const double> curve, double min_delta, std::size_t patience) {
    if (patience < 1) throw ConfigError("patience must be >= 1");
    double best_before = -1.0;
    for (std::size_t r = patience + 1; r <= curve.size(); ++r) {
        // best_before covers rounds 1..r-patience
        best_before = std::max(best_before, curve[r - patience - 1]);
        const double recent = *std::max_element(curve.begin() + static_cast<std::ptrdiff_t>(r - patience),
                                                curve.begin() + static_cast<std::ptrdiff_t>(r));
        if (recent - best_before < min_delta) return r;
    }
    return curve.size();
}

std::size_t convergence_round(const ExperimentResult& result, double min_delta, std::size_t patience) {
    const auto curve = accuracy_curve(result);
    return convergence_round(curve, min_delta, patience);
}

double convergence_accuracy(std::span<const double> curve, double min_delta, std::size_t patience) {
    if (curve.empty()) return 0.0;
    const auto end = convergence_round(curve, min_delta, patience);
    const auto begin = end > patience ? end - patience : 0;
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) sum += curve[i];
    return sum / static_cast<double>(end - begin);
}

}  // namespace fedsel
