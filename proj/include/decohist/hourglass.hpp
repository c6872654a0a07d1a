#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "decohist/rng.hpp"

namespace decohist {

enum class DropDistribution { uniform, clustered };

inline DropDistribution drop_distribution_from_name(const std::string& name) {
    if (name == "uniform") return DropDistribution::uniform;
    if (name == "clustered") return DropDistribution::clustered;
    throw ConfigError("unknown drop-time distribution '" + name + "'");
}

/// One simulated emptying of the hourglass, with the two coarse-grained bit
/// trajectories evaluated on an even sample grid:
///   f(t) = 1 iff strictly more than half the sand is still on top,
///   g(t) = 1 iff an odd number of grains is still on top.
struct HourglassRun {
    std::size_t grain_count = 0;
    double horizon = 0.0;
    std::vector<double> drop_times;  // unsorted draw order
    std::vector<double> sample_grid; // evenly spaced over [0, horizon]
    std::vector<std::uint8_t> f_trajectory;
    std::vector<std::uint8_t> g_trajectory;
    bool grid_undersampled = false;  // some adjacent drops share a grid cell

    std::size_t top_count_at(double t) const {
        std::size_t n = 0;
        for (double d : drop_times)
            if (d > t) ++n;
        return n;
    }
};

namespace detail {

inline void evaluate_trajectories(HourglassRun& run) {
    std::vector<double> sorted = run.drop_times;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = run.grain_count;
    run.f_trajectory.resize(run.sample_grid.size());
    run.g_trajectory.resize(run.sample_grid.size());
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < run.sample_grid.size(); ++i) {
        const double t = run.sample_grid[i];
        while (dropped < sorted.size() && sorted[dropped] <= t) ++dropped;
        const std::size_t top = m - dropped;
        run.f_trajectory[i] = (2 * top > m) ? 1 : 0;
        run.g_trajectory[i] = (top % 2 == 1) ? 1 : 0;
    }
    // Report (never hide) grid cells that swallow more than one drop.
    const double cell = run.horizon / static_cast<double>(run.sample_grid.size() - 1);
    run.grid_undersampled = false;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i] - sorted[i - 1] < cell) run.grid_undersampled = true;
}

} // namespace detail

/// Draws i.i.d. drop times and evaluates both trajectories on a 1000-point
/// grid. The uniform distribution spans [0, 0.9 * horizon]; the clustered one
/// is a truncated normal around 0.45 * horizon.
inline HourglassRun simulate_hourglass(std::size_t grains, double horizon,
                                       DropDistribution distribution, std::uint64_t seed,
                                       std::size_t grid_points = 1000) {
    if (grains < 1) throw ConfigError("hourglass needs at least one grain");
    if (horizon <= 0.0) throw ConfigError("hourglass horizon must be positive");
    if (grid_points < 2) throw ConfigError("hourglass grid needs at least two points");
    Rng rng(seed);
    HourglassRun run;
    run.grain_count = grains;
    run.horizon = horizon;
    run.drop_times.reserve(grains);
    for (std::size_t i = 0; i < grains; ++i) {
        double t;
        if (distribution == DropDistribution::uniform) {
            t = rng.uniform(0.0, 0.9 * horizon);
        } else {
            do {
                t = rng.normal(0.45 * horizon, 0.05 * horizon);
            } while (t <= 0.0 || t > 0.9 * horizon);
        }
        run.drop_times.push_back(t);
    }
    run.sample_grid.resize(grid_points);
    for (std::size_t i = 0; i < grid_points; ++i)
        run.sample_grid[i] = horizon * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    detail::evaluate_trajectories(run);
    return run;
}

/// Exact transition counts from the sorted drop times, independent of the
/// sample grid: f flips once when the top count first falls to <= M/2;
/// g flips at every drop.
struct SwitchCounts {
    std::size_t f_switches = 0;
    std::size_t g_switches = 0;
};

inline SwitchCounts count_switches(const HourglassRun& run) {
    std::vector<double> sorted = run.drop_times;
    std::sort(sorted.begin(), sorted.end());
    SwitchCounts counts;
    const std::size_t m = run.grain_count;
    bool f_prev = (2 * m > m);
    std::size_t g_prev = m % 2;
    for (std::size_t k = 1; k <= sorted.size(); ++k) {
        const std::size_t top = m - k;
        const bool f_now = 2 * top > m;
        if (f_now != f_prev) ++counts.f_switches;
        f_prev = f_now;
        if (top % 2 != g_prev) ++counts.g_switches;
        g_prev = top % 2;
    }
    return counts;
}

struct StabilityReport {
    double f_disagreement = 0.0; // grid fraction, averaged over trials
    double g_disagreement = 0.0;
    std::size_t f_switches = 0;  // from the base run's sorted drop times
    std::size_t g_switches = 0;
    std::size_t trials = 0;
    double perturbation_scale = 0.0;
};

/// Reruns the trajectories with the emptying process perturbed and reports
/// how often each coarse-grained bit disagrees with the base run. The
/// perturbation acts on the initial configuration: each inter-drop gap is
/// jittered by uniform +-perturbation_scale, so each grain's release shifts
/// relative to the one before it and timing errors accumulate downstream --
/// which is exactly what makes the fine-grained parity bit fragile while the
/// one-transition majority bit barely moves.
inline StabilityReport stability_metrics(const HourglassRun& base, double perturbation_scale,
                                         std::size_t trials, std::uint64_t seed) {
    if (perturbation_scale < 0.0) throw ConfigError("perturbation scale must be nonnegative");
    if (trials < 1) throw ConfigError("stability_metrics needs at least one trial");
    StabilityReport report;
    report.trials = trials;
    report.perturbation_scale = perturbation_scale;
    const auto counts = count_switches(base);
    report.f_switches = counts.f_switches;
    report.g_switches = counts.g_switches;
    std::vector<double> sorted = base.drop_times;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = Rng::derive(seed, trial);
        HourglassRun jittered = base;
        jittered.drop_times.clear();
        double shift = 0.0;
        for (double t : sorted) {
            shift += rng.uniform(-perturbation_scale, perturbation_scale);
            jittered.drop_times.push_back(std::max(0.0, t + shift));
        }
        detail::evaluate_trajectories(jittered);
        std::size_t f_diff = 0, g_diff = 0;
        for (std::size_t i = 0; i < base.sample_grid.size(); ++i) {
            if (jittered.f_trajectory[i] != base.f_trajectory[i]) ++f_diff;
            if (jittered.g_trajectory[i] != base.g_trajectory[i]) ++g_diff;
        }
        report.f_disagreement += static_cast<double>(f_diff) / base.sample_grid.size();
        report.g_disagreement += static_cast<double>(g_diff) / base.sample_grid.size();
    }
    report.f_disagreement /= static_cast<double>(trials);
    report.g_disagreement /= static_cast<double>(trials);
    return report;
}

} // namespace decohist
