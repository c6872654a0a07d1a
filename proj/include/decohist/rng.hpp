#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "decohist/errors.hpp"

namespace decohist {

/// Seeded random source shared by all sampling paths. All draws go through
/// the methods below so a fixed seed reproduces a run exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    std::size_t index_below(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    /// Draws an index with probability proportional to the given weights.
    std::size_t weighted_index(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += (w > 0.0 ? w : 0.0);
        if (total <= 0.0) throw ValidationError("weighted_index: all weights are zero");
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            u -= weights[i];
            if (u <= 0.0) return i;
        }
        return weights.size() - 1;
    }

    template <class T> void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i)
            std::swap(items[i - 1], items[index_below(i)]);
    }

    /// Independent stream for a sub-task, reproducible from (seed, salt).
    static Rng derive(std::uint64_t seed, std::uint64_t salt) {
        std::seed_seq seq{seed, salt};
        std::uint64_t mixed[2];
        seq.generate(mixed, mixed + 2);
        return Rng((mixed[0] << 32) ^ mixed[1]);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace decohist
