#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace gea::num {

/// Deterministic RNG with portable sampling. std:: distributions are
/// implementation-defined, so uniform/normal/categorical are derived here
/// directly from the raw 64-bit stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    /// Derives an independent child stream, e.g. rng.fork("rollout/3").
    Rng fork(std::string_view tag) const;

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n), n >= 1.
    std::uint64_t uniform_int(std::uint64_t n);
    /// Standard normal via Box-Muller (no cached spare; deterministic).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Index sampled proportionally to weights (all >= 0, sum > 0).
    int categorical(const std::vector<double>& weights);
    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

/// splitmix64 hash step, also used for seed derivation.
std::uint64_t split_mix64(std::uint64_t x);

}  // namespace gea::num
