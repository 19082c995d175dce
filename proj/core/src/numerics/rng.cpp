#include "gea/numerics/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gea::num {

std::uint64_t split_mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t Rng::next_u64() {
    state_ = split_mix64(state_ + 0x632be59bd9b4e019ull);
    return state_;
}

Rng Rng::fork(std::string_view tag) const {
    std::uint64_t h = state_ ^ 0x51afd7ed558ccd6dull;
    for (char c : tag) h = split_mix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    return Rng(split_mix64(h));
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::runtime_error("rng: uniform_int(0)");
    // Rejection-free would bias; use rejection over the top multiple of n.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double Rng::normal() {
    // Box-Muller; u clamped away from 0 so log stays finite.
    double u = uniform();
    if (u < 1e-300) u = 1e-300;
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

int Rng::categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) throw std::runtime_error("rng: bad categorical weight");
        total += w;
    }
    if (total <= 0.0) throw std::runtime_error("rng: categorical weights sum to zero");
    const double r = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

}  // namespace gea::num
