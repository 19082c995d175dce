#pragma once

#include <string>
#include <vector>

namespace gea::codec {

inline constexpr int kMaxActionDim = 21;

/// One embodiment's action interface: either a closed set of action strings
/// or a bounded continuous vector space.
struct ActionSpaceSpec {
    enum class Kind { Discrete, Continuous };

    std::string name;
    Kind kind = Kind::Discrete;
    int dim = 0;                        // continuous only
    std::vector<std::string> actions;   // discrete only
    std::vector<double> low;            // per-dimension bounds, continuous only
    std::vector<double> high;

    bool discrete() const { return kind == Kind::Discrete; }
    void validate(int max_dim = kMaxActionDim) const;
};

/// Continuous action zero-padded to the shared maximum dimension.
struct PaddedAction {
    std::vector<double> values;  // length == max dim
    int original_dim = 0;
};

/// Copies the first d entries and zero-fills the rest. Rejects d == 0 and
/// d > max_dim, naming the embodiment.
PaddedAction pad(const std::vector<double>& action, int max_dim, const std::string& embodiment);

/// First d entries of a decoded padded vector (right truncation).
std::vector<double> truncate(const PaddedAction& decoded, int d);
std::vector<double> truncate(const std::vector<double>& decoded, int d);

}  // namespace gea::codec
