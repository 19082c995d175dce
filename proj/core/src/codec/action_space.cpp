#include "gea/codec/action_space.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace gea::codec {

void ActionSpaceSpec::validate(int max_dim) const {
    if (name.empty()) throw std::runtime_error("action space: empty embodiment name");
    if (kind == Kind::Continuous) {
        if (dim < 1 || dim > max_dim)
            throw std::runtime_error("action space '" + name + "': dim " + std::to_string(dim) +
                                     " outside [1, " + std::to_string(max_dim) + "]");
        if (low.size() != static_cast<std::size_t>(dim) || high.size() != static_cast<std::size_t>(dim))
            throw std::runtime_error("action space '" + name + "': bounds length != dim");
        for (int i = 0; i < dim; ++i)
            if (!(low[i] < high[i]))
                throw std::runtime_error("action space '" + name + "': empty bound at dim " + std::to_string(i));
    } else {
        if (actions.empty()) throw std::runtime_error("action space '" + name + "': no discrete actions");
        std::unordered_set<std::string> seen;
        for (const auto& a : actions) {
            if (a.empty()) throw std::runtime_error("action space '" + name + "': empty action string");
            if (!seen.insert(a).second)
                throw std::runtime_error("action space '" + name + "': duplicate action '" + a + "'");
        }
    }
}

PaddedAction pad(const std::vector<double>& action, int max_dim, const std::string& embodiment) {
    const int d = static_cast<int>(action.size());
    if (d == 0)
        throw std::runtime_error("pad: embodiment '" + embodiment + "' produced a 0-dimensional action");
    if (d > max_dim)
        throw std::runtime_error("pad: embodiment '" + embodiment + "' action dim " + std::to_string(d) +
                                 " exceeds max " + std::to_string(max_dim));
    for (double v : action)
        if (!std::isfinite(v))
            throw std::runtime_error("pad: embodiment '" + embodiment + "' action has non-finite entry");
    PaddedAction out;
    out.original_dim = d;
    out.values.assign(static_cast<std::size_t>(max_dim), 0.0);
    for (int i = 0; i < d; ++i) out.values[i] = action[i];
    return out;
}

std::vector<double> truncate(const std::vector<double>& decoded, int d) {
    if (d < 0 || d > static_cast<int>(decoded.size()))
        throw std::runtime_error("truncate: dim " + std::to_string(d) + " exceeds vector length " +
                                 std::to_string(decoded.size()));
    return std::vector<double>(decoded.begin(), decoded.begin() + d);
}

std::vector<double> truncate(const PaddedAction& decoded, int d) { return truncate(decoded.values, d); }

}  // namespace gea::codec
