#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "gea/numerics/optim.hpp"
#include "gea/numerics/tensor.hpp"

namespace gea::num {

/// Named parameter tensors with their optimizer state, iterated in insertion
/// order so updates and serialization are deterministic.
class ParamStore {
public:
    void add(const std::string& name, Tensor init);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    AdamWState& state(const std::string& name);
    void remove(const std::string& name);

    const std::vector<std::string>& names() const { return order_; }
    std::size_t total_params() const;

    void apply(const std::string& name, const Tensor& grad, const AdamWConfig& cfg);
    void reset_optimizer();

    /// FNV-1a over the raw bytes of every parameter, in insertion order.
    std::uint64_t checksum() const;
    /// Checksum of the subset whose name starts with the given prefix.
    std::uint64_t checksum_prefix(const std::string& prefix) const;

    /// Binary round trip of values (+ optionally optimizer state).
    void write(std::ostream& os, bool with_optimizer) const;
    void read(std::istream& is, bool with_optimizer);

private:
    struct Entry {
        Tensor value;
        AdamWState opt;
    };
    std::vector<std::string> order_;
    std::unordered_map<std::string, Entry> index_;
};

}  // namespace gea::num
