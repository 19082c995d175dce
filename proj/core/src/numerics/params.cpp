#include "gea/numerics/params.hpp"

#include <stdexcept>

#include "gea/numerics/binio.hpp"

namespace gea::num {

void ParamStore::add(const std::string& name, Tensor init) {
    if (has(name)) throw std::runtime_error("params: duplicate parameter '" + name + "'");
    order_.push_back(name);
    index_.emplace(name, Entry{std::move(init), AdamWState{}});
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("params: unknown parameter '" + name + "'");
    return it->second.value;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("params: unknown parameter '" + name + "'");
    return it->second.value;
}

AdamWState& ParamStore::state(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("params: unknown parameter '" + name + "'");
    return it->second.opt;
}

void ParamStore::remove(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("params: unknown parameter '" + name + "'");
    index_.erase(it);
    for (auto o = order_.begin(); o != order_.end(); ++o) {
        if (*o == name) {
            order_.erase(o);
            break;
        }
    }
}

std::size_t ParamStore::total_params() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += index_.at(name).value.numel();
    return n;
}

void ParamStore::apply(const std::string& name, const Tensor& grad, const AdamWConfig& cfg) {
    Entry& e = index_.at(name);
    adamw_step(e.value, grad, e.opt, cfg, name);
}

void ParamStore::reset_optimizer() {
    for (auto& [_, e] : index_) e.opt = AdamWState{};
}

static std::uint64_t fnv1a(std::uint64_t h, const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t ParamStore::checksum() const { return checksum_prefix(""); }

std::uint64_t ParamStore::checksum_prefix(const std::string& prefix) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& name : order_) {
        if (name.rfind(prefix, 0) != 0) continue;
        h = fnv1a(h, name.data(), name.size());
        const Tensor& t = index_.at(name).value;
        h = fnv1a(h, t.data.data(), t.data.size() * sizeof(double));
    }
    return h;
}

static void write_tensor(std::ostream& os, const Tensor& t) {
    io::write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int e : t.shape) io::write_u32(os, static_cast<std::uint32_t>(e));
    for (double v : t.data) io::write_f64(os, v);
}

static Tensor read_tensor(std::istream& is) {
    const std::uint32_t rank = io::read_u32(is);
    if (rank > 8) io::corrupt("tensor rank out of range");
    std::vector<int> shape(rank);
    for (auto& e : shape) e = static_cast<int>(io::read_u32(is));
    Tensor t(shape);
    for (double& v : t.data) v = io::read_f64(is);
    return t;
}

void ParamStore::write(std::ostream& os, bool with_optimizer) const {
    io::write_u64(os, order_.size());
    io::write_u32(os, with_optimizer ? 1 : 0);
    for (const auto& name : order_) {
        const Entry& e = index_.at(name);
        io::write_string(os, name);
        write_tensor(os, e.value);
        if (with_optimizer) {
            io::write_u64(os, static_cast<std::uint64_t>(e.opt.step));
            write_tensor(os, e.opt.m.numel() ? e.opt.m : Tensor({0}));
            write_tensor(os, e.opt.v.numel() ? e.opt.v : Tensor({0}));
        }
    }
}

void ParamStore::read(std::istream& is, bool with_optimizer) {
    order_.clear();
    index_.clear();
    const std::uint64_t count = io::read_u64(is);
    const std::uint32_t has_opt = io::read_u32(is);
    if (with_optimizer && !has_opt) io::corrupt("parameter block lacks optimizer state");
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = io::read_string(is);
        Entry e;
        e.value = read_tensor(is);
        if (has_opt) {
            e.opt.step = static_cast<std::int64_t>(io::read_u64(is));
            e.opt.m = read_tensor(is);
            e.opt.v = read_tensor(is);
            if (e.opt.m.numel() == 0) e.opt = AdamWState{};
        }
        order_.push_back(name);
        index_.emplace(name, std::move(e));
    }
}

}  // namespace gea::num
