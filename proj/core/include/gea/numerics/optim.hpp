#pragma once

#include <cstdint>
#include <string>

#include "gea/numerics/tensor.hpp"

namespace gea::num {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Per-parameter AdamW state; moment buffers match the parameter shape.
struct AdamWState {
    std::int64_t step = 0;
    Tensor m;
    Tensor v;
};

/// One AdamW update with decoupled weight decay. Rejects non-finite
/// gradients, naming the parameter.
void adamw_step(Tensor& param, const Tensor& grad, AdamWState& state, const AdamWConfig& cfg,
                const std::string& name);

/// Linear warmup to peak over the first warmup_frac * total steps, then
/// cosine decay to 0 at t = total.
struct LrSchedule {
    double peak = 1e-3;
    std::int64_t total = 1;
    double warmup_frac = 0.10;
};

double lr_at(const LrSchedule& s, std::int64_t t);

}  // namespace gea::num
