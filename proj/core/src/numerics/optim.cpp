#include "gea/numerics/optim.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace gea::num {

void adamw_step(Tensor& param, const Tensor& grad, AdamWState& state, const AdamWConfig& cfg,
                const std::string& name) {
    if (!param.same_shape(grad) && param.numel() != grad.numel())
        throw std::runtime_error("adamw: gradient shape mismatch for '" + name + "'");
    if (cfg.lr < 0.0) throw std::runtime_error("adamw: negative learning rate");
    if (!grad.all_finite())
        throw std::runtime_error("adamw: non-finite gradient for parameter '" + name + "'");
    if (state.m.numel() == 0) {
        state.m = Tensor(param.shape);
        state.v = Tensor(param.shape);
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = grad.data[i];
        state.m.data[i] = cfg.beta1 * state.m.data[i] + (1.0 - cfg.beta1) * g;
        state.v.data[i] = cfg.beta2 * state.v.data[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m.data[i] / bc1;
        const double vhat = state.v.data[i] / bc2;
        param.data[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * param.data[i]);
    }
}

double lr_at(const LrSchedule& s, std::int64_t t) {
    if (t > s.total) {
        std::fprintf(stderr, "warning: lr_at(t=%lld) beyond schedule end %lld; clamping to 0\n",
                     static_cast<long long>(t), static_cast<long long>(s.total));
        return 0.0;
    }
    const auto warmup = static_cast<std::int64_t>(s.warmup_frac * static_cast<double>(s.total));
    if (warmup > 0 && t < warmup) return s.peak * static_cast<double>(t) / static_cast<double>(warmup);
    if (s.total == warmup) return s.peak;
    const double progress = static_cast<double>(t - warmup) / static_cast<double>(s.total - warmup);
    return s.peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace gea::num
