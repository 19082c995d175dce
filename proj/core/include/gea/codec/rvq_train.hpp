#pragma once

#include <cstdint>
#include <vector>

#include "gea/codec/rvq.hpp"

namespace gea::codec {

struct CodecTrainConfig {
    int updates = 3000;
    int batch_size = 64;
    double lr = 1e-3;
    double warmup_frac = 0.10;
    double weight_decay = 0.0;
    double holdout_frac = 0.10;
    int eval_every = 250;  // also the checkpoint cadence for NaN recovery
    bool reseed_dead_codes = true;
    std::uint64_t seed = 0;
    bool verbose = false;
};

struct CodecTrainLog {
    std::vector<double> train_loss;                    // one entry per update
    std::vector<std::pair<int, double>> holdout_mse;   // (update, per-dim MSE)
    bool aborted_nan = false;
    int final_update = 0;

    /// Moving average of the last `window` losses ending at step (1-based).
    double smoothed_loss(int step, int window = 100) const;
};

/// Trains MSE + commitment with the stop-gradient codebook loss and the
/// straight-through estimator; AdamW with linear warmup and cosine decay to 0.
RvqCodec train_codec(const std::vector<PaddedAction>& dataset, const RvqConfig& cfg,
                     const CodecTrainConfig& train_cfg, CodecTrainLog* log = nullptr);

/// Synthetic 3-embodiment action mixture (dims 2, 4 and 7) used for codec
/// quality checks: per-embodiment correlated structure, equal mixture weights.
std::vector<PaddedAction> synthetic_action_mixture(int count, int max_dim, std::uint64_t seed);

}  // namespace gea::codec
