#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gea/codec/action_space.hpp"
#include "gea/numerics/graph.hpp"
#include "gea/numerics/params.hpp"
#include "gea/numerics/rng.hpp"

namespace gea::codec {

struct RvqConfig {
    int num_levels = 2;        // codebooks
    int codebook_size = 512;   // codes per level
    int code_dim = 64;         // latent dimension
    int max_action_dim = kMaxActionDim;
    int token_base = 512;      // first reserved vocabulary id
    std::vector<int> hidden = {256, 256, 256};  // shared by encoder and mirrored decoder
    double commitment_weight = 1.0;

    void validate() const;
};

/// Residual VQ-VAE over padded action vectors. All levels share one reserved
/// id range [token_base, token_base + codebook_size); the level of a token is
/// given by its position within the emitted group.
class RvqCodec {
public:
    RvqCodec(RvqConfig cfg, num::Rng& init_rng);

    const RvqConfig& config() const { return cfg_; }

    /// Greedy nearest-code residual encoding; ties break to the lowest index.
    std::vector<int> encode(const PaddedAction& action) const;
    /// Decodes token ids and truncates to the embodiment dimension.
    std::vector<double> decode(const std::vector<int>& tokens, int dim) const;

    /// Per-dimension standardization applied before encoding (stored in the file).
    void set_normalization(std::vector<double> mean, std::vector<double> stddev);
    const std::vector<double>& norm_mean() const { return mean_; }
    const std::vector<double>& norm_std() const { return std_; }

    /// Encoder output for a normalized input row (no quantization).
    std::vector<double> encode_latent(const std::vector<double>& normalized) const;
    /// Nearest-code index within one level for an arbitrary residual.
    int nearest_code(int level, const std::vector<double>& residual) const;
    std::vector<double> normalize(const PaddedAction& action) const;

    /// Full round trip in normalized space; returns per-dimension squared error
    /// of one action (mean over max_action_dim), used for held-out evaluation.
    double reconstruction_error(const PaddedAction& action) const;

    num::ParamStore& params() { return params_; }
    const num::ParamStore& params() const { return params_; }

    /// Tape builders used by the trainer (and gradient tests).
    num::Graph::NodeId build_encoder(num::Graph& g, num::Graph::NodeId input,
                                     const std::vector<num::Graph::NodeId>& weights) const;
    num::Graph::NodeId build_decoder(num::Graph& g, num::Graph::NodeId latent,
                                     const std::vector<num::Graph::NodeId>& weights) const;
    std::vector<std::string> encoder_param_names() const;
    std::vector<std::string> decoder_param_names() const;
    std::string codebook_param_name(int level) const;

    /// Rounds every parameter and statistic through f32 so that the on-disk
    /// f32 format round-trips bit-exactly.
    void round_to_f32();

    void save(const std::string& path) const;
    static RvqCodec load(const std::string& path);

private:
    std::vector<double> run_mlp(const std::vector<std::string>& names,
                                const std::vector<double>& input) const;

    RvqConfig cfg_;
    num::ParamStore params_;
    std::vector<double> mean_;
    std::vector<double> std_;
};

}  // namespace gea::codec
