#include "gea/codec/rvq_train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "gea/numerics/graph.hpp"
#include "gea/numerics/optim.hpp"

namespace gea::codec {

using num::Graph;
using num::Tensor;

double CodecTrainLog::smoothed_loss(int step, int window) const {
    if (step < window || step > static_cast<int>(train_loss.size()))
        throw std::runtime_error("codec log: smoothing window out of range");
    double acc = 0.0;
    for (int i = step - window; i < step; ++i) acc += train_loss[static_cast<std::size_t>(i)];
    return acc / window;
}

std::vector<PaddedAction> synthetic_action_mixture(int count, int max_dim, std::uint64_t seed) {
    num::Rng rng(num::split_mix64(seed ^ 0xac710235u));
    std::vector<PaddedAction> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int family = static_cast<int>(rng.uniform_int(3));
        std::vector<double> a;
        if (family == 0) {
            const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
            a = {0.8 * std::cos(th) + 0.1 * rng.normal(), 0.8 * std::sin(th) + 0.1 * rng.normal()};
        } else if (family == 1) {
            const double u = rng.normal(), v = rng.normal();
            a = {0.5 * u, 0.3 * u + 0.2 * v, -0.4 * u + 0.1 * v, 0.25 * v};
        } else {
            const double amp = rng.uniform(0.3, 1.0);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            a.resize(7);
            for (int j = 0; j < 7; ++j) a[static_cast<std::size_t>(j)] = amp * std::sin(phase + 0.9 * j) + 0.05 * rng.normal();
        }
        out.push_back(pad(a, max_dim, family == 0 ? "mix2" : family == 1 ? "mix4" : "mix7"));
    }
    return out;
}

namespace {

struct QuantizedBatch {
    std::vector<std::vector<int>> codes;          // [level][row]
    std::vector<Tensor> prefixes;                 // [level]: sum of codes < level, per row
    std::vector<Tensor> selected;                 // [level]: chosen code vectors per row
    Tensor delta;                                 // q - z (straight-through shift)
};

QuantizedBatch quantize_batch(const RvqCodec& codec, const Tensor& z) {
    const auto& cfg = codec.config();
    const int B = z.rows(), D = z.cols();
    QuantizedBatch out;
    out.codes.assign(static_cast<std::size_t>(cfg.num_levels), std::vector<int>(static_cast<std::size_t>(B)));
    out.prefixes.assign(static_cast<std::size_t>(cfg.num_levels), Tensor({B, D}));
    out.selected.assign(static_cast<std::size_t>(cfg.num_levels), Tensor({B, D}));
    out.delta = Tensor({B, D});
    std::vector<double> r(static_cast<std::size_t>(D));
    for (int b = 0; b < B; ++b) {
        for (int j = 0; j < D; ++j) r[static_cast<std::size_t>(j)] = z.at(b, j);
        for (int m = 0; m < cfg.num_levels; ++m) {
            for (int j = 0; j < D; ++j) out.prefixes[m].at(b, j) = z.at(b, j) - r[static_cast<std::size_t>(j)];
            const int k = codec.nearest_code(m, r);
            out.codes[m][static_cast<std::size_t>(b)] = k;
            const Tensor& book = codec.params().get(codec.codebook_param_name(m));
            for (int j = 0; j < D; ++j) {
                const double c = book.at(k, j);
                out.selected[m].at(b, j) = c;
                r[static_cast<std::size_t>(j)] -= c;
                out.delta.at(b, j) += c;
            }
        }
        for (int j = 0; j < D; ++j) out.delta.at(b, j) -= z.at(b, j);
    }
    return out;
}

}  // namespace

RvqCodec train_codec(const std::vector<PaddedAction>& dataset, const RvqConfig& cfg,
                     const CodecTrainConfig& tc, CodecTrainLog* log) {
    if (dataset.empty()) throw std::runtime_error("train_codec: empty dataset");
    cfg.validate();
    if (tc.updates < 1 || tc.batch_size < 1) throw std::runtime_error("train_codec: bad config");

    num::Rng rng(num::split_mix64(tc.seed ^ 0x52765143u));

    std::vector<int> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    const int n_holdout = std::min(static_cast<int>(dataset.size()) - 1,
                                   static_cast<int>(tc.holdout_frac * static_cast<double>(dataset.size())));
    std::vector<int> holdout(order.begin(), order.begin() + n_holdout);
    std::vector<int> train(order.begin() + n_holdout, order.end());
    if (train.empty()) throw std::runtime_error("train_codec: no training samples after holdout split");

    // Per-dimension standardization from the training split; degenerate
    // (constant) dims get stddev 1 so padding stays exactly zero.
    const int D = cfg.max_action_dim;
    std::vector<double> mean(static_cast<std::size_t>(D), 0.0), sq(static_cast<std::size_t>(D), 0.0);
    for (int idx : train)
        for (int j = 0; j < D; ++j) mean[static_cast<std::size_t>(j)] += dataset[static_cast<std::size_t>(idx)].values[static_cast<std::size_t>(j)];
    for (double& v : mean) v /= static_cast<double>(train.size());
    for (int idx : train)
        for (int j = 0; j < D; ++j) {
            const double d = dataset[static_cast<std::size_t>(idx)].values[static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)];
            sq[static_cast<std::size_t>(j)] += d * d;
        }
    std::vector<double> stddev(static_cast<std::size_t>(D));
    for (int j = 0; j < D; ++j) {
        const double s = std::sqrt(sq[static_cast<std::size_t>(j)] / static_cast<double>(train.size()));
        stddev[static_cast<std::size_t>(j)] = s < 1e-6 ? 1.0 : s;
    }

    num::Rng init_rng = rng.fork("init");
    RvqCodec codec(cfg, init_rng);
    codec.set_normalization(mean, stddev);

    // Seed the first codebook from encoder outputs of real samples.
    {
        num::Rng pick = rng.fork("book-init");
        Tensor& book0 = codec.params().get(codec.codebook_param_name(0));
        for (int k = 0; k < cfg.codebook_size; ++k) {
            const int idx = train[static_cast<std::size_t>(pick.uniform_int(train.size()))];
            const auto z = codec.encode_latent(codec.normalize(dataset[static_cast<std::size_t>(idx)]));
            for (int j = 0; j < cfg.code_dim; ++j) book0.at(k, j) = z[static_cast<std::size_t>(j)] + 0.01 * pick.normal();
        }
    }

    num::LrSchedule schedule{tc.lr, tc.updates, tc.warmup_frac};
    num::AdamWConfig opt;
    opt.weight_decay = tc.weight_decay;

    const auto enc_names = codec.encoder_param_names();
    const auto dec_names = codec.decoder_param_names();

    auto holdout_mse = [&]() {
        if (holdout.empty()) return 0.0;
        double acc = 0.0;
        for (int idx : holdout) acc += codec.reconstruction_error(dataset[static_cast<std::size_t>(idx)]);
        return acc / static_cast<double>(holdout.size());
    };

    num::ParamStore snapshot = codec.params();
    num::Rng batch_rng = rng.fork("batches");
    num::Rng reseed_rng = rng.fork("reseed");
    const int epoch_updates = std::max(1, static_cast<int>(train.size()) / tc.batch_size);
    std::vector<std::vector<char>> used(static_cast<std::size_t>(cfg.num_levels),
                                        std::vector<char>(static_cast<std::size_t>(cfg.codebook_size), 0));
    // Residual pool per level for reseeding dead codes.
    std::vector<Tensor> last_residuals(static_cast<std::size_t>(cfg.num_levels));

    if (log) {
        log->train_loss.clear();
        log->holdout_mse.clear();
    }

    for (int update = 0; update < tc.updates; ++update) {
        const int B = tc.batch_size;
        Tensor x({B, D});
        for (int b = 0; b < B; ++b) {
            const int idx = train[static_cast<std::size_t>(batch_rng.uniform_int(train.size()))];
            const auto row = codec.normalize(dataset[static_cast<std::size_t>(idx)]);
            for (int j = 0; j < D; ++j) x.at(b, j) = row[static_cast<std::size_t>(j)];
        }

        Graph g;
        auto x_id = g.constant(x, "batch");
        std::vector<Graph::NodeId> enc_ids, dec_ids;
        for (const auto& n : enc_names) enc_ids.push_back(g.input(codec.params().get(n), n));
        auto z = codec.build_encoder(g, x_id, enc_ids);

        QuantizedBatch qb = quantize_batch(codec, g.value(z));
        for (int m = 0; m < cfg.num_levels; ++m) {
            last_residuals[static_cast<std::size_t>(m)] = Tensor({B, cfg.code_dim});
            for (int b = 0; b < B; ++b)
                for (int j = 0; j < cfg.code_dim; ++j)
                    last_residuals[static_cast<std::size_t>(m)].at(b, j) = g.value(z).at(b, j) - qb.prefixes[static_cast<std::size_t>(m)].at(b, j);
            for (int b = 0; b < B; ++b) used[static_cast<std::size_t>(m)][static_cast<std::size_t>(qb.codes[static_cast<std::size_t>(m)][static_cast<std::size_t>(b)])] = 1;
        }

        // Straight-through: decoder sees z + (q - z) with the shift constant.
        auto z_q = g.axpy(z, g.constant(qb.delta, "st-shift"), 1.0);
        for (const auto& n : dec_names) dec_ids.push_back(g.input(codec.params().get(n), n));
        auto recon = codec.build_decoder(g, z_q, dec_ids);
        auto recon_loss = g.squared_error(recon, x, 1.0 / static_cast<double>(B * D));

        std::vector<Graph::NodeId> terms = {recon_loss};
        std::vector<double> coefs = {1.0};
        const double el_scale = 1.0 / static_cast<double>(B * cfg.code_dim);
        for (int m = 0; m < cfg.num_levels; ++m) {
            auto residual = g.axpy(z, g.constant(qb.prefixes[static_cast<std::size_t>(m)], "prefix"), -1.0);
            auto commit = g.squared_error(residual, qb.selected[static_cast<std::size_t>(m)], el_scale);
            terms.push_back(commit);
            coefs.push_back(cfg.commitment_weight);
        }
        auto loss = g.weighted_sum(terms, coefs);
        const double commit_val = g.value(loss).item() - g.value(recon_loss).item();
        // Codebook (dictionary) term has the same value as the commitment term;
        // its gradient is applied manually below.
        const double loss_val = g.value(loss).item() + commit_val;

        if (!std::isfinite(loss_val)) {
            codec.params() = snapshot;
            if (log) log->aborted_nan = true;
            std::fprintf(stderr, "train_codec: non-finite loss at update %d; restoring last checkpoint\n", update);
            break;
        }
        g.backward(loss);

        opt.lr = num::lr_at(schedule, update);
        for (std::size_t i = 0; i < enc_names.size(); ++i) codec.params().apply(enc_names[i], g.grad(enc_ids[i]), opt);
        for (std::size_t i = 0; i < dec_names.size(); ++i) codec.params().apply(dec_names[i], g.grad(dec_ids[i]), opt);

        // Stop-gradient codebook loss: d/dc ||sg[r] - c||^2 = 2 (c - r).
        for (int m = 0; m < cfg.num_levels; ++m) {
            const Tensor& book = codec.params().get(codec.codebook_param_name(m));
            Tensor grad(book.shape);
            for (int b = 0; b < B; ++b) {
                const int k = qb.codes[static_cast<std::size_t>(m)][static_cast<std::size_t>(b)];
                for (int j = 0; j < cfg.code_dim; ++j)
                    grad.at(k, j) += 2.0 * el_scale * (book.at(k, j) - last_residuals[static_cast<std::size_t>(m)].at(b, j));
            }
            codec.params().apply(codec.codebook_param_name(m), grad, opt);
        }

        if (log) {
            log->train_loss.push_back(loss_val);
            log->final_update = update + 1;
        }

        if (tc.reseed_dead_codes && (update + 1) % epoch_updates == 0) {
            for (int m = 0; m < cfg.num_levels; ++m) {
                Tensor& book = codec.params().get(codec.codebook_param_name(m));
                num::AdamWState& st = codec.params().state(codec.codebook_param_name(m));
                for (int k = 0; k < cfg.codebook_size; ++k) {
                    if (used[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)]) continue;
                    const int b = static_cast<int>(reseed_rng.uniform_int(static_cast<std::uint64_t>(tc.batch_size)));
                    for (int j = 0; j < cfg.code_dim; ++j) {
                        book.at(k, j) = last_residuals[static_cast<std::size_t>(m)].at(b, j) + 0.01 * reseed_rng.normal();
                        if (st.m.numel()) {
                            st.m.at(k, j) = 0.0;
                            st.v.at(k, j) = 0.0;
                        }
                    }
                }
                std::fill(used[static_cast<std::size_t>(m)].begin(), used[static_cast<std::size_t>(m)].end(), 0);
            }
        }

        if ((update + 1) % tc.eval_every == 0 || update + 1 == tc.updates) {
            const double mse = holdout_mse();
            if (log) log->holdout_mse.emplace_back(update + 1, mse);
            snapshot = codec.params();
            if (tc.verbose)
                std::fprintf(stderr, "codec update %d/%d loss %.6f holdout mse %.6f lr %.2e\n", update + 1,
                             tc.updates, loss_val, mse, opt.lr);
        }
    }

    codec.round_to_f32();
    return codec;
}

}  // namespace gea::codec
