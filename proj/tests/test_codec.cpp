#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gea/codec/rvq.hpp"
#include "gea/codec/rvq_train.hpp"
#include "support/fd.hpp"

using namespace gea;
using codec::PaddedAction;
using codec::RvqCodec;
using codec::RvqConfig;

namespace {

// Independent oracle: plain squared-distance scan, lowest index on ties.
int brute_force_nearest(const num::Tensor& book, const std::vector<double>& r) {
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < book.rows(); ++k) {
        double d = 0.0;
        for (int j = 0; j < book.cols(); ++j) {
            const double t = r[static_cast<std::size_t>(j)] - book.at(k, j);
            d += t * t;
        }
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

RvqConfig tiny_config() {
    RvqConfig cfg;
    cfg.num_levels = 2;
    cfg.codebook_size = 16;
    cfg.code_dim = 8;
    cfg.max_action_dim = 21;
    cfg.token_base = 512;
    cfg.hidden = {24, 24, 24};
    return cfg;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("pad and truncate") {
    SUBCASE("pads with zeros to max dim") {
        auto p = codec::pad({0.5, -0.5}, 21, "arm");
        CHECK(p.original_dim == 2);
        CHECK(p.values.size() == 21);
        CHECK(p.values[0] == 0.5);
        CHECK(p.values[1] == -0.5);
        for (int i = 2; i < 21; ++i) CHECK(p.values[static_cast<std::size_t>(i)] == 0.0);
    }
    SUBCASE("identity at max dim") {
        std::vector<double> a(21);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.1 * static_cast<double>(i);
        auto p = codec::pad(a, 21, "arm");
        CHECK(p.values == a);
    }
    SUBCASE("rejects degenerate and oversized actions naming the embodiment") {
        CHECK_THROWS_WITH_AS(codec::pad({}, 21, "ghost"), doctest::Contains("ghost"), std::runtime_error);
        CHECK_THROWS_WITH_AS(codec::pad(std::vector<double>(22, 0.0), 21, "big-arm"),
                             doctest::Contains("big-arm"), std::runtime_error);
        CHECK_THROWS(codec::pad({1.0, std::nan("")}, 21, "nan-arm"));
    }
    SUBCASE("truncate is a bit-exact left inverse of pad") {
        num::Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            const int d = 1 + static_cast<int>(rng.uniform_int(21));
            std::vector<double> a(static_cast<std::size_t>(d));
            for (double& v : a) v = rng.normal();
            CHECK(codec::truncate(codec::pad(a, 21, "x"), d) == a);
        }
    }
    SUBCASE("truncate basics") {
        PaddedAction p;
        p.values = {1, 2, 3, 4, 5};
        p.original_dim = 5;
        CHECK(codec::truncate(p, 2) == std::vector<double>{1, 2});
        CHECK(codec::truncate(p, 5) == std::vector<double>{1, 2, 3, 4, 5});
    }
}

TEST_CASE("nearest-code selection by inspection") {
    // Level 1: codes {(1,0),(0,1)}; level 2: zero codebook. z = (0.9, 0.1).
    RvqConfig cfg = tiny_config();
    cfg.codebook_size = 2;
    cfg.code_dim = 2;
    num::Rng rng(1);
    RvqCodec c(cfg, rng);
    num::Tensor& b0 = c.params().get(c.codebook_param_name(0));
    b0 = num::Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0});
    num::Tensor& b1 = c.params().get(c.codebook_param_name(1));
    b1 = num::Tensor({2, 2});
    CHECK(c.nearest_code(0, {0.9, 0.1}) == 0);
    CHECK(c.nearest_code(1, {0.9, 0.1}) == 0);  // all-zero codes tie; lowest index wins
}

TEST_CASE("encode matches brute-force argmin and residuals are consistent") {
    num::Rng rng(17);
    RvqConfig cfg = tiny_config();
    RvqCodec c(cfg, rng);

    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> raw(7);
        for (double& v : raw) v = rng.normal();
        const PaddedAction a = codec::pad(raw, cfg.max_action_dim, "probe");
        std::vector<double> r = c.encode_latent(c.normalize(a));
        const auto tokens = c.encode(a);
        REQUIRE(tokens.size() == 2);
        for (int m = 0; m < cfg.num_levels; ++m) {
            const num::Tensor& book = c.params().get(c.codebook_param_name(m));
            const int expect = brute_force_nearest(book, r);
            CHECK(tokens[static_cast<std::size_t>(m)] == cfg.token_base + expect);
            // Greedy residual: r_m = r_{m-1} - c_{k_m}, exactly.
            for (int j = 0; j < cfg.code_dim; ++j) r[static_cast<std::size_t>(j)] -= book.at(expect, j);
            ++checked;
        }
        for (int t : tokens) {
            CHECK(t >= cfg.token_base);
            CHECK(t < cfg.token_base + cfg.codebook_size);
        }
    }
    CHECK(checked == 2000);
}

TEST_CASE("decode round trip shapes and dimension handling") {
    num::Rng rng(19);
    RvqConfig cfg = tiny_config();
    RvqCodec c(cfg, rng);
    for (int d : {2, 4, 7}) {
        std::vector<double> raw(static_cast<std::size_t>(d), 0.25);
        const auto tokens = c.encode(codec::pad(raw, cfg.max_action_dim, "probe"));
        CHECK(c.decode(tokens, d).size() == static_cast<std::size_t>(d));
    }
    CHECK_THROWS_WITH_AS(c.decode({cfg.token_base, cfg.token_base + cfg.codebook_size}, 2),
                         doctest::Contains("position 1"), std::runtime_error);
    CHECK_THROWS_WITH_AS(c.decode({cfg.token_base - 1, cfg.token_base}, 2), doctest::Contains("position 0"),
                         std::runtime_error);
}

TEST_CASE("rvq encoder and decoder MLPs pass the finite-difference check") {
    num::Rng rng(29);
    RvqConfig cfg;
    cfg.num_levels = 2;
    cfg.codebook_size = 4;
    cfg.code_dim = 4;
    cfg.max_action_dim = 6;
    cfg.hidden = {8, 8, 8};
    RvqCodec c(cfg, rng);

    std::vector<num::Tensor> params;
    std::vector<std::string> names;
    for (const auto& n : c.encoder_param_names()) names.push_back(n);
    for (const auto& n : c.decoder_param_names()) names.push_back(n);
    for (const auto& n : names) params.push_back(c.params().get(n));

    num::Tensor x({3, 6});
    for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] = 0.2 * static_cast<double>(i % 5) - 0.3;

    auto rep = gea::test::fd_check(params, [&](num::Graph& g, const std::vector<num::Tensor>& p, auto& nodes) {
        nodes.clear();
        for (std::size_t i = 0; i < p.size(); ++i) nodes.push_back(g.input(p[i], names[i]));
        std::vector<num::Graph::NodeId> enc(nodes.begin(), nodes.begin() + 8);
        std::vector<num::Graph::NodeId> dec(nodes.begin() + 8, nodes.end());
        auto z = c.build_encoder(g, g.constant(x, "x"), enc);
        auto recon = c.build_decoder(g, z, dec);
        return g.squared_error(recon, x, 1.0 / static_cast<double>(x.numel()));
    });
    CHECK(rep.strict_pass());
}

TEST_CASE("memorizes a single repeated action") {
    RvqConfig cfg = tiny_config();
    cfg.hidden = {16, 16, 16};
    cfg.codebook_size = 8;
    codec::CodecTrainConfig tc;
    tc.updates = 400;
    tc.batch_size = 8;
    tc.lr = 2e-3;
    tc.holdout_frac = 0.25;
    tc.eval_every = 100;
    tc.seed = 5;

    std::vector<PaddedAction> data(64, codec::pad({0.3, -0.7, 0.2}, cfg.max_action_dim, "fixed"));
    codec::CodecTrainLog log;
    RvqCodec c = codec::train_codec(data, cfg, tc, &log);
    CHECK_FALSE(log.aborted_nan);
    CHECK(c.reconstruction_error(data[0]) < 1e-4);
}

TEST_CASE("smoothed training loss decreases on the synthetic mixture") {
    RvqConfig cfg = tiny_config();
    codec::CodecTrainConfig tc;
    tc.updates = 1000;
    tc.batch_size = 16;
    tc.lr = 1e-3;
    tc.seed = 9;
    tc.eval_every = 500;
    auto data = codec::synthetic_action_mixture(800, cfg.max_action_dim, 33);
    codec::CodecTrainLog log;
    RvqCodec c = codec::train_codec(data, cfg, tc, &log);
    CHECK_FALSE(log.aborted_nan);
    CHECK(log.smoothed_loss(1000) <= log.smoothed_loss(500));
}

TEST_CASE("serialization round trip is bit exact") {
    num::Rng rng(41);
    RvqConfig cfg = tiny_config();
    RvqCodec c(cfg, rng);
    std::vector<double> mean(21, 0.0), stddev(21, 1.0);
    mean[0] = 0.125;
    stddev[2] = 0.5;
    c.set_normalization(mean, stddev);
    c.round_to_f32();

    const std::string path = temp_path("gea_codec_roundtrip.rvqc");
    c.save(path);
    RvqCodec loaded = RvqCodec::load(path);

    CHECK(loaded.params().checksum() == c.params().checksum());
    CHECK(loaded.norm_mean() == c.norm_mean());
    CHECK(loaded.norm_std() == c.norm_std());
    CHECK(loaded.config().hidden == cfg.hidden);
    CHECK(loaded.config().token_base == cfg.token_base);

    // Same tokens for the same inputs after a round trip.
    num::Rng probe(7);
    for (int i = 0; i < 20; ++i) {
        std::vector<double> raw(4);
        for (double& v : raw) v = probe.normal();
        const auto a = codec::pad(raw, 21, "probe");
        CHECK(loaded.encode(a) == c.encode(a));
    }
    std::filesystem::remove(path);
}

TEST_CASE("corrupt and mismatched codec files are rejected") {
    num::Rng rng(43);
    RvqCodec c(tiny_config(), rng);
    const std::string path = temp_path("gea_codec_corrupt.rvqc");
    c.save(path);

    SUBCASE("truncated file") {
        const auto full = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, full / 2);
        CHECK_THROWS_WITH_AS(RvqCodec::load(path), doctest::Contains("corrupt"), std::runtime_error);
    }
    SUBCASE("wrong magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("NOPE", 4);
        f.close();
        CHECK_THROWS_WITH_AS(RvqCodec::load(path), doctest::Contains("magic"), std::runtime_error);
    }
    SUBCASE("missing file") { CHECK_THROWS(RvqCodec::load(temp_path("gea_codec_nope.rvqc"))); }
    std::filesystem::remove(path);
}
