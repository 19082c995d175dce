#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gea/numerics/graph.hpp"
#include "gea/numerics/optim.hpp"
#include "gea/numerics/params.hpp"
#include "gea/numerics/rng.hpp"
#include "support/fd.hpp"

using namespace gea;
using num::Graph;
using num::LegalSet;
using num::Tensor;
using gea::test::fd_check;
using gea::test::random_tensor;

TEST_CASE("affine quadratic loss matches closed-form gradient") {
    // y = Wx, loss = 0.5 * ||y||^2  =>  dL/dW = y x^T
    Graph g;
    Tensor W({2, 3}, {0.5, -1.0, 2.0, 1.5, 0.25, -0.75});
    Tensor x({3, 1}, {1.0, -2.0, 0.5});
    auto w_id = g.input(W, "W");
    auto x_id = g.constant(x, "x");
    auto y = g.matmul(w_id, x_id);
    auto loss = g.squared_error(y, Tensor({2, 1}), 0.5);
    g.backward(loss);

    const Tensor& yv = g.value(y);
    const Tensor& dW = g.grad(w_id);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) CHECK(dW.at(i, j) == doctest::Approx(yv.at(i) * x.at(j)).epsilon(1e-12));
}

TEST_CASE("zero input through affine with zero bias") {
    Graph g;
    num::Rng rng(7);
    auto w = g.input(random_tensor({4, 4}, rng), "W");
    auto b = g.input(Tensor({4}), "b");
    auto x = g.constant(Tensor({2, 4}), "x");
    auto y = g.add_bias(g.matmul(x, w), b);
    for (double v : g.value(y).data) CHECK(v == 0.0);
    auto loss = g.squared_error(y, random_tensor({2, 4}, rng), 1.0);
    g.backward(loss);
    for (double v : g.grad(w).data) CHECK(v == 0.0);  // dW = x^T dY = 0
}

static Graph::NodeId build_two_layer(Graph& g, const std::vector<Tensor>& p,
                                     std::vector<Graph::NodeId>& nodes) {
    nodes.clear();
    for (std::size_t i = 0; i < p.size(); ++i) nodes.push_back(g.input(p[i], "p" + std::to_string(i)));
    Tensor x({3, 5});
    for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] = 0.1 * static_cast<double>(i) - 0.6;
    auto h = g.gelu(g.add_bias(g.matmul(g.constant(x, "x"), nodes[0]), nodes[1]));
    auto y = g.add_bias(g.matmul(h, nodes[2]), nodes[3]);
    Tensor target({3, 2});
    for (std::size_t i = 0; i < target.numel(); ++i) target.data[i] = 0.3 * static_cast<double>(i % 3) - 0.2;
    return g.squared_error(y, target, 1.0 / static_cast<double>(target.numel()));
}

TEST_CASE("random two-layer net matches finite differences") {
    num::Rng rng(11);
    std::vector<Tensor> params = {random_tensor({5, 4}, rng), random_tensor({4}, rng),
                                  random_tensor({4, 2}, rng), random_tensor({2}, rng)};
    auto rep = fd_check(params, build_two_layer);
    CHECK(rep.checked == 34);
    CHECK(rep.strict_pass());
}

TEST_CASE("every supported layer passes the finite-difference check") {
    num::Rng rng(23);

    SUBCASE("relu") {
        std::vector<Tensor> p = {random_tensor({3, 4}, rng)};
        auto rep = fd_check(p, [](Graph& g, const std::vector<Tensor>& p, auto& nodes) {
            nodes = {g.input(p[0], "x")};
            return g.squared_error(g.relu(nodes[0]), Tensor({3, 4}), 0.5);
        });
        CHECK(rep.strict_pass());
    }
    SUBCASE("layer norm") {
        std::vector<Tensor> p = {random_tensor({4, 6}, rng), random_tensor({6}, rng, 0.3),
                                 random_tensor({6}, rng, 0.3)};
        auto rep = fd_check(p, [](Graph& g, const std::vector<Tensor>& p, auto& nodes) {
            nodes = {g.input(p[0], "x"), g.input(p[1], "gain"), g.input(p[2], "bias")};
            Tensor t({4, 6});
            for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = 0.05 * static_cast<double>(i % 7);
            return g.squared_error(g.layer_norm(nodes[0], nodes[1], nodes[2]), t, 1.0 / 24.0);
        });
        CHECK(rep.strict_pass());
    }
    SUBCASE("causal self-attention") {
        std::vector<Tensor> p = {random_tensor({5, 8}, rng), random_tensor({5, 8}, rng),
                                 random_tensor({5, 8}, rng)};
        auto rep = fd_check(p, [](Graph& g, const std::vector<Tensor>& p, auto& nodes) {
            nodes = {g.input(p[0], "q"), g.input(p[1], "k"), g.input(p[2], "v")};
            auto o = g.causal_self_attention(nodes[0], nodes[1], nodes[2], 2);
            Tensor t({5, 8});
            for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = 0.02 * static_cast<double>(i % 5) - 0.04;
            return g.squared_error(o, t, 1.0 / 40.0);
        });
        CHECK(rep.strict_pass());
    }
    SUBCASE("embedding lookup") {
        std::vector<Tensor> p = {random_tensor({7, 4}, rng)};
        auto rep = fd_check(p, [](Graph& g, const std::vector<Tensor>& p, auto& nodes) {
            nodes = {g.input(p[0], "table")};
            auto e = g.embedding(nodes[0], {3, 0, 3, -1, 6});
            return g.squared_error(e, Tensor({5, 4}), 0.1);
        });
        CHECK(rep.strict_pass());
    }
    SUBCASE("softmax cross-entropy") {
        std::vector<Tensor> p = {random_tensor({4, 9}, rng)};
        auto rep = fd_check(p, [](Graph& g, const std::vector<Tensor>& p, auto& nodes) {
            nodes = {g.input(p[0], "logits")};
            return g.softmax_xent_sum(nodes[0], {1, 8, 0, 4}, {1.0, 0.0, 0.5, 2.0});
        });
        CHECK(rep.strict_pass());
    }
    SUBCASE("masked log prob and entropy") {
        std::vector<Tensor> p = {random_tensor({3, 12}, rng)};
        auto rep = fd_check(p, [](Graph& g, const std::vector<Tensor>& p, auto& nodes) {
            nodes = {g.input(p[0], "logits")};
            std::vector<LegalSet> legal = {LegalSet::list({0, 3, 7}), LegalSet::range(4, 10),
                                           LegalSet::list({1, 2, 5, 11})};
            auto lp = g.masked_log_prob(nodes[0], legal, {3, 6, 11});
            auto ent = g.masked_entropy(nodes[0], legal);
            return g.weighted_sum({g.sum_all(lp), g.sum_all(ent)}, {1.0, 0.7});
        });
        CHECK(rep.strict_pass());
    }
    SUBCASE("ppo clipped surrogate") {
        std::vector<Tensor> p = {random_tensor({6}, rng, 0.2)};
        auto rep = fd_check(p, [](Graph& g, const std::vector<Tensor>& p, auto& nodes) {
            nodes = {g.input(p[0], "newlp")};
            const std::vector<double> old_lp = {0.1, -0.2, 0.0, 0.3, -0.4, 0.2};
            const std::vector<double> adv = {1.0, -1.0, 0.5, -2.0, 1.5, 0.25};
            return g.ppo_clip_surrogate(nodes[0], old_lp, adv, 0.2);
        });
        // The clip boundary is non-differentiable; away from it the check is exact.
        CHECK(rep.soft_pass());
    }
    SUBCASE("mean rows / gather / scatter / concat") {
        std::vector<Tensor> p = {random_tensor({5, 3}, rng)};
        auto rep = fd_check(p, [](Graph& g, const std::vector<Tensor>& p, auto& nodes) {
            nodes = {g.input(p[0], "x")};
            auto gathered = g.gather_rows(nodes[0], {0, 2, 2, 4});
            auto pooled = g.mean_rows(gathered);
            auto scattered = g.scatter_rows(gathered, {1, 0, 3, 2}, 4);
            auto joined = g.concat_cols({pooled, g.mean_rows(scattered)});
            return g.squared_error(joined, Tensor({1, 6}), 1.0);
        });
        CHECK(rep.strict_pass());
    }
}

TEST_CASE("random 3-layer compositions pass the gradient check") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        num::Rng rng(seed * 97);
        std::vector<Tensor> p = {random_tensor({6, 8}, rng), random_tensor({8}, rng),
                                 random_tensor({8, 8}, rng), random_tensor({8}, rng, 0.3),
                                 random_tensor({8}, rng, 0.3), random_tensor({8, 3}, rng)};
        auto rep = fd_check(p, [](Graph& g, const std::vector<Tensor>& p, auto& nodes) {
            nodes.clear();
            for (std::size_t i = 0; i < p.size(); ++i) nodes.push_back(g.input(p[i], "p" + std::to_string(i)));
            Tensor x({4, 6});
            for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] = 0.07 * static_cast<double>(i % 11) - 0.3;
            auto h = g.relu(g.add_bias(g.matmul(g.constant(x, "x"), nodes[0]), nodes[1]));
            auto a = g.causal_self_attention(h, h, h, 4);
            auto n = g.layer_norm(g.matmul(a, nodes[2]), nodes[3], nodes[4]);
            auto logits = g.matmul(g.gelu(n), nodes[5]);
            return g.softmax_xent_sum(logits, {0, 2, 1, 2}, {1.0, 1.0, 1.0, 1.0});
        });
        CHECK(rep.strict_pass());
    }
}

TEST_CASE("graph rejects shape mismatches by layer name") {
    Graph g;
    auto a = g.input(Tensor({2, 3}), "A");
    auto b = g.input(Tensor({2, 3}), "B");
    CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("matmul"), std::runtime_error);
    auto bias = g.input(Tensor({5}), "bias");
    CHECK_THROWS_WITH_AS(g.add_bias(a, bias), doctest::Contains("add_bias"), std::runtime_error);
}

TEST_CASE("softmax normalization identities") {
    // Uniform logits: cross-entropy equals ln V to 1e-9.
    const int V = 128;
    Graph g;
    auto logits = g.input(Tensor({1, V}), "logits");
    auto ce = g.softmax_xent_sum(logits, {17}, {1.0});
    CHECK(std::abs(g.value(ce).item() - std::log(static_cast<double>(V))) < 1e-9);

    // Masked softmax probabilities sum to 1 within 1e-6.
    num::Rng rng(5);
    Graph g2;
    auto z = g2.input(random_tensor({1, V}, rng, 2.0), "z");
    double total = 0.0;
    for (int j = 0; j < V; ++j) {
        Graph g3;
        auto zz = g3.input(g2.value(z), "z");
        auto lp = g3.masked_log_prob(zz, {LegalSet::range(0, V)}, {j});
        total += std::exp(g3.value(lp).at(0));
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("adamw fixed points and hand-computed step") {
    num::AdamWConfig cfg;
    cfg.lr = 0.1;

    SUBCASE("zero gradient, zero weight decay leaves parameters unchanged") {
        Tensor w({3}, {1.0, -2.0, 0.5});
        Tensor g({3});
        num::AdamWState st;
        num::adamw_step(w, g, st, cfg, "w");
        CHECK(w.data == std::vector<double>{1.0, -2.0, 0.5});
        CHECK(st.step == 1);
    }
    SUBCASE("first step matches the recurrence by hand") {
        Tensor w({1}, {1.0});
        Tensor g({1}, {1.0});
        num::AdamWState st;
        num::adamw_step(w, g, st, cfg, "w");
        // m=0.1, v=1e-3, mhat=1, vhat=1 => w' = 1 - 0.1 * 1/(1+1e-8)
        const double expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        CHECK(w.at(0) == doctest::Approx(expected).epsilon(1e-15));
    }
    SUBCASE("decoupled decay shrinks weights with zero gradient") {
        cfg.weight_decay = 0.04;
        Tensor w({1}, {2.0});
        Tensor g({1});
        num::AdamWState st;
        num::adamw_step(w, g, st, cfg, "w");
        CHECK(w.at(0) == doctest::Approx(2.0 - 0.1 * 0.04 * 2.0).epsilon(1e-12));
    }
    SUBCASE("non-finite gradient is rejected with the parameter name") {
        Tensor w({1}, {1.0});
        Tensor g({1}, {std::nan("")});
        num::AdamWState st;
        CHECK_THROWS_WITH_AS(num::adamw_step(w, g, st, cfg, "trunk.w0"), doctest::Contains("trunk.w0"),
                             std::runtime_error);
    }
}

TEST_CASE("learning-rate schedule boundaries") {
    num::LrSchedule s{2e-3, 1000, 0.10};
    CHECK(num::lr_at(s, 0) == 0.0);
    CHECK(num::lr_at(s, 100) == doctest::Approx(2e-3).epsilon(1e-12));   // warmup end -> peak
    CHECK(num::lr_at(s, 1000) == doctest::Approx(0.0).epsilon(1e-15));   // end -> 0
    CHECK(num::lr_at(s, 550) == doctest::Approx(1e-3).epsilon(1e-12));   // cosine midpoint -> peak/2
    CHECK(num::lr_at(s, 50) == doctest::Approx(1e-3).epsilon(1e-12));    // linear ramp midpoint
    CHECK(num::lr_at(s, 2000) == 0.0);                                   // past end clamps
    for (std::int64_t t = 0; t <= 1000; t += 10) CHECK(num::lr_at(s, t) >= 0.0);
}

TEST_CASE("identical seeds give bit-identical parameters after N steps") {
    auto run = [] {
        num::Rng rng(42);
        num::ParamStore store;
        store.add("w", random_tensor({4, 4}, rng));
        store.add("b", random_tensor({4}, rng));
        num::AdamWConfig cfg;
        cfg.lr = 3e-3;
        for (int step = 0; step < 25; ++step) {
            Graph g;
            auto w = g.input(store.get("w"), "w");
            auto b = g.input(store.get("b"), "b");
            auto x = g.constant(random_tensor({3, 4}, rng), "x");
            auto y = g.add_bias(g.matmul(x, w), b);
            auto loss = g.squared_error(y, random_tensor({3, 4}, rng), 1.0 / 12.0);
            g.backward(loss);
            store.apply("w", g.grad(w), cfg);
            store.apply("b", g.grad(b), cfg);
        }
        return store.checksum();
    };
    CHECK(run() == run());
}

TEST_CASE("param store round trip preserves optimizer state") {
    num::Rng rng(3);
    num::ParamStore store;
    store.add("a", random_tensor({2, 2}, rng));
    store.add("b", random_tensor({3}, rng));
    num::AdamWConfig cfg;
    Tensor ga({2, 2}, {0.1, -0.2, 0.3, 0.4});
    store.apply("a", ga, cfg);

    std::stringstream ss;
    store.write(ss, true);
    num::ParamStore loaded;
    loaded.read(ss, true);
    CHECK(loaded.checksum() == store.checksum());
    CHECK(loaded.state("a").step == 1);
    CHECK(loaded.names() == store.names());
}

TEST_CASE("rng determinism and distribution sanity") {
    num::Rng a(9), b(9);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    num::Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.uniform_int(7) < 7);
    }
    CHECK(r.categorical({0.0, 1.0, 0.0}) == 1);
    CHECK_THROWS(r.categorical({0.0, 0.0}));

    num::Rng forked = r.fork("child");
    CHECK(forked.next_u64() != r.next_u64());
}
