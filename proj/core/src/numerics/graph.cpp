#include "gea/numerics/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gea::num {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

// Stable softmax over a legal subset. Returns probabilities in `probs`
// (dense over V, zero outside the set) and the log-normalizer.
double masked_softmax(const double* logits, const LegalSet& set, int vocab, double* probs) {
    std::fill(probs, probs + vocab, 0.0);
    double mx = -1e300;
    set.for_each([&](int j) { mx = std::max(mx, logits[j]); });
    double denom = 0.0;
    set.for_each([&](int j) { denom += std::exp(logits[j] - mx); });
    set.for_each([&](int j) { probs[j] = std::exp(logits[j] - mx) / denom; });
    return mx + std::log(denom);
}

}  // namespace

bool LegalSet::contains(int id) const {
    if (is_range()) return id >= range_begin && id < range_end;
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

Graph::NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

bool Graph::any_parent_grad(const std::vector<NodeId>& ps) const {
    for (NodeId p : ps) {
        if (cat(p).requires_grad) return true;
    }
    return false;
}

void Graph::fail(const std::string& op, const std::string& msg) const {
    throw std::runtime_error("graph/" + op + ": " + msg);
}

Graph::NodeId Graph::constant(Tensor v, std::string name) {
    Node n;
    n.val = std::move(v);
    n.name = std::move(name);
    n.requires_grad = false;
    return push(std::move(n));
}

Graph::NodeId Graph::input(Tensor v, std::string name) {
    Node n;
    n.val = std::move(v);
    n.name = std::move(name);
    n.requires_grad = true;
    return push(std::move(n));
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& A = cat(a).val;
    const Tensor& B = cat(b).val;
    if (A.cols() != B.rows())
        fail("matmul", "inner dims differ: " + A.shape_str() + " * " + B.shape_str() +
                           " (" + cat(a).name + " * " + cat(b).name + ")");
    Node n;
    n.op = Op::MatMul;
    n.parents = {a, b};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor({A.rows(), B.cols()});
    mat_mul(A.data.data(), B.data.data(), n.val.data.data(), A.rows(), A.cols(), B.cols());
    return push(std::move(n));
}

Graph::NodeId Graph::axpy(NodeId a, NodeId b, double alpha) {
    const Tensor& A = cat(a).val;
    const Tensor& B = cat(b).val;
    if (A.numel() != B.numel())
        fail("add", "shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
    Node n;
    n.op = Op::Axpy;
    n.parents = {a, b};
    n.aux = {alpha};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = A;
    for (std::size_t i = 0; i < B.numel(); ++i) n.val.data[i] += alpha * B.data[i];
    return push(std::move(n));
}

Graph::NodeId Graph::scale(NodeId x, double c) {
    Node n;
    n.op = Op::Scale;
    n.parents = {x};
    n.aux = {c};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = cat(x).val;
    for (double& v : n.val.data) v *= c;
    return push(std::move(n));
}

Graph::NodeId Graph::add_bias(NodeId x, NodeId b) {
    const Tensor& X = cat(x).val;
    const Tensor& B = cat(b).val;
    if (X.cols() != static_cast<int>(B.numel()))
        fail("add_bias", "bias length " + std::to_string(B.numel()) + " vs cols of " + X.shape_str());
    Node n;
    n.op = Op::AddBias;
    n.parents = {x, b};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = X;
    const int R = X.rows(), C = X.cols();
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) n.val.data[static_cast<std::size_t>(i) * C + j] += B.data[j];
    return push(std::move(n));
}

Graph::NodeId Graph::gelu(NodeId x) {
    Node n;
    n.op = Op::Gelu;
    n.parents = {x};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = cat(x).val;
    for (double& v : n.val.data) v = gelu_fwd(v);
    return push(std::move(n));
}

Graph::NodeId Graph::relu(NodeId x) {
    Node n;
    n.op = Op::Relu;
    n.parents = {x};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = cat(x).val;
    for (double& v : n.val.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
}

Graph::NodeId Graph::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
    const Tensor& X = cat(x).val;
    const int R = X.rows(), C = X.cols();
    if (static_cast<int>(cat(gain).val.numel()) != C || static_cast<int>(cat(bias).val.numel()) != C)
        fail("layer_norm", "gain/bias length must equal cols of " + X.shape_str());
    Node n;
    n.op = Op::LayerNorm;
    n.parents = {x, gain, bias};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor({R, C});
    Tensor xhat({R, C});
    Tensor inv_std({R});
    const Tensor& G = cat(gain).val;
    const Tensor& B = cat(bias).val;
    for (int i = 0; i < R; ++i) {
        const double* xi = X.data.data() + static_cast<std::size_t>(i) * C;
        double mu = 0.0;
        for (int j = 0; j < C; ++j) mu += xi[j];
        mu /= C;
        double var = 0.0;
        for (int j = 0; j < C; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= C;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std.data[i] = is;
        for (int j = 0; j < C; ++j) {
            const double xh = (xi[j] - mu) * is;
            xhat.data[static_cast<std::size_t>(i) * C + j] = xh;
            n.val.data[static_cast<std::size_t>(i) * C + j] = xh * G.data[j] + B.data[j];
        }
    }
    n.saved.push_back(std::move(xhat));
    n.saved.push_back(std::move(inv_std));
    return push(std::move(n));
}

Graph::NodeId Graph::embedding(NodeId table, const std::vector<int>& ids) {
    const Tensor& T = cat(table).val;
    const int R = static_cast<int>(ids.size()), C = T.cols();
    for (int id : ids)
        if (id >= T.rows() || id < -1)
            fail("embedding", "id " + std::to_string(id) + " out of table " + T.shape_str());
    Node n;
    n.op = Op::Embedding;
    n.parents = {table};
    n.ids = ids;
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor({R, C});
    for (int i = 0; i < R; ++i) {
        if (ids[i] < 0) continue;
        const double* src = T.data.data() + static_cast<std::size_t>(ids[i]) * C;
        std::copy(src, src + C, n.val.data.data() + static_cast<std::size_t>(i) * C);
    }
    return push(std::move(n));
}

Graph::NodeId Graph::gather_rows(NodeId x, std::vector<int> row_ids) {
    const Tensor& X = cat(x).val;
    const int C = X.cols();
    for (int r : row_ids)
        if (r < 0 || r >= X.rows()) fail("gather_rows", "row " + std::to_string(r) + " out of " + X.shape_str());
    Node n;
    n.op = Op::GatherRows;
    n.parents = {x};
    n.ids = std::move(row_ids);
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor({static_cast<int>(n.ids.size()), C});
    for (std::size_t i = 0; i < n.ids.size(); ++i) {
        const double* src = X.data.data() + static_cast<std::size_t>(n.ids[i]) * C;
        std::copy(src, src + C, n.val.data.data() + i * C);
    }
    return push(std::move(n));
}

Graph::NodeId Graph::scatter_rows(NodeId x, std::vector<int> positions, int total_rows) {
    const Tensor& X = cat(x).val;
    if (static_cast<int>(positions.size()) != X.rows())
        fail("scatter_rows", "positions count vs rows of " + X.shape_str());
    for (int p : positions)
        if (p < 0 || p >= total_rows) fail("scatter_rows", "position " + std::to_string(p) + " out of range");
    Node n;
    n.op = Op::ScatterRows;
    n.parents = {x};
    n.ids = std::move(positions);
    n.requires_grad = any_parent_grad(n.parents);
    const int C = X.cols();
    n.val = Tensor({total_rows, C});
    for (std::size_t i = 0; i < n.ids.size(); ++i) {
        std::copy(X.data.data() + i * C, X.data.data() + (i + 1) * C,
                  n.val.data.data() + static_cast<std::size_t>(n.ids[i]) * C);
    }
    return push(std::move(n));
}

Graph::NodeId Graph::mean_rows(NodeId x) {
    const Tensor& X = cat(x).val;
    const int R = X.rows(), C = X.cols();
    if (R == 0) fail("mean_rows", "empty input");
    Node n;
    n.op = Op::MeanRows;
    n.parents = {x};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor({1, C});
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) n.val.data[j] += X.data[static_cast<std::size_t>(i) * C + j];
    for (double& v : n.val.data) v /= R;
    return push(std::move(n));
}

Graph::NodeId Graph::concat_cols(const std::vector<NodeId>& xs) {
    if (xs.empty()) fail("concat_cols", "no inputs");
    const int R = cat(xs[0]).val.rows();
    int total = 0;
    for (NodeId id : xs) {
        if (cat(id).val.rows() != R) fail("concat_cols", "row counts differ");
        total += cat(id).val.cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.parents = xs;
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor({R, total});
    int off = 0;
    for (NodeId id : xs) {
        const Tensor& X = cat(id).val;
        const int C = X.cols();
        for (int i = 0; i < R; ++i)
            std::copy(X.data.data() + static_cast<std::size_t>(i) * C,
                      X.data.data() + static_cast<std::size_t>(i + 1) * C,
                      n.val.data.data() + static_cast<std::size_t>(i) * total + off);
        off += C;
    }
    return push(std::move(n));
}

Graph::NodeId Graph::causal_self_attention(NodeId q, NodeId k, NodeId v, int n_heads) {
    const Tensor& Q = cat(q).val;
    const Tensor& K = cat(k).val;
    const Tensor& V = cat(v).val;
    const int T = Q.rows(), D = Q.cols();
    if (!Q.same_shape(K) || !Q.same_shape(V))
        fail("attention", "q/k/v shapes differ: " + Q.shape_str() + " " + K.shape_str() + " " + V.shape_str());
    if (n_heads < 1 || D % n_heads != 0)
        fail("attention", "model dim " + std::to_string(D) + " not divisible by heads " + std::to_string(n_heads));
    const int hd = D / n_heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(hd));

    Node n;
    n.op = Op::Attention;
    n.parents = {q, k, v};
    n.iaux = n_heads;
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor({T, D});
    Tensor probs({n_heads * T, T});
    for (int h = 0; h < n_heads; ++h) {
        const int co = h * hd;
        for (int t = 0; t < T; ++t) {
            double* p = probs.data.data() + static_cast<std::size_t>(h * T + t) * T;
            double mx = -1e300;
            for (int s = 0; s <= t; ++s) {
                double dot = 0.0;
                const double* qt = Q.data.data() + static_cast<std::size_t>(t) * D + co;
                const double* ks = K.data.data() + static_cast<std::size_t>(s) * D + co;
                for (int e = 0; e < hd; ++e) dot += qt[e] * ks[e];
                p[s] = dot * sc;
                mx = std::max(mx, p[s]);
            }
            double denom = 0.0;
            for (int s = 0; s <= t; ++s) {
                p[s] = std::exp(p[s] - mx);
                denom += p[s];
            }
            for (int s = 0; s <= t; ++s) p[s] /= denom;
            double* out = n.val.data.data() + static_cast<std::size_t>(t) * D + co;
            for (int s = 0; s <= t; ++s) {
                const double w = p[s];
                const double* vs = V.data.data() + static_cast<std::size_t>(s) * D + co;
                for (int e = 0; e < hd; ++e) out[e] += w * vs[e];
            }
        }
    }
    n.saved.push_back(std::move(probs));
    return push(std::move(n));
}

Graph::NodeId Graph::dropout(NodeId x, Tensor mask) {
    const Tensor& X = cat(x).val;
    if (mask.numel() != X.numel()) fail("dropout", "mask shape mismatch");
    Node n;
    n.op = Op::Dropout;
    n.parents = {x};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = X;
    for (std::size_t i = 0; i < X.numel(); ++i) n.val.data[i] *= mask.data[i];
    n.saved.push_back(std::move(mask));
    return push(std::move(n));
}

Graph::NodeId Graph::stop_gradient(NodeId x) {
    Node n;
    n.op = Op::StopGrad;
    n.parents = {x};
    n.requires_grad = false;
    n.val = cat(x).val;
    return push(std::move(n));
}

Graph::NodeId Graph::softmax_xent_sum(NodeId logits, std::vector<int> targets, std::vector<double> weights) {
    const Tensor& L = cat(logits).val;
    const int R = L.rows(), V = L.cols();
    if (static_cast<int>(targets.size()) != R || static_cast<int>(weights.size()) != R)
        fail("softmax_xent", "targets/weights rows vs logits " + L.shape_str());
    for (int t : targets)
        if (t < 0 || t >= V) fail("softmax_xent", "target id " + std::to_string(t) + " out of vocab");
    Node n;
    n.op = Op::SoftmaxXent;
    n.parents = {logits};
    n.ids = std::move(targets);
    n.aux = std::move(weights);
    n.requires_grad = any_parent_grad(n.parents);
    Tensor probs({R, V});
    double loss = 0.0;
    for (int i = 0; i < R; ++i) {
        const double* li = L.data.data() + static_cast<std::size_t>(i) * V;
        double* pi = probs.data.data() + static_cast<std::size_t>(i) * V;
        const double lse = masked_softmax(li, LegalSet::range(0, V), V, pi);
        loss += n.aux[i] * (lse - li[n.ids[i]]);
    }
    n.val = Tensor::scalar(loss);
    n.saved.push_back(std::move(probs));
    return push(std::move(n));
}

Graph::NodeId Graph::squared_error(NodeId pred, Tensor target, double scale) {
    const Tensor& P = cat(pred).val;
    if (P.numel() != target.numel())
        fail("squared_error", "pred " + P.shape_str() + " vs target " + target.shape_str());
    Node n;
    n.op = Op::SquaredError;
    n.parents = {pred};
    n.aux = {scale};
    n.requires_grad = any_parent_grad(n.parents);
    double acc = 0.0;
    for (std::size_t i = 0; i < P.numel(); ++i) {
        const double d = P.data[i] - target.data[i];
        acc += d * d;
    }
    n.val = Tensor::scalar(acc * scale);
    n.saved.push_back(std::move(target));
    return push(std::move(n));
}

Graph::NodeId Graph::masked_log_prob(NodeId logits, std::vector<LegalSet> legal, std::vector<int> taken) {
    const Tensor& L = cat(logits).val;
    const int R = L.rows(), V = L.cols();
    if (static_cast<int>(legal.size()) != R || static_cast<int>(taken.size()) != R)
        fail("masked_log_prob", "legal/taken rows vs logits " + L.shape_str());
    Node n;
    n.op = Op::MaskedLogProb;
    n.parents = {logits};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor({R});
    Tensor probs({R, V});
    for (int i = 0; i < R; ++i) {
        if (legal[i].size() < 1) fail("masked_log_prob", "row " + std::to_string(i) + " has no legal tokens");
        if (!legal[i].contains(taken[i]))
            fail("masked_log_prob", "taken id " + std::to_string(taken[i]) + " not legal at row " + std::to_string(i));
        const double* li = L.data.data() + static_cast<std::size_t>(i) * V;
        double* pi = probs.data.data() + static_cast<std::size_t>(i) * V;
        const double lse = masked_softmax(li, legal[i], V, pi);
        n.val.data[i] = li[taken[i]] - lse;
    }
    n.ids = std::move(taken);
    n.legal = std::move(legal);
    n.saved.push_back(std::move(probs));
    return push(std::move(n));
}

Graph::NodeId Graph::masked_entropy(NodeId logits, std::vector<LegalSet> legal) {
    const Tensor& L = cat(logits).val;
    const int R = L.rows(), V = L.cols();
    if (static_cast<int>(legal.size()) != R) fail("masked_entropy", "legal rows vs logits " + L.shape_str());
    Node n;
    n.op = Op::MaskedEntropy;
    n.parents = {logits};
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor({R});
    Tensor probs({R, V});
    Tensor raw_h({R});
    for (int i = 0; i < R; ++i) {
        const int count = legal[i].size();
        if (count < 1) fail("masked_entropy", "row " + std::to_string(i) + " has no legal tokens");
        double* pi = probs.data.data() + static_cast<std::size_t>(i) * V;
        masked_softmax(L.data.data() + static_cast<std::size_t>(i) * V, legal[i], V, pi);
        if (count == 1) {
            n.val.data[i] = 0.0;
            continue;
        }
        double h = 0.0;
        legal[i].for_each([&](int j) {
            if (pi[j] > 0.0) h -= pi[j] * std::log(pi[j]);
        });
        raw_h.data[i] = h;
        n.val.data[i] = h / std::log(static_cast<double>(count));
    }
    n.legal = std::move(legal);
    n.saved.push_back(std::move(probs));
    n.saved.push_back(std::move(raw_h));
    return push(std::move(n));
}

Graph::NodeId Graph::ppo_clip_surrogate(NodeId new_log_prob, std::vector<double> old_log_prob,
                                        std::vector<double> advantage, double clip_eps) {
    const Tensor& NL = cat(new_log_prob).val;
    const int R = static_cast<int>(NL.numel());
    if (static_cast<int>(old_log_prob.size()) != R || static_cast<int>(advantage.size()) != R)
        fail("ppo_clip", "old/adv length vs new log probs");
    Node n;
    n.op = Op::PpoClip;
    n.parents = {new_log_prob};
    n.requires_grad = any_parent_grad(n.parents);
    n.aux.reserve(2 * R + 2);
    n.aux.push_back(clip_eps);
    double acc = 0.0;
    int valid = 0;
    std::vector<double> rho(R, 0.0);
    std::vector<char> ok(R, 0);
    for (int i = 0; i < R; ++i) {
        const double r = std::exp(NL.data[i] - old_log_prob[i]);
        if (!std::isfinite(r)) {
            ++ppo_skipped_;
            continue;
        }
        rho[i] = r;
        ok[i] = 1;
        ++valid;
        const double s1 = r * advantage[i];
        const double s2 = std::clamp(r, 1.0 - clip_eps, 1.0 + clip_eps) * advantage[i];
        acc += std::min(s1, s2);
    }
    if (valid == 0) fail("ppo_clip", "no finite probability ratios in batch");
    n.aux.push_back(static_cast<double>(valid));
    for (int i = 0; i < R; ++i) n.aux.push_back(advantage[i]);
    for (int i = 0; i < R; ++i) n.aux.push_back(ok[i] ? rho[i] : std::nan(""));
    n.val = Tensor::scalar(acc / valid);
    return push(std::move(n));
}

Graph::NodeId Graph::sum_all(NodeId x) {
    Node n;
    n.op = Op::SumAll;
    n.parents = {x};
    n.requires_grad = any_parent_grad(n.parents);
    double acc = 0.0;
    for (double v : cat(x).val.data) acc += v;
    n.val = Tensor::scalar(acc);
    return push(std::move(n));
}

Graph::NodeId Graph::mean_all(NodeId x) {
    if (cat(x).val.numel() == 0) fail("mean_all", "empty input");
    NodeId s = sum_all(x);
    return scale(s, 1.0 / static_cast<double>(cat(x).val.numel()));
}

Graph::NodeId Graph::weighted_sum(const std::vector<NodeId>& xs, const std::vector<double>& coefs) {
    if (xs.empty() || xs.size() != coefs.size()) fail("weighted_sum", "inputs/coefs mismatch");
    for (NodeId id : xs)
        if (cat(id).val.numel() != cat(xs[0]).val.numel()) fail("weighted_sum", "shape mismatch");
    Node n;
    n.op = Op::WeightedSum;
    n.parents = xs;
    n.aux = coefs;
    n.requires_grad = any_parent_grad(n.parents);
    n.val = Tensor(cat(xs[0]).val.shape);
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t e = 0; e < n.val.numel(); ++e) n.val.data[e] += coefs[i] * cat(xs[i]).val.data[e];
    return push(std::move(n));
}

void Graph::ensure_grad(NodeId id) {
    Node& n = at(id);
    if (n.grad.numel() == 0) n.grad = Tensor(n.val.shape);
}

const Tensor& Graph::grad(NodeId id) const {
    const Node& n = cat(id);
    if (n.grad.numel() == 0) throw std::runtime_error("graph: no gradient at node '" + n.name + "'");
    return n.grad;
}

bool Graph::has_grad(NodeId id) const { return cat(id).grad.numel() != 0; }

void Graph::backward(NodeId loss) {
    if (cat(loss).val.numel() != 1) fail("backward", "loss must be scalar, got " + cat(loss).val.shape_str());
    if (!cat(loss).requires_grad) fail("backward", "loss does not depend on any differentiable input");
    ensure_grad(loss);
    at(loss).grad.data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = at(id);
        if (!n.requires_grad || n.grad.numel() == 0) continue;
        backprop_node(id);
    }
}

void Graph::backprop_node(NodeId id) {
    Node& n = at(id);
    const Tensor& g = n.grad;
    auto parent_grad = [&](int slot) -> Tensor* {
        NodeId p = n.parents[slot];
        if (!cat(p).requires_grad) return nullptr;
        ensure_grad(p);
        return &at(p).grad;
    };

    switch (n.op) {
        case Op::Leaf:
        case Op::StopGrad:
            break;
        case Op::MatMul: {
            const Tensor& A = cat(n.parents[0]).val;
            const Tensor& B = cat(n.parents[1]).val;
            const int M = A.rows(), K = A.cols(), N = B.cols();
            if (Tensor* da = parent_grad(0)) {
                std::vector<double> tmp(static_cast<std::size_t>(M) * K);
                mat_mul_a_bt(g.data.data(), B.data.data(), tmp.data(), M, N, K);
                for (std::size_t i = 0; i < tmp.size(); ++i) da->data[i] += tmp[i];
            }
            if (Tensor* db = parent_grad(1)) {
                std::vector<double> tmp(static_cast<std::size_t>(K) * N);
                mat_mul_at_b(A.data.data(), g.data.data(), tmp.data(), K, M, N);
                for (std::size_t i = 0; i < tmp.size(); ++i) db->data[i] += tmp[i];
            }
            break;
        }
        case Op::Axpy: {
            if (Tensor* da = parent_grad(0))
                for (std::size_t i = 0; i < g.numel(); ++i) da->data[i] += g.data[i];
            if (Tensor* db = parent_grad(1))
                for (std::size_t i = 0; i < g.numel(); ++i) db->data[i] += n.aux[0] * g.data[i];
            break;
        }
        case Op::Scale: {
            if (Tensor* dx = parent_grad(0))
                for (std::size_t i = 0; i < g.numel(); ++i) dx->data[i] += n.aux[0] * g.data[i];
            break;
        }
        case Op::AddBias: {
            const int R = g.rows(), C = g.cols();
            if (Tensor* dx = parent_grad(0))
                for (std::size_t i = 0; i < g.numel(); ++i) dx->data[i] += g.data[i];
            if (Tensor* db = parent_grad(1))
                for (int i = 0; i < R; ++i)
                    for (int j = 0; j < C; ++j) db->data[j] += g.data[static_cast<std::size_t>(i) * C + j];
            break;
        }
        case Op::Gelu: {
            if (Tensor* dx = parent_grad(0)) {
                const Tensor& X = cat(n.parents[0]).val;
                for (std::size_t i = 0; i < g.numel(); ++i) dx->data[i] += g.data[i] * gelu_grad(X.data[i]);
            }
            break;
        }
        case Op::Relu: {
            if (Tensor* dx = parent_grad(0)) {
                const Tensor& X = cat(n.parents[0]).val;
                for (std::size_t i = 0; i < g.numel(); ++i)
                    if (X.data[i] > 0.0) dx->data[i] += g.data[i];
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& xhat = n.saved[0];
            const Tensor& inv_std = n.saved[1];
            const Tensor& G = cat(n.parents[1]).val;
            const int R = g.rows(), C = g.cols();
            Tensor* dx = parent_grad(0);
            Tensor* dg = parent_grad(1);
            Tensor* db = parent_grad(2);
            for (int i = 0; i < R; ++i) {
                const double* gi = g.data.data() + static_cast<std::size_t>(i) * C;
                const double* xh = xhat.data.data() + static_cast<std::size_t>(i) * C;
                if (dg)
                    for (int j = 0; j < C; ++j) dg->data[j] += gi[j] * xh[j];
                if (db)
                    for (int j = 0; j < C; ++j) db->data[j] += gi[j];
                if (dx) {
                    double mean_gy = 0.0, mean_gy_xh = 0.0;
                    for (int j = 0; j < C; ++j) {
                        const double gy = gi[j] * G.data[j];
                        mean_gy += gy;
                        mean_gy_xh += gy * xh[j];
                    }
                    mean_gy /= C;
                    mean_gy_xh /= C;
                    const double is = inv_std.data[i];
                    double* dxi = dx->data.data() + static_cast<std::size_t>(i) * C;
                    for (int j = 0; j < C; ++j) {
                        const double gy = gi[j] * G.data[j];
                        dxi[j] += is * (gy - mean_gy - xh[j] * mean_gy_xh);
                    }
                }
            }
            break;
        }
        case Op::Embedding: {
            if (Tensor* dt = parent_grad(0)) {
                const int C = g.cols();
                for (std::size_t i = 0; i < n.ids.size(); ++i) {
                    if (n.ids[i] < 0) continue;
                    double* dst = dt->data.data() + static_cast<std::size_t>(n.ids[i]) * C;
                    const double* src = g.data.data() + i * C;
                    for (int j = 0; j < C; ++j) dst[j] += src[j];
                }
            }
            break;
        }
        case Op::GatherRows: {
            if (Tensor* dx = parent_grad(0)) {
                const int C = g.cols();
                for (std::size_t i = 0; i < n.ids.size(); ++i) {
                    double* dst = dx->data.data() + static_cast<std::size_t>(n.ids[i]) * C;
                    const double* src = g.data.data() + i * C;
                    for (int j = 0; j < C; ++j) dst[j] += src[j];
                }
            }
            break;
        }
        case Op::ScatterRows: {
            if (Tensor* dx = parent_grad(0)) {
                const int C = g.cols();
                for (std::size_t i = 0; i < n.ids.size(); ++i) {
                    const double* src = g.data.data() + static_cast<std::size_t>(n.ids[i]) * C;
                    double* dst = dx->data.data() + i * C;
                    for (int j = 0; j < C; ++j) dst[j] += src[j];
                }
            }
            break;
        }
        case Op::MeanRows: {
            if (Tensor* dx = parent_grad(0)) {
                const int R = cat(n.parents[0]).val.rows(), C = g.cols();
                for (int i = 0; i < R; ++i)
                    for (int j = 0; j < C; ++j) dx->data[static_cast<std::size_t>(i) * C + j] += g.data[j] / R;
            }
            break;
        }
        case Op::ConcatCols: {
            const int R = g.rows(), total = g.cols();
            int off = 0;
            for (std::size_t s = 0; s < n.parents.size(); ++s) {
                const int C = cat(n.parents[s]).val.cols();
                if (Tensor* dp = parent_grad(static_cast<int>(s))) {
                    for (int i = 0; i < R; ++i)
                        for (int j = 0; j < C; ++j)
                            dp->data[static_cast<std::size_t>(i) * C + j] +=
                                g.data[static_cast<std::size_t>(i) * total + off + j];
                }
                off += C;
            }
            break;
        }
        case Op::Attention: {
            const Tensor& Q = cat(n.parents[0]).val;
            const Tensor& K = cat(n.parents[1]).val;
            const Tensor& V = cat(n.parents[2]).val;
            const Tensor& probs = n.saved[0];
            const int T = Q.rows(), D = Q.cols(), H = n.iaux, hd = D / H;
            const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
            Tensor* dq = parent_grad(0);
            Tensor* dk = parent_grad(1);
            Tensor* dv = parent_grad(2);
            std::vector<double> dp(T), ds(T);
            for (int h = 0; h < H; ++h) {
                const int co = h * hd;
                for (int t = 0; t < T; ++t) {
                    const double* p = probs.data.data() + static_cast<std::size_t>(h * T + t) * T;
                    const double* go = g.data.data() + static_cast<std::size_t>(t) * D + co;
                    // dP[s] = dO . V[s]; dS via softmax jacobian; then into Q,K,V.
                    double dot_dp_p = 0.0;
                    for (int s = 0; s <= t; ++s) {
                        const double* vs = V.data.data() + static_cast<std::size_t>(s) * D + co;
                        double acc = 0.0;
                        for (int e = 0; e < hd; ++e) acc += go[e] * vs[e];
                        dp[s] = acc;
                        dot_dp_p += acc * p[s];
                    }
                    for (int s = 0; s <= t; ++s) ds[s] = p[s] * (dp[s] - dot_dp_p);
                    if (dv) {
                        for (int s = 0; s <= t; ++s) {
                            double* dvs = dv->data.data() + static_cast<std::size_t>(s) * D + co;
                            const double w = p[s];
                            for (int e = 0; e < hd; ++e) dvs[e] += w * go[e];
                        }
                    }
                    if (dq) {
                        double* dqt = dq->data.data() + static_cast<std::size_t>(t) * D + co;
                        for (int s = 0; s <= t; ++s) {
                            const double w = ds[s] * sc;
                            const double* ks = K.data.data() + static_cast<std::size_t>(s) * D + co;
                            for (int e = 0; e < hd; ++e) dqt[e] += w * ks[e];
                        }
                    }
                    if (dk) {
                        const double* qt = Q.data.data() + static_cast<std::size_t>(t) * D + co;
                        for (int s = 0; s <= t; ++s) {
                            double* dks = dk->data.data() + static_cast<std::size_t>(s) * D + co;
                            const double w = ds[s] * sc;
                            for (int e = 0; e < hd; ++e) dks[e] += w * qt[e];
                        }
                    }
                }
            }
            break;
        }
        case Op::Dropout: {
            if (Tensor* dx = parent_grad(0)) {
                const Tensor& mask = n.saved[0];
                for (std::size_t i = 0; i < g.numel(); ++i) dx->data[i] += g.data[i] * mask.data[i];
            }
            break;
        }
        case Op::SoftmaxXent: {
            if (Tensor* dl = parent_grad(0)) {
                const Tensor& probs = n.saved[0];
                const int R = probs.rows(), V = probs.cols();
                const double gs = g.data[0];
                for (int i = 0; i < R; ++i) {
                    const double w = n.aux[i] * gs;
                    if (w == 0.0) continue;
                    const double* pi = probs.data.data() + static_cast<std::size_t>(i) * V;
                    double* di = dl->data.data() + static_cast<std::size_t>(i) * V;
                    for (int j = 0; j < V; ++j) di[j] += w * pi[j];
                    di[n.ids[i]] -= w;
                }
            }
            break;
        }
        case Op::SquaredError: {
            if (Tensor* dp = parent_grad(0)) {
                const Tensor& P = cat(n.parents[0]).val;
                const Tensor& target = n.saved[0];
                const double w = 2.0 * n.aux[0] * g.data[0];
                for (std::size_t i = 0; i < P.numel(); ++i) dp->data[i] += w * (P.data[i] - target.data[i]);
            }
            break;
        }
        case Op::MaskedLogProb: {
            if (Tensor* dl = parent_grad(0)) {
                const Tensor& probs = n.saved[0];
                const int V = probs.cols();
                for (std::size_t i = 0; i < n.legal.size(); ++i) {
                    const double gi = g.data[i];
                    if (gi == 0.0) continue;
                    const double* pi = probs.data.data() + i * V;
                    double* di = dl->data.data() + i * V;
                    n.legal[i].for_each([&](int j) { di[j] -= gi * pi[j]; });
                    di[n.ids[i]] += gi;
                }
            }
            break;
        }
        case Op::MaskedEntropy: {
            if (Tensor* dl = parent_grad(0)) {
                const Tensor& probs = n.saved[0];
                const Tensor& raw_h = n.saved[1];
                const int V = probs.cols();
                for (std::size_t i = 0; i < n.legal.size(); ++i) {
                    const int count = n.legal[i].size();
                    if (count <= 1) continue;
                    const double gi = g.data[i] / std::log(static_cast<double>(count));
                    if (gi == 0.0) continue;
                    const double h = raw_h.data[i];
                    const double* pi = probs.data.data() + i * V;
                    double* di = dl->data.data() + i * V;
                    n.legal[i].for_each([&](int j) {
                        if (pi[j] > 0.0) di[j] += gi * (-pi[j] * (std::log(pi[j]) + h));
                    });
                }
            }
            break;
        }
        case Op::PpoClip: {
            if (Tensor* dn = parent_grad(0)) {
                const double eps = n.aux[0];
                const double valid = n.aux[1];
                const int R = static_cast<int>(dn->numel());
                const double gs = g.data[0];
                for (int i = 0; i < R; ++i) {
                    const double adv = n.aux[2 + i];
                    const double rho = n.aux[2 + R + i];
                    if (!std::isfinite(rho)) continue;
                    const double s1 = rho * adv;
                    const double s2 = std::clamp(rho, 1.0 - eps, 1.0 + eps) * adv;
                    if (s1 <= s2) dn->data[i] += gs * rho * adv / valid;
                    // else: min picked the clipped branch with rho outside the
                    // clip interval, whose derivative w.r.t. rho is zero.
                }
            }
            break;
        }
        case Op::SumAll: {
            if (Tensor* dx = parent_grad(0)) {
                const double gs = g.data[0];
                for (double& v : dx->data) v += gs;
            }
            break;
        }
        case Op::MeanAll:
            break;  // implemented as SumAll + Scale
        case Op::WeightedSum: {
            for (std::size_t s = 0; s < n.parents.size(); ++s) {
                if (Tensor* dp = parent_grad(static_cast<int>(s))) {
                    for (std::size_t e = 0; e < g.numel(); ++e) dp->data[e] += n.aux[s] * g.data[e];
                }
            }
            break;
        }
    }
}

}  // namespace gea::num
