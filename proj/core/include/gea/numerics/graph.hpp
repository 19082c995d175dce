#pragma once

#include <string>
#include <vector>

#include "gea/numerics/tensor.hpp"

namespace gea::num {

/// Set of vocabulary ids that are legal at one decoding position. Either a
/// contiguous range [begin, end) or an explicit id list.
struct LegalSet {
    int range_begin = -1;
    int range_end = -1;
    std::vector<int> ids;

    static LegalSet range(int begin, int end) { return {begin, end, {}}; }
    static LegalSet list(std::vector<int> v) { return {-1, -1, std::move(v)}; }

    bool is_range() const { return range_begin >= 0; }
    int size() const { return is_range() ? range_end - range_begin : static_cast<int>(ids.size()); }
    bool contains(int id) const;
    template <typename F>
    void for_each(F&& f) const {
        if (is_range()) {
            for (int i = range_begin; i < range_end; ++i) f(i);
        } else {
            for (int i : ids) f(i);
        }
    }
};

/// Reverse-mode tape over the fixed layer set used by this project: affine,
/// GELU/ReLU, layer norm, causal self-attention, embedding lookup, softmax
/// cross-entropy and MSE, plus the masked-decoding and PPO loss heads.
/// Gradients are exact analytic derivatives; everything runs in f64.
class Graph {
public:
    using NodeId = int;

    /// Leaf that never receives a gradient.
    NodeId constant(Tensor v, std::string name = "const");
    /// Leaf with a gradient slot (parameters and differentiable inputs).
    NodeId input(Tensor v, std::string name = "input");

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b) { return axpy(a, b, 1.0); }
    NodeId sub(NodeId a, NodeId b) { return axpy(a, b, -1.0); }
    /// a + alpha * b (same shapes).
    NodeId axpy(NodeId a, NodeId b, double alpha);
    NodeId scale(NodeId x, double c);
    /// Rows of x plus a broadcast row vector b.
    NodeId add_bias(NodeId x, NodeId b);
    NodeId gelu(NodeId x);
    NodeId relu(NodeId x);
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
    /// Row lookup; id -1 yields a zero row (used for non-token positions).
    NodeId embedding(NodeId table, const std::vector<int>& ids);
    NodeId gather_rows(NodeId x, std::vector<int> row_ids);
    /// Places rows of x at the given positions of a zero [total_rows, D] tensor.
    NodeId scatter_rows(NodeId x, std::vector<int> positions, int total_rows);
    NodeId mean_rows(NodeId x);
    NodeId concat_cols(const std::vector<NodeId>& xs);
    NodeId causal_self_attention(NodeId q, NodeId k, NodeId v, int n_heads);
    /// Elementwise dropout with keep-prob rescale; mask supplied by caller
    /// (1/(1-p) or 0 entries) so the graph stays deterministic.
    NodeId dropout(NodeId x, Tensor mask);
    NodeId stop_gradient(NodeId x);

    /// Scalar: sum_i weight[i] * (-log softmax(logits[i])[target[i]]).
    NodeId softmax_xent_sum(NodeId logits, std::vector<int> targets, std::vector<double> weights);
    /// Scalar: scale * sum((pred - target)^2).
    NodeId squared_error(NodeId pred, Tensor target, double scale);
    /// Per-row log prob of the taken id under softmax restricted to the legal set.
    NodeId masked_log_prob(NodeId logits, std::vector<LegalSet> legal, std::vector<int> taken);
    /// Per-row entropy of the masked softmax divided by ln(#legal); 0 when #legal == 1.
    NodeId masked_entropy(NodeId logits, std::vector<LegalSet> legal);
    /// Scalar: mean_i min(rho*A, clip(rho,1-eps,1+eps)*A), rho = exp(new - old).
    /// Non-finite ratios are skipped; the skip count is readable afterwards.
    NodeId ppo_clip_surrogate(NodeId new_log_prob, std::vector<double> old_log_prob,
                              std::vector<double> advantage, double clip_eps);
    NodeId sum_all(NodeId x);
    NodeId mean_all(NodeId x);
    /// Scalar/tensor combination sum_i coef[i] * xs[i] (same shapes).
    NodeId weighted_sum(const std::vector<NodeId>& xs, const std::vector<double>& coefs);

    /// Runs reverse accumulation from a scalar loss node.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const { return nodes_[id].val; }
    const Tensor& grad(NodeId id) const;
    bool has_grad(NodeId id) const;
    int ppo_skipped() const { return ppo_skipped_; }
    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf, MatMul, Axpy, Scale, AddBias, Gelu, Relu, LayerNorm, Embedding,
        GatherRows, ScatterRows, MeanRows, ConcatCols, Attention, Dropout,
        StopGrad, SoftmaxXent, SquaredError, MaskedLogProb, MaskedEntropy,
        PpoClip, SumAll, MeanAll, WeightedSum,
    };

    struct Node {
        Op op = Op::Leaf;
        std::vector<NodeId> parents;
        Tensor val;
        Tensor grad;
        bool requires_grad = false;
        std::string name;
        std::vector<int> ids;
        std::vector<double> aux;
        std::vector<Tensor> saved;
        std::vector<LegalSet> legal;
        int iaux = 0;
    };

    NodeId push(Node n);
    Node& at(NodeId id) { return nodes_[id]; }
    const Node& cat(NodeId id) const { return nodes_[id]; }
    bool any_parent_grad(const std::vector<NodeId>& ps) const;
    void ensure_grad(NodeId id);
    void backprop_node(NodeId id);
    [[noreturn]] void fail(const std::string& op, const std::string& msg) const;

    std::vector<Node> nodes_;
    int ppo_skipped_ = 0;
};

}  // namespace gea::num
