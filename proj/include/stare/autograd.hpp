#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "stare/compose.hpp"
#include "stare/tensor.hpp"

namespace stare {

struct Var {
    std::int64_t id = -1;
    bool valid() const { return id >= 0; }
};

struct ConvDims {
    std::size_t batch, in_h, in_w, filters, k_h, k_w;
    std::size_t out_h() const { return in_h - k_h + 1; }
    std::size_t out_w() const { return in_w - k_w + 1; }
};

// Reverse-mode tape over Tensor values. A forward pass appends nodes in
// topological order; backward() walks them in reverse. All reductions run
// serially in fixed index order, so repeated runs are bit-identical.
class Tape {
public:
    Var leaf(const Tensor& value, bool requires_grad);

    const Tensor& val(Var v) const { return nodes_[check(v)].value; }
    // Gradient of the last backward() target w.r.t. v (zeros if untouched).
    Tensor grad_of(Var v) const;

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // A * B^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_rowvec(Var a, Var v);  // v is 1 x cols, broadcast over rows
    Var tanh_act(Var a);
    Var relu(Var a);
    Var gather_rows(Var a, std::vector<std::int64_t> idx);
    Var scatter_add_rows(Var a, std::vector<std::int64_t> idx, std::size_t out_rows);
    // Row i is multiplied by weights[group[i]]; all weight matrices share shape.
    Var group_matmul(Var a, const std::vector<Var>& weights, std::vector<std::int32_t> group);
    // Row-wise composition. If rel has twice the entity width the two halves
    // are composed independently and concatenated.
    Var phi_rows(Var ent, Var rel, PhiKind kind);
    Var where_rows(std::vector<std::uint8_t> pick_a, Var a, Var b);
    Var concat_cols(Var a, Var b);
    Var scale_rows(Var a, std::vector<double> factors);
    Var reshape(Var a, std::size_t rows, std::size_t cols);
    // keep has the same shape as scores; masked-out entries get probability 0.
    Var masked_softmax_rows(Var scores, Tensor keep);
    Var attn_scores(Var q, Var k, std::size_t batch, std::size_t len, std::size_t heads);
    Var attn_mix(Var probs, Var v, std::size_t batch, std::size_t len, std::size_t heads);
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    // x is (batch*len) x d; mean over kept positions of each batch row.
    Var masked_mean_rows(Var x, std::vector<std::uint8_t> keep, std::size_t batch,
                         std::size_t len);
    Var dropout(Var x, double p, std::mt19937_64& rng, bool training);
    Var conv2d(Var x, Var kernel, Var bias, ConvDims dims);
    // Mean binary cross entropy with logits over kept columns; labels fixed.
    Var bce_with_logits(Var scores, Tensor labels, std::vector<std::uint8_t> col_keep);
    Var sum_all(Var a);

    // Backpropagates from a 1x1 node. Gradients accumulate into every node
    // reachable from a leaf created with requires_grad.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    // back receives the node's output gradient and accumulates into parents.
    using BackFn = std::function<void(Tape&, const Tensor&)>;

    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily
        bool requires_grad = false;
        BackFn back;
    };

    std::vector<Node> nodes_;

    std::size_t check(Var v) const;
    Var push(Tensor value, bool requires_grad, BackFn back);
    Tensor& acc(std::size_t id);
    bool needs(Var v) const { return nodes_[check(v)].requires_grad; }
};

}  // namespace stare
