// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "vdsm/tensor.hpp"

namespace vdsm {

// Handle into a Tape. Default-constructed handles are invalid.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over double tensors. One tape per forward pass; backward
// walks nodes in reverse creation order. Closures capture node ids, never
// references into the node vector (it reallocates as the graph grows).
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor v, bool requires_grad = false);
    Var constant(Tensor v) { return leaf(std::move(v), false); }
    Var scalar(double v) { return constant(Tensor::scalar(v)); }

    const Tensor& val(Var v) const { return node(v).val; }
    const Tensor& grad(Var v) const;
    bool has_grad(Var v) const { return !node(v).grad.empty(); }
    bool requires_grad(Var v) const { return node(v).rg; }
    double scalar_val(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    // Elementwise; shapes must match exactly (no implicit broadcasting).
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var neg(Var a);
    Var add_scalar(Var a, double c);
    Var mul_scalar(Var a, double c);

    Var exp(Var a);
    Var log(Var a);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var leaky_relu(Var a, double slope);
    Var softplus(Var a);

    Var sum(Var a);                      // -> {1}
    Var add_n(const std::vector<Var>& xs);
    Var mean_rows(Var a);                // [N,D] -> {D}
    Var broadcast_rows(Var a, int n);    // {D} or [1,D] -> [N,D]
    Var concat(const std::vector<Var>& xs, int axis);
    Var slice(Var a, int axis, int start, int len);
    Var reshape(Var a, std::vector<int> shape);
    Var row(Var a, int r);               // [N,D] -> [1,D]

    // y = x W + b. x [N,K], W [K,M], b {M} (pass invalid Var for no bias).
    Var linear(Var x, Var w, Var b);
    // x [N,Ci,H,W], w [Co,Ci,kh,kw], b {Co} or invalid.
    Var conv2d(Var x, Var w, Var b, int stride, int pad);
    // x [N,Ci,H,W], w [Ci,Co,kh,kw], b {Co} or invalid.
    // Output spatial size (H-1)*stride - 2*pad + kh.
    Var conv2d_transpose(Var x, Var w, Var b, int stride, int pad);
    Var avg_pool2(Var a);                // 2x2 mean pool, even H and W

    // softmax(tau * a) over a flat vector ({K} or [1,K]).
    Var softmax_sharp(Var a, double tau);

    // Sum over all coordinates of KL(N(q_loc, q_scale^2) || N(p_loc, p_scale^2)).
    Var kl_diag(Var q_loc, Var q_scale, Var p_loc, Var p_scale);
    // Sum over elements of x*log(p) + (1-x)*log(1-p), p clamped to [eps, 1-eps].
    Var bernoulli_ll(Var x, Var p, double eps);
    // out = sum_e mix[e] * experts[e]; mix is {E}, experts share one shape.
    Var blend(const std::vector<Var>& experts, Var mix);

    // Seeds d(root)/d(root) = 1 and runs all backward closures up to root.
    // root must be a scalar ({1}).
    void backward(Var root);

private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool rg = false;
        std::function<void()> back;
    };

    const Node& node(Var v) const;
    Node& node(Var v);
    Var push(Tensor val, bool rg, std::function<void()> back);
    // Gradient accumulator; allocates zeros on first touch.
    Tensor& g(int id);
    bool rg(int id) const { return nodes_[static_cast<size_t>(id)].rg; }
    const Tensor& v(int id) const { return nodes_[static_cast<size_t>(id)].val; }

    std::vector<Node> nodes_;
};

}  // namespace vdsm
