// SPDX-License-Identifier: Apache-2.0
#include "vdsm/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace vdsm {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// col is [C*kh*kw, Ho*Wo] row major; padded reads are zero.
void im2col(const double* img, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo,
            double* col) {
    const int plane = Ho * Wo;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                double* dst = col + ((static_cast<std::int64_t>(c) * kh + i) * kw + j) * plane;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int h = ho * stride - pad + i;
                    if (h < 0 || h >= H) {
                        std::memset(dst + ho * Wo, 0, sizeof(double) * static_cast<size_t>(Wo));
                        continue;
                    }
                    const double* src = img + (static_cast<std::int64_t>(c) * H + h) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int w = wo * stride - pad + j;
                        dst[ho * Wo + wo] = (w < 0 || w >= W) ? 0.0 : src[w];
                    }
                }
            }
        }
    }
}

// Scatter-add of a column matrix back into an image; exact adjoint of im2col.
void col2im_add(const double* col, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo,
                double* img) {
    const int plane = Ho * Wo;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const double* src = col + ((static_cast<std::int64_t>(c) * kh + i) * kw + j) * plane;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int h = ho * stride - pad + i;
                    if (h < 0 || h >= H) continue;
                    double* dst = img + (static_cast<std::int64_t>(c) * H + h) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int w = wo * stride - pad + j;
                        if (w >= 0 && w < W) dst[w] += src[ho * Wo + wo];
                    }
                }
            }
        }
    }
}

int conv_out_dim(int in, int k, int stride, int pad, const char* where) {
    const int span = in + 2 * pad - k;
    if (span < 0 || span % stride != 0)
        throw std::invalid_argument(std::string(where) + ": kernel/stride/pad do not tile the input");
    return span / stride + 1;
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw std::logic_error("invalid tape handle");
    return nodes_[static_cast<size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) { return const_cast<Node&>(static_cast<const Tape*>(this)->node(v)); }

Var Tape::push(Tensor val, bool rg, std::function<void()> back) {
    Node n;
    n.val = std::move(val);
    n.rg = rg;
    if (rg) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor v, bool requires_grad) {
    if (v.empty()) throw std::invalid_argument("leaf: empty tensor");
    return push(std::move(v), requires_grad, nullptr);
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (!n.rg) throw std::logic_error("grad requested for a node that does not require it");
    if (n.grad.empty()) throw std::logic_error("grad requested before backward reached this node");
    return n.grad;
}

double Tape::scalar_val(Var v) const {
    const Tensor& t = val(v);
    if (t.size() != 1) throw std::logic_error("scalar_val on non-scalar");
    return t[0];
}

Tensor& Tape::g(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor(n.val.shape());
    return n.grad;
}

void Tape::backward(Var root) {
    Node& r = node(root);
    if (r.val.size() != 1) throw std::logic_error("backward root must be scalar");
    if (!r.rg) throw std::logic_error("backward root does not require grad");
    g(root.id)[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.back && !n.grad.empty()) n.back();
    }
}

Var Tape::add(Var a, Var b) {
    check_same_shape(val(a), val(b), "add");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    const bool rga = rg(a.id), rgb = rg(b.id);
    Var o = push(std::move(out), rga || rgb, nullptr);
    if (rga || rgb) {
        int ia = a.id, ib = b.id, io = o.id;
        node(o).back = [this, ia, ib, io, rga, rgb]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            if (rga) {
                Tensor& ga = g(ia);
                for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (rgb) {
                Tensor& gb = g(ib);
                for (std::int64_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        };
    }
    return o;
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(val(a), val(b), "sub");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    const bool rga = rg(a.id), rgb = rg(b.id);
    Var o = push(std::move(out), rga || rgb, nullptr);
    if (rga || rgb) {
        int ia = a.id, ib = b.id, io = o.id;
        node(o).back = [this, ia, ib, io, rga, rgb]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            if (rga) {
                Tensor& ga = g(ia);
                for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (rgb) {
                Tensor& gb = g(ib);
                for (std::int64_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
            }
        };
    }
    return o;
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(val(a), val(b), "mul");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    const bool rga = rg(a.id), rgb = rg(b.id);
    Var o = push(std::move(out), rga || rgb, nullptr);
    if (rga || rgb) {
        int ia = a.id, ib = b.id, io = o.id;
        node(o).back = [this, ia, ib, io, rga, rgb]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            if (rga) {
                Tensor& ga = g(ia);
                const Tensor& vb2 = v(ib);
                for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb2[i];
            }
            if (rgb) {
                Tensor& gb = g(ib);
                const Tensor& va2 = v(ia);
                for (std::int64_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va2[i];
            }
        };
    }
    return o;
}

Var Tape::neg(Var a) { return mul_scalar(a, -1.0); }

Var Tape::add_scalar(Var a, double c) {
    Tensor out = val(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += c;
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        };
    }
    return o;
}

Var Tape::mul_scalar(Var a, double c) {
    Tensor out = val(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= c;
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io, c]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
        };
    }
    return o;
}

Var Tape::exp(Var a) {
    Tensor out = val(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            const Tensor& y = v(io);
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
        };
    }
    return o;
}

Var Tape::log(Var a) {
    Tensor out = val(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            const Tensor& x = v(ia);
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] / x[i];
        };
    }
    return o;
}

Var Tape::sigmoid(Var a) {
    Tensor out = val(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(out[i]);
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            const Tensor& y = v(io);
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
        };
    }
    return o;
}

Var Tape::tanh(Var a) {
    Tensor out = val(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            const Tensor& y = v(io);
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
        };
    }
    return o;
}

Var Tape::relu(Var a) { return leaky_relu(a, 0.0); }

Var Tape::leaky_relu(Var a, double slope) {
    Tensor out = val(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : slope * out[i];
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io, slope]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            const Tensor& x = v(ia);
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (x[i] > 0.0 ? 1.0 : slope);
        };
    }
    return o;
}

Var Tape::softplus(Var a) {
    Tensor out = val(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(out[i]);
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            const Tensor& x = v(ia);
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * stable_sigmoid(x[i]);
        };
    }
    return o;
}

Var Tape::sum(Var a) {
    double s = 0.0;
    const Tensor& va = val(a);
    for (std::int64_t i = 0; i < va.size(); ++i) s += va[i];
    Var o = push(Tensor::scalar(s), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io]() {
            const double go = nodes_[static_cast<size_t>(io)].grad[0];
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += go;
        };
    }
    return o;
}

Var Tape::add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("add_n: no inputs");
    Tensor out = val(xs[0]);
    bool any = rg(xs[0].id);
    for (size_t k = 1; k < xs.size(); ++k) {
        check_same_shape(out, val(xs[k]), "add_n");
        const Tensor& vk = val(xs[k]);
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] += vk[i];
        any = any || rg(xs[k].id);
    }
    Var o = push(std::move(out), any, nullptr);
    if (any) {
        std::vector<int> ids;
        for (Var x : xs) ids.push_back(x.id);
        int io = o.id;
        node(o).back = [this, ids, io]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            for (int id : ids) {
                if (!rg(id)) continue;
                Tensor& gi = g(id);
                for (std::int64_t i = 0; i < go.size(); ++i) gi[i] += go[i];
            }
        };
    }
    return o;
}

Var Tape::mean_rows(Var a) {
    const Tensor& va = val(a);
    if (va.rank() != 2) throw std::invalid_argument("mean_rows expects [N,D]");
    const int n = va.dim(0), d = va.dim(1);
    Tensor out({d});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) out[c] += va.at(r, c);
    for (int c = 0; c < d; ++c) out[c] /= n;
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io, n, d]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            Tensor& ga = g(ia);
            const double inv = 1.0 / n;
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < d; ++c) ga.at(r, c) += go[c] * inv;
        };
    }
    return o;
}

Var Tape::broadcast_rows(Var a, int n) {
    const Tensor& va = val(a);
    if (va.rank() != 1 && !(va.rank() == 2 && va.dim(0) == 1))
        throw std::invalid_argument("broadcast_rows expects a flat vector");
    const int d = static_cast<int>(va.size());
    Tensor out({n, d});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) out.at(r, c) = va[c];
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io, n, d]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            Tensor& ga = g(ia);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < d; ++c) ga[c] += go.at(r, c);
        };
    }
    return o;
}

Var Tape::concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw std::invalid_argument("concat: no inputs");
    const int rank = val(xs[0]).rank();
    if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: bad axis");
    std::vector<int> shape = val(xs[0]).shape();
    int total_axis = 0;
    std::int64_t outer = 1, tail = 1;
    for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
    for (int i = axis + 1; i < rank; ++i) tail *= shape[static_cast<size_t>(i)];
    bool any = false;
    std::vector<int> axis_len;
    for (Var x : xs) {
        const Tensor& t = val(x);
        if (t.rank() != rank) throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis && t.dim(i) != shape[static_cast<size_t>(i)])
                throw std::invalid_argument("concat: non-axis dim mismatch");
        axis_len.push_back(t.dim(axis));
        total_axis += t.dim(axis);
        any = any || rg(x.id);
    }
    shape[static_cast<size_t>(axis)] = total_axis;
    Tensor out(shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        std::int64_t off = 0;
        for (size_t k = 0; k < xs.size(); ++k) {
            const Tensor& t = val(xs[k]);
            const std::int64_t blk = static_cast<std::int64_t>(axis_len[k]) * tail;
            std::memcpy(out.data() + (o * total_axis + off) * tail, t.data() + o * blk,
                        sizeof(double) * static_cast<size_t>(blk));
            off += axis_len[k];
        }
    }
    Var o = push(std::move(out), any, nullptr);
    if (any) {
        std::vector<int> ids;
        for (Var x : xs) ids.push_back(x.id);
        int io = o.id;
        node(o).back = [this, ids, io, axis_len, outer, tail, total_axis]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            for (std::int64_t ob = 0; ob < outer; ++ob) {
                std::int64_t off = 0;
                for (size_t k = 0; k < ids.size(); ++k) {
                    const std::int64_t blk = static_cast<std::int64_t>(axis_len[k]) * tail;
                    if (rg(ids[k])) {
                        Tensor& gi = g(ids[k]);
                        const double* src = go.data() + (ob * total_axis + off) * tail;
                        double* dst = gi.data() + ob * blk;
                        for (std::int64_t i = 0; i < blk; ++i) dst[i] += src[i];
                    }
                    off += axis_len[k];
                }
            }
        };
    }
    return o;
}

Var Tape::slice(Var a, int axis, int start, int len) {
    const Tensor& va = val(a);
    const int rank = va.rank();
    if (axis < 0 || axis >= rank) throw std::invalid_argument("slice: bad axis");
    if (start < 0 || len <= 0 || start + len > va.dim(axis)) throw std::invalid_argument("slice: bad range");
    std::vector<int> shape = va.shape();
    std::int64_t outer = 1, tail = 1;
    for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
    for (int i = axis + 1; i < rank; ++i) tail *= shape[static_cast<size_t>(i)];
    const int full = shape[static_cast<size_t>(axis)];
    shape[static_cast<size_t>(axis)] = len;
    Tensor out(shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        std::memcpy(out.data() + o * len * tail, va.data() + (o * full + start) * tail,
                    sizeof(double) * static_cast<size_t>(len * tail));
    }
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io, outer, tail, full, start, len]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            Tensor& ga = g(ia);
            for (std::int64_t ob = 0; ob < outer; ++ob) {
                const double* src = go.data() + ob * len * tail;
                double* dst = ga.data() + (ob * full + start) * tail;
                for (std::int64_t i = 0; i < len * tail; ++i) dst[i] += src[i];
            }
        };
    }
    return o;
}

Var Tape::reshape(Var a, std::vector<int> shape) {
    Tensor out = val(a).reshaped(std::move(shape));
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            Tensor& ga = g(ia);
            for (std::int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        };
    }
    return o;
}

Var Tape::row(Var a, int r) { return slice(a, 0, r, 1); }

Var Tape::linear(Var x, Var w, Var b) {
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    if (vx.rank() != 2 || vw.rank() != 2 || vx.dim(1) != vw.dim(0))
        throw std::invalid_argument("linear: expected [N,K] x [K,M]");
    const int n = vx.dim(0), k = vx.dim(1), m = vw.dim(1);
    const bool has_b = b.valid();
    if (has_b && val(b).size() != m) throw std::invalid_argument("linear: bias size mismatch");
    Tensor out({n, m});
    {
        CMap xm(vx.data(), n, k), wm(vw.data(), k, m);
        MMap om(out.data(), n, m);
        om.noalias() = xm * wm;
        if (has_b) {
            const Tensor& vb = val(b);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < m; ++c) out.at(r, c) += vb[c];
        }
    }
    const bool any = rg(x.id) || rg(w.id) || (has_b && rg(b.id));
    Var o = push(std::move(out), any, nullptr);
    if (any) {
        int ix = x.id, iw = w.id, ib = has_b ? b.id : -1, io = o.id;
        node(o).back = [this, ix, iw, ib, io, n, k, m]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            CMap gm(go.data(), n, m);
            if (rg(ix)) {
                CMap wm(v(iw).data(), k, m);
                MMap gx(g(ix).data(), n, k);
                gx.noalias() += gm * wm.transpose();
            }
            if (rg(iw)) {
                CMap xm(v(ix).data(), n, k);
                MMap gw(g(iw).data(), k, m);
                gw.noalias() += xm.transpose() * gm;
            }
            if (ib >= 0 && rg(ib)) {
                Tensor& gb = g(ib);
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < m; ++c) gb[c] += go.at(r, c);
            }
        };
    }
    return o;
}

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    if (vx.rank() != 4 || vw.rank() != 4 || vx.dim(1) != vw.dim(1))
        throw std::invalid_argument("conv2d: expected x [N,Ci,H,W], w [Co,Ci,kh,kw]");
    const int n = vx.dim(0), ci = vx.dim(1), h = vx.dim(2), wd = vx.dim(3);
    const int co = vw.dim(0), kh = vw.dim(2), kw = vw.dim(3);
    const int ho = conv_out_dim(h, kh, stride, pad, "conv2d");
    const int wo = conv_out_dim(wd, kw, stride, pad, "conv2d");
    const int ckk = ci * kh * kw, plane = ho * wo;
    const bool has_b = b.valid();
    if (has_b && val(b).size() != co) throw std::invalid_argument("conv2d: bias size mismatch");

    Tensor out({n, co, ho, wo});
    std::vector<double> col(static_cast<size_t>(ckk) * plane);
    CMap wm(vw.data(), co, ckk);
    for (int s = 0; s < n; ++s) {
        im2col(vx.data() + static_cast<std::int64_t>(s) * ci * h * wd, ci, h, wd, kh, kw, stride, pad, ho, wo,
               col.data());
        CMap cm(col.data(), ckk, plane);
        MMap om(out.data() + static_cast<std::int64_t>(s) * co * plane, co, plane);
        om.noalias() = wm * cm;
    }
    if (has_b) {
        const Tensor& vb = val(b);
        for (int s = 0; s < n; ++s)
            for (int c = 0; c < co; ++c) {
                double* p = out.data() + (static_cast<std::int64_t>(s) * co + c) * plane;
                for (int i = 0; i < plane; ++i) p[i] += vb[c];
            }
    }
    const bool any = rg(x.id) || rg(w.id) || (has_b && rg(b.id));
    Var o = push(std::move(out), any, nullptr);
    if (any) {
        int ix = x.id, iw = w.id, ib = has_b ? b.id : -1, io = o.id;
        node(o).back = [this, ix, iw, ib, io, n, ci, h, wd, co, kh, kw, stride, pad, ho, wo]() {
            const int ckk = ci * kh * kw, plane = ho * wo;
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            std::vector<double> col(static_cast<size_t>(ckk) * plane);
            std::vector<double> gcol(static_cast<size_t>(ckk) * plane);
            CMap wm(v(iw).data(), co, ckk);
            for (int s = 0; s < n; ++s) {
                CMap gm(go.data() + static_cast<std::int64_t>(s) * co * plane, co, plane);
                if (rg(iw)) {
                    // im2col is recomputed here instead of cached from the forward pass.
                    im2col(v(ix).data() + static_cast<std::int64_t>(s) * ci * h * wd, ci, h, wd, kh, kw,
                           stride, pad, ho, wo, col.data());
                    CMap cm(col.data(), ckk, plane);
                    MMap gw(g(iw).data(), co, ckk);
                    gw.noalias() += gm * cm.transpose();
                }
                if (rg(ix)) {
                    MMap gc(gcol.data(), ckk, plane);
                    gc.noalias() = wm.transpose() * gm;
                    col2im_add(gcol.data(), ci, h, wd, kh, kw, stride, pad, ho, wo,
                               g(ix).data() + static_cast<std::int64_t>(s) * ci * h * wd);
                }
                if (ib >= 0 && rg(ib)) {
                    Tensor& gb = g(ib);
                    for (int c = 0; c < co; ++c) {
                        const double* p = go.data() + (static_cast<std::int64_t>(s) * co + c) * plane;
                        for (int i = 0; i < plane; ++i) gb[c] += p[i];
                    }
                }
            }
        };
    }
    return o;
}

Var Tape::conv2d_transpose(Var x, Var w, Var b, int stride, int pad) {
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    if (vx.rank() != 4 || vw.rank() != 4 || vx.dim(1) != vw.dim(0))
        throw std::invalid_argument("conv2d_transpose: expected x [N,Ci,H,W], w [Ci,Co,kh,kw]");
    const int n = vx.dim(0), ci = vx.dim(1), h = vx.dim(2), wd = vx.dim(3);
    const int co = vw.dim(1), kh = vw.dim(2), kw = vw.dim(3);
    const int hout = (h - 1) * stride - 2 * pad + kh;
    const int wout = (wd - 1) * stride - 2 * pad + kw;
    if (hout <= 0 || wout <= 0) throw std::invalid_argument("conv2d_transpose: empty output");
    const int cokk = co * kh * kw;
    const bool has_b = b.valid();
    if (has_b && val(b).size() != co) throw std::invalid_argument("conv2d_transpose: bias size mismatch");

    Tensor out({n, co, hout, wout});
    std::vector<double> col(static_cast<size_t>(cokk) * h * wd);
    CMap wm(vw.data(), ci, cokk);
    for (int s = 0; s < n; ++s) {
        CMap xm(vx.data() + static_cast<std::int64_t>(s) * ci * h * wd, ci, h * wd);
        MMap cm(col.data(), cokk, h * wd);
        cm.noalias() = wm.transpose() * xm;
        col2im_add(col.data(), co, hout, wout, kh, kw, stride, pad, h, wd,
                   out.data() + static_cast<std::int64_t>(s) * co * hout * wout);
    }
    if (has_b) {
        const Tensor& vb = val(b);
        const int plane = hout * wout;
        for (int s = 0; s < n; ++s)
            for (int c = 0; c < co; ++c) {
                double* p = out.data() + (static_cast<std::int64_t>(s) * co + c) * plane;
                for (int i = 0; i < plane; ++i) p[i] += vb[c];
            }
    }
    const bool any = rg(x.id) || rg(w.id) || (has_b && rg(b.id));
    Var o = push(std::move(out), any, nullptr);
    if (any) {
        int ix = x.id, iw = w.id, ib = has_b ? b.id : -1, io = o.id;
        node(o).back = [this, ix, iw, ib, io, n, ci, h, wd, co, kh, kw, stride, pad, hout, wout]() {
            const int cokk = co * kh * kw;
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            std::vector<double> gcol(static_cast<size_t>(cokk) * h * wd);
            CMap wm(v(iw).data(), ci, cokk);
            for (int s = 0; s < n; ++s) {
                // Patches of the output gradient, gathered on the input grid.
                im2col(go.data() + static_cast<std::int64_t>(s) * co * hout * wout, co, hout, wout, kh, kw,
                       stride, pad, h, wd, gcol.data());
                CMap gc(gcol.data(), cokk, h * wd);
                if (rg(ix)) {
                    MMap gx(g(ix).data() + static_cast<std::int64_t>(s) * ci * h * wd, ci, h * wd);
                    gx.noalias() += wm * gc;
                }
                if (rg(iw)) {
                    CMap xm(v(ix).data() + static_cast<std::int64_t>(s) * ci * h * wd, ci, h * wd);
                    MMap gw(g(iw).data(), ci, cokk);
                    gw.noalias() += xm * gc.transpose();
                }
                if (ib >= 0 && rg(ib)) {
                    Tensor& gb = g(ib);
                    const int plane = hout * wout;
                    for (int c = 0; c < co; ++c) {
                        const double* p = go.data() + (static_cast<std::int64_t>(s) * co + c) * plane;
                        for (int i = 0; i < plane; ++i) gb[c] += p[i];
                    }
                }
            }
        };
    }
    return o;
}

Var Tape::avg_pool2(Var a) {
    const Tensor& va = val(a);
    if (va.rank() != 4 || va.dim(2) % 2 != 0 || va.dim(3) % 2 != 0)
        throw std::invalid_argument("avg_pool2 expects [N,C,2h,2w]");
    const int n = va.dim(0), c = va.dim(1), h = va.dim(2), w = va.dim(3);
    const int ho = h / 2, wo = w / 2;
    Tensor out({n, c, ho, wo});
    for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
            const double* src = va.data() + (static_cast<std::int64_t>(s) * c + ch) * h * w;
            double* dst = out.data() + (static_cast<std::int64_t>(s) * c + ch) * ho * wo;
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j)
                    dst[i * wo + j] = 0.25 * (src[(2 * i) * w + 2 * j] + src[(2 * i) * w + 2 * j + 1] +
                                              src[(2 * i + 1) * w + 2 * j] + src[(2 * i + 1) * w + 2 * j + 1]);
        }
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io, n, c, h, w, ho, wo]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            Tensor& ga = g(ia);
            for (int s = 0; s < n; ++s)
                for (int ch = 0; ch < c; ++ch) {
                    const double* src = go.data() + (static_cast<std::int64_t>(s) * c + ch) * ho * wo;
                    double* dst = ga.data() + (static_cast<std::int64_t>(s) * c + ch) * h * w;
                    for (int i = 0; i < ho; ++i)
                        for (int j = 0; j < wo; ++j) {
                            const double v4 = 0.25 * src[i * wo + j];
                            dst[(2 * i) * w + 2 * j] += v4;
                            dst[(2 * i) * w + 2 * j + 1] += v4;
                            dst[(2 * i + 1) * w + 2 * j] += v4;
                            dst[(2 * i + 1) * w + 2 * j + 1] += v4;
                        }
                }
        };
    }
    return o;
}

Var Tape::softmax_sharp(Var a, double tau) {
    const Tensor& va = val(a);
    if (va.rank() > 2 || (va.rank() == 2 && va.dim(0) != 1))
        throw std::invalid_argument("softmax_sharp expects a flat vector");
    const std::int64_t k = va.size();
    double m = -1e300;
    for (std::int64_t i = 0; i < k; ++i) m = std::max(m, tau * va[i]);
    Tensor out(va.shape());
    double z = 0.0;
    for (std::int64_t i = 0; i < k; ++i) {
        out[i] = std::exp(tau * va[i] - m);
        z += out[i];
    }
    for (std::int64_t i = 0; i < k; ++i) out[i] /= z;
    Var o = push(std::move(out), rg(a.id), nullptr);
    if (rg(a.id)) {
        int ia = a.id, io = o.id;
        node(o).back = [this, ia, io, tau, k]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            const Tensor& y = v(io);
            Tensor& ga = g(ia);
            double dot = 0.0;
            for (std::int64_t i = 0; i < k; ++i) dot += go[i] * y[i];
            for (std::int64_t i = 0; i < k; ++i) ga[i] += tau * y[i] * (go[i] - dot);
        };
    }
    return o;
}

Var Tape::kl_diag(Var q_loc, Var q_scale, Var p_loc, Var p_scale) {
    const Tensor& ql = val(q_loc);
    check_same_shape(ql, val(q_scale), "kl_diag");
    check_same_shape(ql, val(p_loc), "kl_diag");
    check_same_shape(ql, val(p_scale), "kl_diag");
    const Tensor& qs = val(q_scale);
    const Tensor& pl = val(p_loc);
    const Tensor& ps = val(p_scale);
    double total = 0.0;
    for (std::int64_t i = 0; i < ql.size(); ++i) {
        const double r = qs[i] / ps[i];
        const double dm = (ql[i] - pl[i]) / ps[i];
        total += -std::log(r) + 0.5 * (r * r + dm * dm) - 0.5;
    }
    const bool any = rg(q_loc.id) || rg(q_scale.id) || rg(p_loc.id) || rg(p_scale.id);
    Var o = push(Tensor::scalar(total), any, nullptr);
    if (any) {
        int iql = q_loc.id, iqs = q_scale.id, ipl = p_loc.id, ips = p_scale.id, io = o.id;
        node(o).back = [this, iql, iqs, ipl, ips, io]() {
            const double go = nodes_[static_cast<size_t>(io)].grad[0];
            const Tensor& ql = v(iql);
            const Tensor& qs = v(iqs);
            const Tensor& pl = v(ipl);
            const Tensor& ps = v(ips);
            for (std::int64_t i = 0; i < ql.size(); ++i) {
                const double ps2 = ps[i] * ps[i];
                const double diff = ql[i] - pl[i];
                if (rg(iql)) g(iql)[i] += go * diff / ps2;
                if (rg(ipl)) g(ipl)[i] -= go * diff / ps2;
                if (rg(iqs)) g(iqs)[i] += go * (qs[i] / ps2 - 1.0 / qs[i]);
                if (rg(ips)) g(ips)[i] += go * (1.0 / ps[i] - (qs[i] * qs[i] + diff * diff) / (ps2 * ps[i]));
            }
        };
    }
    return o;
}

Var Tape::bernoulli_ll(Var x, Var p, double eps) {
    const Tensor& vx = val(x);
    check_same_shape(vx, val(p), "bernoulli_ll");
    if (eps <= 0.0 || eps >= 0.5) throw std::invalid_argument("bernoulli_ll: eps out of range");
    const Tensor& vp = val(p);
    double total = 0.0;
    for (std::int64_t i = 0; i < vx.size(); ++i) {
        const double pc = std::min(std::max(vp[i], eps), 1.0 - eps);
        total += vx[i] * std::log(pc) + (1.0 - vx[i]) * std::log(1.0 - pc);
    }
    const bool any = rg(x.id) || rg(p.id);
    Var o = push(Tensor::scalar(total), any, nullptr);
    if (any) {
        int ix = x.id, ip = p.id, io = o.id;
        node(o).back = [this, ix, ip, io, eps]() {
            const double go = nodes_[static_cast<size_t>(io)].grad[0];
            const Tensor& vx = v(ix);
            const Tensor& vp = v(ip);
            for (std::int64_t i = 0; i < vx.size(); ++i) {
                const double pc = std::min(std::max(vp[i], eps), 1.0 - eps);
                if (rg(ip) && vp[i] > eps && vp[i] < 1.0 - eps)
                    g(ip)[i] += go * (vx[i] / pc - (1.0 - vx[i]) / (1.0 - pc));
                if (rg(ix)) g(ix)[i] += go * (std::log(pc) - std::log(1.0 - pc));
            }
        };
    }
    return o;
}

Var Tape::blend(const std::vector<Var>& experts, Var mix) {
    if (experts.empty()) throw std::invalid_argument("blend: no experts");
    const Tensor& vm = val(mix);
    if (vm.size() != static_cast<std::int64_t>(experts.size()))
        throw std::invalid_argument("blend: mix length != expert count");
    Tensor out(val(experts[0]).shape());
    bool any = rg(mix.id);
    for (size_t e = 0; e < experts.size(); ++e) {
        const Tensor& t = val(experts[e]);
        check_same_shape(out, t, "blend");
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] += vm[static_cast<std::int64_t>(e)] * t[i];
        any = any || rg(experts[e].id);
    }
    Var o = push(std::move(out), any, nullptr);
    if (any) {
        std::vector<int> ids;
        for (Var e : experts) ids.push_back(e.id);
        int im = mix.id, io = o.id;
        node(o).back = [this, ids, im, io]() {
            const Tensor& go = nodes_[static_cast<size_t>(io)].grad;
            const Tensor& vm = v(im);
            for (size_t e = 0; e < ids.size(); ++e) {
                const Tensor& te = v(ids[e]);
                if (rg(ids[e])) {
                    Tensor& ge = g(ids[e]);
                    const double me = vm[static_cast<std::int64_t>(e)];
                    for (std::int64_t i = 0; i < go.size(); ++i) ge[i] += me * go[i];
                }
                if (rg(im)) {
                    double dot = 0.0;
                    for (std::int64_t i = 0; i < go.size(); ++i) dot += te[i] * go[i];
                    g(im)[static_cast<std::int64_t>(e)] += dot;
                }
            }
        };
    }
    return o;
}

}  // namespace vdsm
