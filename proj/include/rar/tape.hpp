#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/params.hpp"
#include "rar/tensor.hpp"

namespace rar {

// Reverse-mode autodiff over a dynamically recorded tape. One tape per forward
// pass; backward() fills gradients for every ParamSet entry reachable from the
// loss and the tape is discarded afterwards. Forward evaluation is pure: no
// randomness, no hidden state, bit-identical on identical inputs.
//
// Fixed op set: dense (matmul+bias), conv2d (stride 1 or 2, zero padding),
// transposed conv2d (2x upsample), elementwise add/sub/mul, scale by constant,
// SiLU, sigmoid, softplus, mean-square and mean reductions, channel concat,
// broadcast of a channel vector over spatial dims, sinusoidal time embedding.

template <typename T>
class Tape {
public:
    struct Var {
        int id = -1;
    };

    Var input(Tensor<T> value) { return push(Op::kInput, std::move(value)); }

    Var constant(Tensor<T> value) { return push(Op::kInput, std::move(value)); }

    // Leaf bound to a ParamSet entry; backward accumulates into its grad slot.
    Var param(ParamSet<T>& ps, const std::string& name) {
        Var v = push(Op::kParam, ps.value(name));
        nodes_[v.id].pset = &ps;
        nodes_[v.id].pname = name;
        return v;
    }

    Var add(Var a, Var b) {
        val(a).require_same_shape(val(b), "add");
        Tensor<T> out(val(a).shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = val(a)[i] + val(b)[i];
        return push(Op::kAdd, std::move(out), a, b);
    }

    Var sub(Var a, Var b) {
        val(a).require_same_shape(val(b), "sub");
        Tensor<T> out(val(a).shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = val(a)[i] - val(b)[i];
        return push(Op::kSub, std::move(out), a, b);
    }

    Var mul(Var a, Var b) {
        val(a).require_same_shape(val(b), "mul");
        Tensor<T> out(val(a).shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = val(a)[i] * val(b)[i];
        return push(Op::kMul, std::move(out), a, b);
    }

    Var scale(Var a, double c) {
        Tensor<T> out(val(a).shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(c) * val(a)[i];
        Var v = push(Op::kScale, std::move(out), a);
        nodes_[v.id].factor = c;
        return v;
    }

    Var silu(Var a) {
        Tensor<T> out(val(a).shape);
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const T x = val(a)[i];
            out[i] = x * sigmoid_scalar(x);
        }
        return push(Op::kSilu, std::move(out), a);
    }

    Var sigmoid(Var a) {
        Tensor<T> out(val(a).shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = sigmoid_scalar(val(a)[i]);
        return push(Op::kSigmoid, std::move(out), a);
    }

    Var softplus(Var a) {
        Tensor<T> out(val(a).shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = softplus_scalar(val(a)[i]);
        return push(Op::kSoftplus, std::move(out), a);
    }

    // x treated as a flat vector of length n; w is [n, m], b is [m].
    Var dense(Var x, Var w, Var b) {
        const auto& xv = val(x);
        const auto& wv = val(w);
        const auto& bv = val(b);
        if (wv.rank() != 2)
            throw std::invalid_argument("dense: weight must be rank 2, got " + shape_str(wv.shape));
        const int n = wv.shape[0], m = wv.shape[1];
        if (static_cast<int>(xv.numel()) != n)
            throw std::invalid_argument("dense: input " + shape_str(xv.shape) + " incompatible with weight " +
                                        shape_str(wv.shape));
        if (bv.rank() != 1 || bv.shape[0] != m)
            throw std::invalid_argument("dense: bias " + shape_str(bv.shape) + " incompatible with weight " +
                                        shape_str(wv.shape));
        Tensor<T> out({m});
        for (int j = 0; j < m; ++j) {
            T acc = bv[j];
            for (int i = 0; i < n; ++i) acc += xv[i] * wv[static_cast<std::size_t>(i) * m + j];
            out[j] = acc;
        }
        return push(Op::kDense, std::move(out), x, w, b);
    }

    // x [H,W,Cin], k [kh,kw,Cin,Cout], b [Cout]; zero padding, stride 1 or 2.
    Var conv2d(Var x, Var k, Var b, int stride, int pad) {
        const auto& xv = val(x);
        const auto& kv = val(k);
        const auto& bv = val(b);
        if (xv.rank() != 3 || kv.rank() != 4)
            throw std::invalid_argument("conv2d: need x rank 3 and kernel rank 4, got " +
                                        shape_str(xv.shape) + " and " + shape_str(kv.shape));
        if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
        const int H = xv.shape[0], W = xv.shape[1], Cin = xv.shape[2];
        const int kh = kv.shape[0], kw = kv.shape[1];
        if (kv.shape[2] != Cin)
            throw std::invalid_argument("conv2d: input channels mismatch " + shape_str(xv.shape) + " vs kernel " +
                                        shape_str(kv.shape));
        const int Cout = kv.shape[3];
        if (bv.rank() != 1 || bv.shape[0] != Cout)
            throw std::invalid_argument("conv2d: bias " + shape_str(bv.shape) + " incompatible with kernel " +
                                        shape_str(kv.shape));
        const int Ho = (H + 2 * pad - kh) / stride + 1;
        const int Wo = (W + 2 * pad - kw) / stride + 1;
        if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: output would be empty");
        Tensor<T> out({Ho, Wo, Cout});
        conv2d_forward(xv, kv, bv, out, stride, pad);
        Var v = push(Op::kConv2d, std::move(out), x, k, b);
        nodes_[v.id].stride = stride;
        nodes_[v.id].pad = pad;
        return v;
    }

    // Transposed conv: out size (H-1)*stride - 2*pad + kh. kernel [kh,kw,Cin,Cout].
    Var tconv2d(Var x, Var k, Var b, int stride, int pad) {
        const auto& xv = val(x);
        const auto& kv = val(k);
        const auto& bv = val(b);
        if (xv.rank() != 3 || kv.rank() != 4)
            throw std::invalid_argument("tconv2d: need x rank 3 and kernel rank 4, got " +
                                        shape_str(xv.shape) + " and " + shape_str(kv.shape));
        const int H = xv.shape[0], W = xv.shape[1], Cin = xv.shape[2];
        const int kh = kv.shape[0], kw = kv.shape[1];
        if (kv.shape[2] != Cin)
            throw std::invalid_argument("tconv2d: input channels mismatch " + shape_str(xv.shape) + " vs kernel " +
                                        shape_str(kv.shape));
        const int Cout = kv.shape[3];
        if (bv.rank() != 1 || bv.shape[0] != Cout)
            throw std::invalid_argument("tconv2d: bias " + shape_str(bv.shape) + " incompatible with kernel " +
                                        shape_str(kv.shape));
        const int Ho = (H - 1) * stride - 2 * pad + kh;
        const int Wo = (W - 1) * stride - 2 * pad + kw;
        if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("tconv2d: output would be empty");
        Tensor<T> out({Ho, Wo, Cout});
        for (int c = 0; c < Cout; ++c)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) out[(static_cast<std::size_t>(oy) * Wo + ox) * Cout + c] = bv[c];
        for (int iy = 0; iy < H; ++iy)
            for (int ix = 0; ix < W; ++ix)
                for (int ky = 0; ky < kh; ++ky) {
                    const int oy = iy * stride + ky - pad;
                    if (oy < 0 || oy >= Ho) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ox = ix * stride + kx - pad;
                        if (ox < 0 || ox >= Wo) continue;
                        const std::size_t ibase = (static_cast<std::size_t>(iy) * W + ix) * Cin;
                        const std::size_t obase = (static_cast<std::size_t>(oy) * Wo + ox) * Cout;
                        const std::size_t kbase = (static_cast<std::size_t>(ky) * kw + kx) * Cin * Cout;
                        for (int ci = 0; ci < Cin; ++ci) {
                            const T xi = xv[ibase + ci];
                            const std::size_t krow = kbase + static_cast<std::size_t>(ci) * Cout;
                            for (int co = 0; co < Cout; ++co) out[obase + co] += xi * kv[krow + co];
                        }
                    }
                }
        Var v = push(Op::kTConv2d, std::move(out), x, k, b);
        nodes_[v.id].stride = stride;
        nodes_[v.id].pad = pad;
        return v;
    }

    Var concat_channels(Var a, Var b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.rank() != 3 || bv.rank() != 3 || av.shape[0] != bv.shape[0] || av.shape[1] != bv.shape[1])
            throw std::invalid_argument("concat_channels: spatial dims must match, got " + shape_str(av.shape) +
                                        " and " + shape_str(bv.shape));
        const int H = av.shape[0], W = av.shape[1], Ca = av.shape[2], Cb = bv.shape[2];
        Tensor<T> out({H, W, Ca + Cb});
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const std::size_t o = (static_cast<std::size_t>(y) * W + x) * (Ca + Cb);
                const std::size_t ia = (static_cast<std::size_t>(y) * W + x) * Ca;
                const std::size_t ib = (static_cast<std::size_t>(y) * W + x) * Cb;
                for (int c = 0; c < Ca; ++c) out[o + c] = av[ia + c];
                for (int c = 0; c < Cb; ++c) out[o + Ca + c] = bv[ib + c];
            }
        return push(Op::kConcatC, std::move(out), a, b);
    }

    // Channel vector [C] replicated to [H,W,C]. The only broadcast in the op set.
    Var broadcast_channels(Var v, int H, int W) {
        const auto& vv = val(v);
        if (vv.rank() != 1)
            throw std::invalid_argument("broadcast_channels: need rank-1 vector, got " + shape_str(vv.shape));
        const int C = vv.shape[0];
        Tensor<T> out({H, W, C});
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < C; ++c) out[(static_cast<std::size_t>(y) * W + x) * C + c] = vv[c];
        Var r = push(Op::kBroadcastC, std::move(out), v);
        return r;
    }

    Var mean_square(Var a) {
        const auto& av = val(a);
        double acc = 0.0;
        for (std::size_t i = 0; i < av.numel(); ++i)
            acc += static_cast<double>(av[i]) * static_cast<double>(av[i]);
        Tensor<T> out({1});
        out[0] = static_cast<T>(acc / static_cast<double>(av.numel()));
        return push(Op::kMeanSquare, std::move(out), a);
    }

    Var mean_all(Var a) {
        const auto& av = val(a);
        double acc = 0.0;
        for (std::size_t i = 0; i < av.numel(); ++i) acc += static_cast<double>(av[i]);
        Tensor<T> out({1});
        out[0] = static_cast<T>(acc / static_cast<double>(av.numel()));
        return push(Op::kMeanAll, std::move(out), a);
    }

    // Scalar t -> [sin(t*w_0), cos(t*w_0), sin(t*w_1), ...], dim even.
    Var time_embed(Var t, int dim) {
        const auto& tv = val(t);
        if (tv.numel() != 1) throw std::invalid_argument("time_embed: input must be scalar");
        if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embed: dim must be even and >= 2");
        Tensor<T> out({dim});
        const int half = dim / 2;
        const double tt = static_cast<double>(tv[0]);
        for (int i = 0; i < half; ++i) {
            const double w = time_embed_freq(i, half);
            out[2 * i] = static_cast<T>(std::sin(tt * w));
            out[2 * i + 1] = static_cast<T>(std::cos(tt * w));
        }
        return push(Op::kTimeEmbed, std::move(out), t);
    }

    const Tensor<T>& val(Var v) const { return nodes_[v.id].val; }

    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Gradients for
    // every Param leaf are accumulated into the owning ParamSet (which must be
    // zeroed by the caller beforehand if fresh gradients are wanted).
    void backward(Var loss) {
        if (val(loss).numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(val(loss).shape));
        for (auto& n : nodes_) {
            n.grad.shape = n.val.shape;
            n.grad.data.assign(n.val.numel(), T(0));
        }
        nodes_[loss.id].grad[0] = T(1);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) backward_node(nodes_[i]);
        for (auto& n : nodes_) {
            if (n.op == Op::kParam) {
                Tensor<T>& g = n.pset->grad(n.pname);
                for (std::size_t j = 0; j < g.numel(); ++j) g[j] += n.grad[j];
            }
            n.grad = Tensor<T>();
        }
    }

    static double time_embed_freq(int i, int half) {
        if (half == 1) return 1.0;
        return std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half - 1));
    }

private:
    enum class Op {
        kInput,
        kParam,
        kAdd,
        kSub,
        kMul,
        kScale,
        kSilu,
        kSigmoid,
        kSoftplus,
        kDense,
        kConv2d,
        kTConv2d,
        kConcatC,
        kBroadcastC,
        kMeanSquare,
        kMeanAll,
        kTimeEmbed,
    };

    struct Node {
        Op op;
        int a = -1, b = -1, c = -1;
        int stride = 1, pad = 0;
        double factor = 1.0;
        Tensor<T> val;
        Tensor<T> grad;
        ParamSet<T>* pset = nullptr;
        std::string pname;
    };

    static T sigmoid_scalar(T x) {
        if (x >= T(0)) {
            const T e = std::exp(-x);
            return T(1) / (T(1) + e);
        }
        const T e = std::exp(x);
        return e / (T(1) + e);
    }

    static T softplus_scalar(T x) {
        // log(1 + e^x), stable for large |x|
        if (x > T(30)) return x;
        if (x < T(-30)) return std::exp(x);
        return std::log(T(1) + std::exp(x));
    }

    Var push(Op op, Tensor<T> value, Var a = {}, Var b = {}, Var c = {}) {
        Node n;
        n.op = op;
        n.a = a.id;
        n.b = b.id;
        n.c = c.id;
        n.val = std::move(value);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    static void conv2d_forward(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b, Tensor<T>& out,
                               int stride, int pad) {
        const int H = x.shape[0], W = x.shape[1], Cin = x.shape[2];
        const int kh = k.shape[0], kw = k.shape[1], Cout = k.shape[3];
        const int Ho = out.shape[0], Wo = out.shape[1];
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                const std::size_t obase = (static_cast<std::size_t>(oy) * Wo + ox) * Cout;
                for (int co = 0; co < Cout; ++co) out[obase + co] = b[co];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        const std::size_t ibase = (static_cast<std::size_t>(iy) * W + ix) * Cin;
                        const std::size_t kbase = (static_cast<std::size_t>(ky) * kw + kx) * Cin * Cout;
                        for (int ci = 0; ci < Cin; ++ci) {
                            const T xi = x[ibase + ci];
                            const std::size_t krow = kbase + static_cast<std::size_t>(ci) * Cout;
                            for (int co = 0; co < Cout; ++co) out[obase + co] += xi * k[krow + co];
                        }
                    }
                }
            }
    }

    void backward_node(Node& n) {
        switch (n.op) {
            case Op::kInput:
            case Op::kParam:
                return;
            case Op::kAdd: {
                auto& ga = nodes_[n.a].grad;
                auto& gb = nodes_[n.b].grad;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                    ga[i] += n.grad[i];
                    gb[i] += n.grad[i];
                }
                return;
            }
            case Op::kSub: {
                auto& ga = nodes_[n.a].grad;
                auto& gb = nodes_[n.b].grad;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                    ga[i] += n.grad[i];
                    gb[i] -= n.grad[i];
                }
                return;
            }
            case Op::kMul: {
                auto& ga = nodes_[n.a].grad;
                auto& gb = nodes_[n.b].grad;
                const auto& av = nodes_[n.a].val;
                const auto& bv = nodes_[n.b].val;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                    ga[i] += n.grad[i] * bv[i];
                    gb[i] += n.grad[i] * av[i];
                }
                return;
            }
            case Op::kScale: {
                auto& ga = nodes_[n.a].grad;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) ga[i] += static_cast<T>(n.factor) * n.grad[i];
                return;
            }
            case Op::kSilu: {
                auto& ga = nodes_[n.a].grad;
                const auto& av = nodes_[n.a].val;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                    const T s = sigmoid_scalar(av[i]);
                    ga[i] += n.grad[i] * s * (T(1) + av[i] * (T(1) - s));
                }
                return;
            }
            case Op::kSigmoid: {
                auto& ga = nodes_[n.a].grad;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) {
                    const T s = n.val[i];
                    ga[i] += n.grad[i] * s * (T(1) - s);
                }
                return;
            }
            case Op::kSoftplus: {
                auto& ga = nodes_[n.a].grad;
                const auto& av = nodes_[n.a].val;
                for (std::size_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] * sigmoid_scalar(av[i]);
                return;
            }
            case Op::kDense: {
                auto& gx = nodes_[n.a].grad;
                auto& gw = nodes_[n.b].grad;
                auto& gb = nodes_[n.c].grad;
                const auto& xv = nodes_[n.a].val;
                const auto& wv = nodes_[n.b].val;
                const int nn = wv.shape[0], m = wv.shape[1];
                for (int j = 0; j < m; ++j) gb[j] += n.grad[j];
                for (int i = 0; i < nn; ++i) {
                    T acc = T(0);
                    const std::size_t row = static_cast<std::size_t>(i) * m;
                    for (int j = 0; j < m; ++j) {
                        acc += n.grad[j] * wv[row + j];
                        gw[row + j] += xv[i] * n.grad[j];
                    }
                    gx[i] += acc;
                }
                return;
            }
            case Op::kConv2d: {
                auto& gx = nodes_[n.a].grad;
                auto& gk = nodes_[n.b].grad;
                auto& gb = nodes_[n.c].grad;
                const auto& xv = nodes_[n.a].val;
                const auto& kv = nodes_[n.b].val;
                const int H = xv.shape[0], W = xv.shape[1], Cin = xv.shape[2];
                const int kh = kv.shape[0], kw = kv.shape[1], Cout = kv.shape[3];
                const int Ho = n.val.shape[0], Wo = n.val.shape[1];
                for (int oy = 0; oy < Ho; ++oy)
                    for (int ox = 0; ox < Wo; ++ox) {
                        const std::size_t obase = (static_cast<std::size_t>(oy) * Wo + ox) * Cout;
                        for (int co = 0; co < Cout; ++co) gb[co] += n.grad[obase + co];
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * n.stride + ky - n.pad;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * n.stride + kx - n.pad;
                                if (ix < 0 || ix >= W) continue;
                                const std::size_t ibase = (static_cast<std::size_t>(iy) * W + ix) * Cin;
                                const std::size_t kbase = (static_cast<std::size_t>(ky) * kw + kx) * Cin * Cout;
                                for (int ci = 0; ci < Cin; ++ci) {
                                    const std::size_t krow = kbase + static_cast<std::size_t>(ci) * Cout;
                                    T accx = T(0);
                                    for (int co = 0; co < Cout; ++co) {
                                        const T g = n.grad[obase + co];
                                        accx += g * kv[krow + co];
                                        gk[krow + co] += g * xv[ibase + ci];
                                    }
                                    gx[ibase + ci] += accx;
                                }
                            }
                        }
                    }
                return;
            }
            case Op::kTConv2d: {
                auto& gx = nodes_[n.a].grad;
                auto& gk = nodes_[n.b].grad;
                auto& gb = nodes_[n.c].grad;
                const auto& xv = nodes_[n.a].val;
                const auto& kv = nodes_[n.b].val;
                const int H = xv.shape[0], W = xv.shape[1], Cin = xv.shape[2];
                const int kh = kv.shape[0], kw = kv.shape[1], Cout = kv.shape[3];
                const int Ho = n.val.shape[0], Wo = n.val.shape[1];
                for (int oy = 0; oy < Ho; ++oy) {
                    const std::size_t orow = static_cast<std::size_t>(oy) * Wo;
                    for (int ox = 0; ox < Wo; ++ox)
                        for (int co = 0; co < Cout; ++co) gb[co] += n.grad[(orow + ox) * Cout + co];
                }
                for (int iy = 0; iy < H; ++iy)
                    for (int ix = 0; ix < W; ++ix)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int oy = iy * n.stride + ky - n.pad;
                            if (oy < 0 || oy >= Ho) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ox = ix * n.stride + kx - n.pad;
                                if (ox < 0 || ox >= Wo) continue;
                                const std::size_t ibase = (static_cast<std::size_t>(iy) * W + ix) * Cin;
                                const std::size_t obase = (static_cast<std::size_t>(oy) * Wo + ox) * Cout;
                                const std::size_t kbase = (static_cast<std::size_t>(ky) * kw + kx) * Cin * Cout;
                                for (int ci = 0; ci < Cin; ++ci) {
                                    const std::size_t krow = kbase + static_cast<std::size_t>(ci) * Cout;
                                    T accx = T(0);
                                    for (int co = 0; co < Cout; ++co) {
                                        const T g = n.grad[obase + co];
                                        accx += g * kv[krow + co];
                                        gk[krow + co] += g * xv[ibase + ci];
                                    }
                                    gx[ibase + ci] += accx;
                                }
                            }
                        }
                return;
            }
            case Op::kConcatC: {
                auto& ga = nodes_[n.a].grad;
                auto& gb = nodes_[n.b].grad;
                const int H = n.val.shape[0], W = n.val.shape[1];
                const int Ca = nodes_[n.a].val.shape[2], Cb = nodes_[n.b].val.shape[2];
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        const std::size_t o = (static_cast<std::size_t>(y) * W + x) * (Ca + Cb);
                        const std::size_t ia = (static_cast<std::size_t>(y) * W + x) * Ca;
                        const std::size_t ib = (static_cast<std::size_t>(y) * W + x) * Cb;
                        for (int c = 0; c < Ca; ++c) ga[ia + c] += n.grad[o + c];
                        for (int c = 0; c < Cb; ++c) gb[ib + c] += n.grad[o + Ca + c];
                    }
                return;
            }
            case Op::kBroadcastC: {
                auto& gv = nodes_[n.a].grad;
                const int H = n.val.shape[0], W = n.val.shape[1], C = n.val.shape[2];
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        for (int c = 0; c < C; ++c) gv[c] += n.grad[(static_cast<std::size_t>(y) * W + x) * C + c];
                return;
            }
            case Op::kMeanSquare: {
                auto& ga = nodes_[n.a].grad;
                const auto& av = nodes_[n.a].val;
                const T g = n.grad[0];
                const T inv_n = static_cast<T>(1.0 / static_cast<double>(av.numel()));
                for (std::size_t i = 0; i < av.numel(); ++i) ga[i] += g * T(2) * av[i] * inv_n;
                return;
            }
            case Op::kMeanAll: {
                auto& ga = nodes_[n.a].grad;
                const T g = n.grad[0];
                const T inv_n = static_cast<T>(1.0 / static_cast<double>(ga.numel()));
                for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g * inv_n;
                return;
            }
            case Op::kTimeEmbed: {
                auto& gt = nodes_[n.a].grad;
                const double tt = static_cast<double>(nodes_[n.a].val[0]);
                const int half = n.val.shape[0] / 2;
                double acc = 0.0;
                for (int i = 0; i < half; ++i) {
                    const double w = time_embed_freq(i, half);
                    acc += static_cast<double>(n.grad[2 * i]) * std::cos(tt * w) * w;
                    acc -= static_cast<double>(n.grad[2 * i + 1]) * std::sin(tt * w) * w;
                }
                gt[0] += static_cast<T>(acc);
                return;
            }
        }
    }

    std::vector<Node> nodes_;
};

template <typename T>
using Var = typename Tape<T>::Var;

}  // namespace rar
