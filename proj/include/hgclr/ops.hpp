#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "hgclr/tensor.hpp"

namespace hgclr {

namespace detail {

template <class S>
inline std::shared_ptr<TensorNode<S>> new_node(const char* op, Shape shape,
                                               std::initializer_list<Tensor<S>> parents) {
    auto n = std::make_shared<TensorNode<S>>();
    n->value.assign(static_cast<std::size_t>(shape_numel(shape)), S(0));
    n->shape = std::move(shape);
    n->op = op;
    bool rg = false;
    if (grad_mode_flag())
        for (const auto& p : parents) rg = rg || p.requires_grad();
    n->requires_grad = rg;
    if (rg)
        for (const auto& p : parents) n->parents.push_back(p.node());
    n->seq = ++node_seq_counter();
    return n;
}

template <class S>
inline void check_finite(const TensorNode<S>& n) {
    for (S v : n.value)
        if (!std::isfinite(static_cast<double>(v)))
            throw NumericError(std::string("non-finite value after op '") + n.op + "'");
}

template <class S>
inline void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Large negative logit used for masking; survives max-subtraction and
// underflows to exactly zero after exp in both precisions.
template <class S>
constexpr S mask_neg() {
    return S(-1e9);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape(a, b, "add");
    auto n = detail::new_node<S>("add", a.shape(), {a, b});
    const S* pa = a.data();
    const S* pb = b.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa[i] + pb[i];
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto an = a.node();
        auto bn = b.node();
        n->backward_fn = [an, bn](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (an->requires_grad) {
                S* ga = an->grad_data();
                for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i];
                an->mark_grad_live();
            }
            if (bn->requires_grad) {
                S* gb = bn->grad_data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gb[i] += g[i];
                bn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape(a, b, "sub");
    auto n = detail::new_node<S>("sub", a.shape(), {a, b});
    const S* pa = a.data();
    const S* pb = b.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa[i] - pb[i];
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto an = a.node();
        auto bn = b.node();
        n->backward_fn = [an, bn](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (an->requires_grad) {
                S* ga = an->grad_data();
                for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i];
                an->mark_grad_live();
            }
            if (bn->requires_grad) {
                S* gb = bn->grad_data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gb[i] -= g[i];
                bn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape(a, b, "mul");
    auto n = detail::new_node<S>("mul", a.shape(), {a, b});
    const S* pa = a.data();
    const S* pb = b.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa[i] * pb[i];
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto an = a.node();
        auto bn = b.node();
        n->backward_fn = [an, bn](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (an->requires_grad) {
                S* ga = an->grad_data();
                const S* pb2 = bn->value.data();
                for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i] * pb2[i];
                an->mark_grad_live();
            }
            if (bn->requires_grad) {
                S* gb = bn->grad_data();
                const S* pa2 = an->value.data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gb[i] += g[i] * pa2[i];
                bn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    auto n = detail::new_node<S>("scale", a.shape(), {a});
    const S* pa = a.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa[i] * c;
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto an = a.node();
        n->backward_fn = [an, c](TensorNode<S>& self) {
            S* ga = an->grad_data();
            const S* g = self.grad.data();
            for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i] * c;
            an->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
    auto n = detail::new_node<S>("relu", a.shape(), {a});
    const S* pa = a.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa[i] > S(0) ? pa[i] : S(0);
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto an = a.node();
        n->backward_fn = [an](TensorNode<S>& self) {
            S* ga = an->grad_data();
            const S* g = self.grad.data();
            const S* pa2 = an->value.data();
            for (std::size_t i = 0; i < self.value.size(); ++i)
                if (pa2[i] > S(0)) ga[i] += g[i];
            an->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& a) {
    auto n = detail::new_node<S>("sigmoid", a.shape(), {a});
    const S* pa = a.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) {
        S x = pa[i];
        n->value[i] = x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                                : S(std::exp(x) / (S(1) + std::exp(x)));
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto an = a.node();
        n->backward_fn = [an](TensorNode<S>& self) {
            S* ga = an->grad_data();
            const S* g = self.grad.data();
            const S* y = self.value.data();
            for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i] * y[i] * (S(1) - y[i]);
            an->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <class S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <class S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

// x: (..., K) times w: (K, P) -> (..., P). Leading dims of x are collapsed.
template <class S>
Tensor<S> matmul(const Tensor<S>& x, const Tensor<S>& w) {
    if (w.rank() != 2) throw ShapeError("matmul: w must be rank 2");
    if (x.rank() < 1 || x.shape().back() != w.dim(0))
        throw ShapeError("matmul: inner dims " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    const std::int64_t K = w.dim(0), P = w.dim(1);
    const std::int64_t M = x.numel() / std::max<std::int64_t>(K, 1);
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    out_shape.push_back(P);
    auto n = detail::new_node<S>("matmul", out_shape, {x, w});
    {
        const S* px = x.data();
        const S* pw = w.data();
        S* po = n->value.data();
        for (std::int64_t i = 0; i < M; ++i) {
            S* orow = po + i * P;
            const S* xrow = px + i * K;
            for (std::int64_t k = 0; k < K; ++k) {
                const S xv = xrow[k];
                if (xv == S(0)) continue;
                const S* wrow = pw + k * P;
                for (std::int64_t j = 0; j < P; ++j) orow[j] += xv * wrow[j];
            }
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        auto wn = w.node();
        n->backward_fn = [xn, wn, M, K, P](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (xn->requires_grad) {
                S* gx = xn->grad_data();
                const S* pw = wn->value.data();
                for (std::int64_t i = 0; i < M; ++i) {
                    const S* grow = g + i * P;
                    S* gxrow = gx + i * K;
                    for (std::int64_t k = 0; k < K; ++k) {
                        const S* wrow = pw + k * P;
                        S acc = S(0);
                        for (std::int64_t j = 0; j < P; ++j) acc += grow[j] * wrow[j];
                        gxrow[k] += acc;
                    }
                }
                xn->mark_grad_live();
            }
            if (wn->requires_grad) {
                S* gw = wn->grad_data();
                const S* px = xn->value.data();
                for (std::int64_t i = 0; i < M; ++i) {
                    const S* xrow = px + i * K;
                    const S* grow = g + i * P;
                    for (std::int64_t k = 0; k < K; ++k) {
                        const S xv = xrow[k];
                        if (xv == S(0)) continue;
                        S* gwrow = gw + k * P;
                        for (std::int64_t j = 0; j < P; ++j) gwrow[j] += xv * grow[j];
                    }
                }
                wn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

// x: (..., K) times w^T where w: (P, K) -> (..., P). Row-against-row product.
template <class S>
Tensor<S> matmul_nt(const Tensor<S>& x, const Tensor<S>& w) {
    if (w.rank() != 2) throw ShapeError("matmul_nt: w must be rank 2");
    if (x.rank() < 1 || x.shape().back() != w.dim(1))
        throw ShapeError("matmul_nt: inner dims " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    const std::int64_t K = w.dim(1), P = w.dim(0);
    const std::int64_t M = x.numel() / std::max<std::int64_t>(K, 1);
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    out_shape.push_back(P);
    auto n = detail::new_node<S>("matmul_nt", out_shape, {x, w});
    {
        const S* px = x.data();
        const S* pw = w.data();
        S* po = n->value.data();
        for (std::int64_t i = 0; i < M; ++i) {
            const S* xrow = px + i * K;
            S* orow = po + i * P;
            for (std::int64_t p = 0; p < P; ++p) {
                const S* wrow = pw + p * K;
                S acc = S(0);
                for (std::int64_t k = 0; k < K; ++k) acc += xrow[k] * wrow[k];
                orow[p] = acc;
            }
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        auto wn = w.node();
        n->backward_fn = [xn, wn, M, K, P](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (xn->requires_grad) {
                S* gx = xn->grad_data();
                const S* pw = wn->value.data();
                for (std::int64_t i = 0; i < M; ++i) {
                    const S* grow = g + i * P;
                    S* gxrow = gx + i * K;
                    for (std::int64_t p = 0; p < P; ++p) {
                        const S gv = grow[p];
                        if (gv == S(0)) continue;
                        const S* wrow = pw + p * K;
                        for (std::int64_t k = 0; k < K; ++k) gxrow[k] += gv * wrow[k];
                    }
                }
                xn->mark_grad_live();
            }
            if (wn->requires_grad) {
                S* gw = wn->grad_data();
                const S* px = xn->value.data();
                for (std::int64_t i = 0; i < M; ++i) {
                    const S* xrow = px + i * K;
                    const S* grow = g + i * P;
                    for (std::int64_t p = 0; p < P; ++p) {
                        const S gv = grow[p];
                        if (gv == S(0)) continue;
                        S* gwrow = gw + p * K;
                        for (std::int64_t k = 0; k < K; ++k) gwrow[k] += gv * xrow[k];
                    }
                }
                wn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

// Batched product: a (B, M, K) times b (B, K, P) -> (B, M, P).
template <class S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw ShapeError("bmm: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), P = b.dim(2);
    auto n = detail::new_node<S>("bmm", {B, M, P}, {a, b});
    {
        const S* pa = a.data();
        const S* pb = b.data();
        S* po = n->value.data();
        for (std::int64_t bb = 0; bb < B; ++bb) {
            const S* ab = pa + bb * M * K;
            const S* bbp = pb + bb * K * P;
            S* ob = po + bb * M * P;
            for (std::int64_t i = 0; i < M; ++i) {
                S* orow = ob + i * P;
                const S* arow = ab + i * K;
                for (std::int64_t k = 0; k < K; ++k) {
                    const S av = arow[k];
                    if (av == S(0)) continue;
                    const S* brow = bbp + k * P;
                    for (std::int64_t j = 0; j < P; ++j) orow[j] += av * brow[j];
                }
            }
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto an = a.node();
        auto bn = b.node();
        n->backward_fn = [an, bn, B, M, K, P](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (an->requires_grad) {
                S* ga = an->grad_data();
                const S* pb = bn->value.data();
                for (std::int64_t bb = 0; bb < B; ++bb) {
                    const S* gb = g + bb * M * P;
                    const S* bbp = pb + bb * K * P;
                    S* gab = ga + bb * M * K;
                    for (std::int64_t i = 0; i < M; ++i) {
                        const S* grow = gb + i * P;
                        S* garow = gab + i * K;
                        for (std::int64_t k = 0; k < K; ++k) {
                            const S* brow = bbp + k * P;
                            S acc = S(0);
                            for (std::int64_t j = 0; j < P; ++j) acc += grow[j] * brow[j];
                            garow[k] += acc;
                        }
                    }
                }
                an->mark_grad_live();
            }
            if (bn->requires_grad) {
                S* gbv = bn->grad_data();
                const S* pa = an->value.data();
                for (std::int64_t bb = 0; bb < B; ++bb) {
                    const S* ab = pa + bb * M * K;
                    const S* gb = g + bb * M * P;
                    S* gbb = gbv + bb * K * P;
                    for (std::int64_t i = 0; i < M; ++i) {
                        const S* arow = ab + i * K;
                        const S* grow = gb + i * P;
                        for (std::int64_t k = 0; k < K; ++k) {
                            const S av = arow[k];
                            if (av == S(0)) continue;
                            S* gbrow = gbb + k * P;
                            for (std::int64_t j = 0; j < P; ++j) gbrow[j] += av * grow[j];
                        }
                    }
                }
                bn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

// Batched product against transposed rhs: a (B, M, K) times b (B, P, K) -> (B, M, P).
template <class S>
Tensor<S> bmm_nt(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
        throw ShapeError("bmm_nt: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), P = b.dim(1);
    auto n = detail::new_node<S>("bmm_nt", {B, M, P}, {a, b});
    {
        const S* pa = a.data();
        const S* pb = b.data();
        S* po = n->value.data();
        for (std::int64_t bb = 0; bb < B; ++bb) {
            const S* ab = pa + bb * M * K;
            const S* bbp = pb + bb * P * K;
            S* ob = po + bb * M * P;
            for (std::int64_t i = 0; i < M; ++i) {
                const S* arow = ab + i * K;
                S* orow = ob + i * P;
                for (std::int64_t p = 0; p < P; ++p) {
                    const S* brow = bbp + p * K;
                    S acc = S(0);
                    for (std::int64_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
                    orow[p] = acc;
                }
            }
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto an = a.node();
        auto bn = b.node();
        n->backward_fn = [an, bn, B, M, K, P](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (an->requires_grad) {
                S* ga = an->grad_data();
                const S* pb = bn->value.data();
                for (std::int64_t bb = 0; bb < B; ++bb) {
                    const S* gb = g + bb * M * P;
                    const S* bbp = pb + bb * P * K;
                    S* gab = ga + bb * M * K;
                    for (std::int64_t i = 0; i < M; ++i) {
                        const S* grow = gb + i * P;
                        S* garow = gab + i * K;
                        for (std::int64_t p = 0; p < P; ++p) {
                            const S gv = grow[p];
                            if (gv == S(0)) continue;
                            const S* brow = bbp + p * K;
                            for (std::int64_t k = 0; k < K; ++k) garow[k] += gv * brow[k];
                        }
                    }
                }
                an->mark_grad_live();
            }
            if (bn->requires_grad) {
                S* gbv = bn->grad_data();
                const S* pa = an->value.data();
                for (std::int64_t bb = 0; bb < B; ++bb) {
                    const S* ab = pa + bb * M * K;
                    const S* gb = g + bb * M * P;
                    S* gbb = gbv + bb * P * K;
                    for (std::int64_t i = 0; i < M; ++i) {
                        const S* arow = ab + i * K;
                        const S* grow = gb + i * P;
                        for (std::int64_t p = 0; p < P; ++p) {
                            const S gv = grow[p];
                            if (gv == S(0)) continue;
                            S* gbrow = gbb + p * K;
                            for (std::int64_t k = 0; k < K; ++k) gbrow[k] += gv * arow[k];
                        }
                    }
                }
                bn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

// ---------------------------------------------------------------------------
// shape movement
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw ShapeError("reshape: numel mismatch " + shape_str(x.shape()) + " -> " + shape_str(new_shape));
    auto n = detail::new_node<S>("reshape", std::move(new_shape), {x});
    n->value = x.values();
    if (n->requires_grad) {
        auto xn = x.node();
        n->backward_fn = [xn](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S* g = self.grad.data();
            for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += g[i];
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// (B, n, d) -> (B*h, n, d/h)
template <class S>
Tensor<S> split_heads(const Tensor<S>& x, std::int64_t heads) {
    if (x.rank() != 3) throw ShapeError("split_heads: need rank 3");
    const std::int64_t B = x.dim(0), N = x.dim(1), D = x.dim(2);
    if (heads <= 0 || D % heads != 0) throw ShapeError("split_heads: d not divisible by heads");
    const std::int64_t H = heads, DH = D / heads;
    auto n = detail::new_node<S>("split_heads", {B * H, N, DH}, {x});
    {
        const S* px = x.data();
        S* po = n->value.data();
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t i = 0; i < N; ++i)
                for (std::int64_t h = 0; h < H; ++h)
                    std::memcpy(po + (((b * H + h) * N) + i) * DH, px + ((b * N + i) * D) + h * DH,
                                sizeof(S) * static_cast<std::size_t>(DH));
    }
    if (n->requires_grad) {
        auto xn = x.node();
        n->backward_fn = [xn, B, N, D, H, DH](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S* g = self.grad.data();
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t i = 0; i < N; ++i)
                    for (std::int64_t h = 0; h < H; ++h) {
                        const S* src = g + (((b * H + h) * N) + i) * DH;
                        S* dst = gx + ((b * N + i) * D) + h * DH;
                        for (std::int64_t c = 0; c < DH; ++c) dst[c] += src[c];
                    }
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// (B*h, n, dh) -> (B, n, dh*h), inverse of split_heads
template <class S>
Tensor<S> merge_heads(const Tensor<S>& x, std::int64_t heads) {
    if (x.rank() != 3) throw ShapeError("merge_heads: need rank 3");
    const std::int64_t BH = x.dim(0), N = x.dim(1), DH = x.dim(2);
    if (heads <= 0 || BH % heads != 0) throw ShapeError("merge_heads: bad batch/head product");
    const std::int64_t H = heads, B = BH / heads, D = DH * H;
    auto n = detail::new_node<S>("merge_heads", {B, N, D}, {x});
    {
        const S* px = x.data();
        S* po = n->value.data();
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t i = 0; i < N; ++i)
                for (std::int64_t h = 0; h < H; ++h)
                    std::memcpy(po + ((b * N + i) * D) + h * DH, px + (((b * H + h) * N) + i) * DH,
                                sizeof(S) * static_cast<std::size_t>(DH));
    }
    if (n->requires_grad) {
        auto xn = x.node();
        n->backward_fn = [xn, B, N, D, H, DH](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S* g = self.grad.data();
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t i = 0; i < N; ++i)
                    for (std::int64_t h = 0; h < H; ++h) {
                        const S* src = g + ((b * N + i) * D) + h * DH;
                        S* dst = gx + (((b * H + h) * N) + i) * DH;
                        for (std::int64_t c = 0; c < DH; ++c) dst[c] += src[c];
                    }
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> concat_rows(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("concat_rows: incompatible " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
    const std::int64_t P = a.dim(0), Q = b.dim(0), D = a.dim(1);
    auto n = detail::new_node<S>("concat_rows", {P + Q, D}, {a, b});
    std::memcpy(n->value.data(), a.data(), sizeof(S) * static_cast<std::size_t>(P * D));
    std::memcpy(n->value.data() + P * D, b.data(), sizeof(S) * static_cast<std::size_t>(Q * D));
    if (n->requires_grad) {
        auto an = a.node();
        auto bn = b.node();
        n->backward_fn = [an, bn, P, Q, D](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (an->requires_grad) {
                S* ga = an->grad_data();
                for (std::int64_t i = 0; i < P * D; ++i) ga[i] += g[i];
                an->mark_grad_live();
            }
            if (bn->requires_grad) {
                S* gb = bn->grad_data();
                for (std::int64_t i = 0; i < Q * D; ++i) gb[i] += g[P * D + i];
                bn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

// (B, n, d) -> (B, d), row `pos` of every batch element
template <class S>
Tensor<S> take_position(const Tensor<S>& x, std::int64_t pos) {
    if (x.rank() != 3) throw ShapeError("take_position: need rank 3");
    const std::int64_t B = x.dim(0), N = x.dim(1), D = x.dim(2);
    if (pos < 0 || pos >= N) throw ShapeError("take_position: position out of range");
    auto n = detail::new_node<S>("take_position", {B, D}, {x});
    const S* px = x.data();
    for (std::int64_t b = 0; b < B; ++b)
        std::memcpy(n->value.data() + b * D, px + (b * N + pos) * D,
                    sizeof(S) * static_cast<std::size_t>(D));
    if (n->requires_grad) {
        auto xn = x.node();
        n->backward_fn = [xn, B, N, D, pos](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S* g = self.grad.data();
            for (std::int64_t b = 0; b < B; ++b) {
                S* dst = gx + (b * N + pos) * D;
                const S* src = g + b * D;
                for (std::int64_t c = 0; c < D; ++c) dst[c] += src[c];
            }
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// ---------------------------------------------------------------------------
// normalization and reductions
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
    if (x.rank() < 1 || x.shape().back() < 1) throw ShapeError("softmax_lastdim: empty last dim");
    const std::int64_t D = x.shape().back();
    const std::int64_t R = x.numel() / D;
    for (S v : x.values())
        if (!std::isfinite(static_cast<double>(v))) throw NumericError("softmax_lastdim: non-finite input");
    auto n = detail::new_node<S>("softmax_lastdim", x.shape(), {x});
    {
        const S* px = x.data();
        S* po = n->value.data();
        for (std::int64_t r = 0; r < R; ++r) {
            const S* row = px + r * D;
            S* orow = po + r * D;
            S m = row[0];
            for (std::int64_t j = 1; j < D; ++j) m = std::max(m, row[j]);
            S sum = S(0);
            for (std::int64_t j = 0; j < D; ++j) {
                orow[j] = std::exp(row[j] - m);
                sum += orow[j];
            }
            const S inv = S(1) / sum;
            for (std::int64_t j = 0; j < D; ++j) orow[j] *= inv;
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        n->backward_fn = [xn, R, D](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S* g = self.grad.data();
            const S* y = self.value.data();
            for (std::int64_t r = 0; r < R; ++r) {
                const S* grow = g + r * D;
                const S* yrow = y + r * D;
                S dot = S(0);
                for (std::int64_t j = 0; j < D; ++j) dot += grow[j] * yrow[j];
                S* gxrow = gx + r * D;
                for (std::int64_t j = 0; j < D; ++j) gxrow[j] += yrow[j] * (grow[j] - dot);
            }
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// (..., D) -> (...), log of summed exponentials with max-subtraction
template <class S>
Tensor<S> logsumexp_lastdim(const Tensor<S>& x) {
    if (x.rank() < 1 || x.shape().back() < 1) throw ShapeError("logsumexp_lastdim: empty last dim");
    const std::int64_t D = x.shape().back();
    const std::int64_t R = x.numel() / D;
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    auto n = detail::new_node<S>("logsumexp_lastdim", std::move(out_shape), {x});
    {
        const S* px = x.data();
        S* po = n->value.data();
        for (std::int64_t r = 0; r < R; ++r) {
            const S* row = px + r * D;
            S m = row[0];
            for (std::int64_t j = 1; j < D; ++j) m = std::max(m, row[j]);
            S sum = S(0);
            for (std::int64_t j = 0; j < D; ++j) sum += std::exp(row[j] - m);
            po[r] = m + std::log(sum);
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        n->backward_fn = [xn, R, D](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S* g = self.grad.data();
            const S* px = xn->value.data();
            const S* out = self.value.data();
            for (std::int64_t r = 0; r < R; ++r) {
                const S* row = px + r * D;
                S* gxrow = gx + r * D;
                for (std::int64_t j = 0; j < D; ++j) gxrow[j] += g[r] * std::exp(row[j] - out[r]);
            }
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, S eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: need rank >= 1");
    const std::int64_t D = x.shape().back();
    if (D == 0) throw ShapeError("layer_norm: zero-length last dimension");
    if (gain.numel() != D || bias.numel() != D)
        throw ShapeError("layer_norm: gain/bias must match last dimension");
    if (!(eps > S(0))) throw InvalidArgument("layer_norm: eps must be positive");
    const std::int64_t R = x.numel() / D;
    auto n = detail::new_node<S>("layer_norm", x.shape(), {x, gain, bias});
    std::vector<S> inv_std(static_cast<std::size_t>(R));
    std::vector<S> xhat(static_cast<std::size_t>(x.numel()));
    {
        const S* px = x.data();
        const S* pg = gain.data();
        const S* pb = bias.data();
        S* po = n->value.data();
        for (std::int64_t r = 0; r < R; ++r) {
            const S* row = px + r * D;
            S mean = S(0);
            for (std::int64_t j = 0; j < D; ++j) mean += row[j];
            mean /= S(D);
            S var = S(0);
            for (std::int64_t j = 0; j < D; ++j) {
                const S c = row[j] - mean;
                var += c * c;
            }
            var /= S(D);
            const S inv = S(1) / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(r)] = inv;
            S* xh = xhat.data() + r * D;
            S* orow = po + r * D;
            for (std::int64_t j = 0; j < D; ++j) {
                xh[j] = (row[j] - mean) * inv;
                orow[j] = pg[j] * xh[j] + pb[j];
            }
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        auto gn = gain.node();
        auto bn = bias.node();
        n->backward_fn = [xn, gn, bn, R, D, inv_std = std::move(inv_std),
                          xhat = std::move(xhat)](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (gn->requires_grad) {
                S* gg = gn->grad_data();
                for (std::int64_t r = 0; r < R; ++r)
                    for (std::int64_t j = 0; j < D; ++j) gg[j] += g[r * D + j] * xhat[r * D + j];
                gn->mark_grad_live();
            }
            if (bn->requires_grad) {
                S* gb = bn->grad_data();
                for (std::int64_t r = 0; r < R; ++r)
                    for (std::int64_t j = 0; j < D; ++j) gb[j] += g[r * D + j];
                bn->mark_grad_live();
            }
            if (xn->requires_grad) {
                S* gx = xn->grad_data();
                const S* pg = gn->value.data();
                for (std::int64_t r = 0; r < R; ++r) {
                    const S* grow = g + r * D;
                    const S* xh = xhat.data() + r * D;
                    S mean_dxhat = S(0), mean_dxhat_xhat = S(0);
                    for (std::int64_t j = 0; j < D; ++j) {
                        const S dxh = grow[j] * pg[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xh[j];
                    }
                    mean_dxhat /= S(D);
                    mean_dxhat_xhat /= S(D);
                    S* gxrow = gx + r * D;
                    const S inv = inv_std[static_cast<std::size_t>(r)];
                    for (std::int64_t j = 0; j < D; ++j) {
                        const S dxh = grow[j] * pg[j];
                        gxrow[j] += inv * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                    }
                }
                xn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

// Rows scaled to unit Euclidean norm; errors on an exactly representable zero row.
template <class S>
Tensor<S> row_normalize(const Tensor<S>& x) {
    if (x.rank() != 2) throw ShapeError("row_normalize: need rank 2");
    const std::int64_t R = x.dim(0), D = x.dim(1);
    auto n = detail::new_node<S>("row_normalize", x.shape(), {x});
    std::vector<S> norms(static_cast<std::size_t>(R));
    {
        const S* px = x.data();
        S* po = n->value.data();
        for (std::int64_t r = 0; r < R; ++r) {
            const S* row = px + r * D;
            S sq = S(0);
            for (std::int64_t j = 0; j < D; ++j) sq += row[j] * row[j];
            const S norm = std::sqrt(sq);
            if (!(norm >= std::numeric_limits<S>::min()))
                throw NumericError("row_normalize: zero-norm row " + std::to_string(r));
            norms[static_cast<std::size_t>(r)] = norm;
            const S inv = S(1) / norm;
            S* orow = po + r * D;
            for (std::int64_t j = 0; j < D; ++j) orow[j] = row[j] * inv;
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        n->backward_fn = [xn, R, D, norms = std::move(norms)](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S* g = self.grad.data();
            const S* y = self.value.data();
            for (std::int64_t r = 0; r < R; ++r) {
                const S* grow = g + r * D;
                const S* yrow = y + r * D;
                S dot = S(0);
                for (std::int64_t j = 0; j < D; ++j) dot += grow[j] * yrow[j];
                const S inv = S(1) / norms[static_cast<std::size_t>(r)];
                S* gxrow = gx + r * D;
                for (std::int64_t j = 0; j < D; ++j) gxrow[j] += (grow[j] - dot * yrow[j]) * inv;
            }
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> cosine_similarity(const Tensor<S>& u, const Tensor<S>& v) {
    if (u.numel() != v.numel() || u.numel() == 0)
        throw ShapeError("cosine_similarity: length mismatch or empty");
    const std::int64_t D = u.numel();
    auto n = detail::new_node<S>("cosine_similarity", Shape{}, {u, v});
    S dot = S(0), su = S(0), sv = S(0);
    {
        const S* pu = u.data();
        const S* pv = v.data();
        for (std::int64_t j = 0; j < D; ++j) {
            dot += pu[j] * pv[j];
            su += pu[j] * pu[j];
            sv += pv[j] * pv[j];
        }
    }
    const S nu = std::sqrt(su), nv = std::sqrt(sv);
    if (!(nu >= std::numeric_limits<S>::min()) || !(nv >= std::numeric_limits<S>::min()))
        throw NumericError("cosine_similarity: zero-norm vector");
    S c = dot / (nu * nv);
    n->value[0] = std::clamp(c, S(-1), S(1));
    if (n->requires_grad) {
        auto un = u.node();
        auto vn = v.node();
        n->backward_fn = [un, vn, D, nu, nv, c](TensorNode<S>& self) {
            const S g = self.grad[0];
            if (un->requires_grad) {
                S* gu = un->grad_data();
                const S* pu = un->value.data();
                const S* pv = vn->value.data();
                for (std::int64_t j = 0; j < D; ++j)
                    gu[j] += g * (pv[j] / (nu * nv) - c * pu[j] / (nu * nu));
                un->mark_grad_live();
            }
            if (vn->requires_grad) {
                S* gv = vn->grad_data();
                const S* pu = un->value.data();
                const S* pv = vn->value.data();
                for (std::int64_t j = 0; j < D; ++j)
                    gv[j] += g * (pu[j] / (nu * nv) - c * pv[j] / (nv * nv));
                vn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> sum_all(const Tensor<S>& x) {
    auto n = detail::new_node<S>("sum_all", Shape{}, {x});
    S acc = S(0);
    for (S v : x.values()) acc += v;
    n->value[0] = acc;
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        n->backward_fn = [xn](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S g = self.grad[0];
            for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g;
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> mean_all(const Tensor<S>& x) {
    if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
    auto n = detail::new_node<S>("mean_all", Shape{}, {x});
    S acc = S(0);
    for (S v : x.values()) acc += v;
    n->value[0] = acc / S(x.numel());
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        const S inv = S(1) / S(x.numel());
        n->backward_fn = [xn, inv](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S g = self.grad[0] * inv;
            for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g;
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// ---------------------------------------------------------------------------
// lookups and broadcasts
// ---------------------------------------------------------------------------

// table (V, d) gathered by flat ids; result shape = lead_shape + {d}
template <class S>
Tensor<S> embedding_lookup(const Tensor<S>& table, const std::vector<std::int32_t>& ids,
                           Shape lead_shape) {
    if (table.rank() != 2) throw ShapeError("embedding_lookup: table must be rank 2");
    const std::int64_t V = table.dim(0), D = table.dim(1);
    if (shape_numel(lead_shape) != static_cast<std::int64_t>(ids.size()))
        throw ShapeError("embedding_lookup: ids/lead shape mismatch");
    for (auto id : ids)
        if (id < 0 || id >= V)
            throw InvalidArgument("embedding_lookup: id " + std::to_string(id) + " out of range [0," +
                                  std::to_string(V) + ")");
    Shape out_shape = lead_shape;
    out_shape.push_back(D);
    auto n = detail::new_node<S>("embedding_lookup", std::move(out_shape), {table});
    {
        const S* pt = table.data();
        S* po = n->value.data();
        for (std::size_t r = 0; r < ids.size(); ++r)
            std::memcpy(po + static_cast<std::int64_t>(r) * D, pt + ids[r] * D,
                        sizeof(S) * static_cast<std::size_t>(D));
    }
    if (n->requires_grad) {
        auto tn = table.node();
        n->backward_fn = [tn, ids, D](TensorNode<S>& self) {
            S* gt = tn->grad_data();
            const S* g = self.grad.data();
            for (std::size_t r = 0; r < ids.size(); ++r) {
                S* dst = gt + ids[r] * D;
                const S* src = g + static_cast<std::int64_t>(r) * D;
                for (std::int64_t c = 0; c < D; ++c) dst[c] += src[c];
            }
            tn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// Group means of table rows: group i covers ids[offsets[i]..offsets[i+1]);
// empty groups produce a zero row. Result is (num_groups, d).
template <class S>
Tensor<S> embedding_bag_mean(const Tensor<S>& table, const std::vector<std::int32_t>& ids,
                             const std::vector<std::int64_t>& offsets) {
    if (table.rank() != 2) throw ShapeError("embedding_bag_mean: table must be rank 2");
    if (offsets.empty() || offsets.front() != 0 ||
        offsets.back() != static_cast<std::int64_t>(ids.size()))
        throw ShapeError("embedding_bag_mean: bad offsets");
    const std::int64_t V = table.dim(0), D = table.dim(1);
    const std::int64_t G = static_cast<std::int64_t>(offsets.size()) - 1;
    for (auto id : ids)
        if (id < 0 || id >= V) throw InvalidArgument("embedding_bag_mean: id out of range");
    auto n = detail::new_node<S>("embedding_bag_mean", {G, D}, {table});
    {
        const S* pt = table.data();
        S* po = n->value.data();
        for (std::int64_t gidx = 0; gidx < G; ++gidx) {
            const std::int64_t lo = offsets[static_cast<std::size_t>(gidx)];
            const std::int64_t hi = offsets[static_cast<std::size_t>(gidx) + 1];
            if (hi <= lo) continue;
            S* orow = po + gidx * D;
            for (std::int64_t r = lo; r < hi; ++r) {
                const S* row = pt + ids[static_cast<std::size_t>(r)] * D;
                for (std::int64_t c = 0; c < D; ++c) orow[c] += row[c];
            }
            const S inv = S(1) / S(hi - lo);
            for (std::int64_t c = 0; c < D; ++c) orow[c] *= inv;
        }
    }
    if (n->requires_grad) {
        auto tn = table.node();
        n->backward_fn = [tn, ids, offsets, D, G](TensorNode<S>& self) {
            S* gt = tn->grad_data();
            const S* g = self.grad.data();
            for (std::int64_t gidx = 0; gidx < G; ++gidx) {
                const std::int64_t lo = offsets[static_cast<std::size_t>(gidx)];
                const std::int64_t hi = offsets[static_cast<std::size_t>(gidx) + 1];
                if (hi <= lo) continue;
                const S inv = S(1) / S(hi - lo);
                const S* grow = g + gidx * D;
                for (std::int64_t r = lo; r < hi; ++r) {
                    S* dst = gt + ids[static_cast<std::size_t>(r)] * D;
                    for (std::int64_t c = 0; c < D; ++c) dst[c] += grow[c] * inv;
                }
            }
            tn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// x (B, n, d) plus pos rows [0..n); pos table is (L, d) with L >= n
template <class S>
Tensor<S> add_positions(const Tensor<S>& x, const Tensor<S>& pos) {
    if (x.rank() != 3 || pos.rank() != 2 || x.dim(2) != pos.dim(1))
        throw ShapeError("add_positions: incompatible shapes");
    const std::int64_t B = x.dim(0), N = x.dim(1), D = x.dim(2), L = pos.dim(0);
    if (N > L) throw ShapeError("add_positions: sequence longer than position table");
    auto n = detail::new_node<S>("add_positions", x.shape(), {x, pos});
    {
        const S* px = x.data();
        const S* pp = pos.data();
        S* po = n->value.data();
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t i = 0; i < N; ++i) {
                const S* xrow = px + (b * N + i) * D;
                const S* prow = pp + i * D;
                S* orow = po + (b * N + i) * D;
                for (std::int64_t c = 0; c < D; ++c) orow[c] = xrow[c] + prow[c];
            }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        auto pn = pos.node();
        n->backward_fn = [xn, pn, B, N, D](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (xn->requires_grad) {
                S* gx = xn->grad_data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += g[i];
                xn->mark_grad_live();
            }
            if (pn->requires_grad) {
                S* gp = pn->grad_data();
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t i = 0; i < N; ++i) {
                        const S* src = g + (b * N + i) * D;
                        S* dst = gp + i * D;
                        for (std::int64_t c = 0; c < D; ++c) dst[c] += src[c];
                    }
                pn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

template <class S>
Tensor<S> add_bias_lastdim(const Tensor<S>& x, const Tensor<S>& bias) {
    const std::int64_t D = x.shape().back();
    if (bias.numel() != D) throw ShapeError("add_bias_lastdim: bias length mismatch");
    const std::int64_t R = x.numel() / D;
    auto n = detail::new_node<S>("add_bias_lastdim", x.shape(), {x, bias});
    {
        const S* px = x.data();
        const S* pb = bias.data();
        S* po = n->value.data();
        for (std::int64_t r = 0; r < R; ++r)
            for (std::int64_t j = 0; j < D; ++j) po[r * D + j] = px[r * D + j] + pb[j];
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        auto bn = bias.node();
        n->backward_fn = [xn, bn, R, D](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (xn->requires_grad) {
                S* gx = xn->grad_data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += g[i];
                xn->mark_grad_live();
            }
            if (bn->requires_grad) {
                S* gb = bn->grad_data();
                for (std::int64_t r = 0; r < R; ++r)
                    for (std::int64_t j = 0; j < D; ++j) gb[j] += g[r * D + j];
                bn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

// x (H, R, C) plus a (R, C) bias shared across dim 0
template <class S>
Tensor<S> add_broadcast0(const Tensor<S>& x, const Tensor<S>& b) {
    if (x.rank() != 3 || b.rank() != 2 || x.dim(1) != b.dim(0) || x.dim(2) != b.dim(1))
        throw ShapeError("add_broadcast0: incompatible shapes");
    const std::int64_t H = x.dim(0), RC = b.numel();
    auto n = detail::new_node<S>("add_broadcast0", x.shape(), {x, b});
    {
        const S* px = x.data();
        const S* pb = b.data();
        S* po = n->value.data();
        for (std::int64_t h = 0; h < H; ++h)
            for (std::int64_t i = 0; i < RC; ++i) po[h * RC + i] = px[h * RC + i] + pb[i];
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto xn = x.node();
        auto bn = b.node();
        n->backward_fn = [xn, bn, H, RC](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (xn->requires_grad) {
                S* gx = xn->grad_data();
                for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += g[i];
                xn->mark_grad_live();
            }
            if (bn->requires_grad) {
                S* gb = bn->grad_data();
                for (std::int64_t h = 0; h < H; ++h)
                    for (std::int64_t i = 0; i < RC; ++i) gb[i] += g[h * RC + i];
                bn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

// Additive key mask for attention scores (B*h, n, n): key positions where
// pad_mask is 0 get a large negative logit. Identity backward.
template <class S>
Tensor<S> add_key_mask(const Tensor<S>& scores, const std::vector<std::uint8_t>& pad_mask,
                       std::int64_t batch, std::int64_t heads) {
    if (scores.rank() != 3 || scores.dim(0) != batch * heads || scores.dim(1) != scores.dim(2))
        throw ShapeError("add_key_mask: bad score shape");
    const std::int64_t N = scores.dim(1);
    if (static_cast<std::int64_t>(pad_mask.size()) != batch * N)
        throw ShapeError("add_key_mask: mask size mismatch");
    auto n = detail::new_node<S>("add_key_mask", scores.shape(), {scores});
    {
        const S* ps = scores.data();
        S* po = n->value.data();
        const S neg = detail::mask_neg<S>();
        for (std::int64_t b = 0; b < batch; ++b)
            for (std::int64_t h = 0; h < heads; ++h) {
                const std::int64_t base = ((b * heads + h) * N) * N;
                for (std::int64_t i = 0; i < N; ++i)
                    for (std::int64_t j = 0; j < N; ++j) {
                        const std::int64_t idx = base + i * N + j;
                        po[idx] = ps[idx] + (pad_mask[static_cast<std::size_t>(b * N + j)] ? S(0) : neg);
                    }
            }
    }
    if (n->requires_grad) {
        auto sn = scores.node();
        n->backward_fn = [sn](TensorNode<S>& self) {
            S* gs = sn->grad_data();
            const S* g = self.grad.data();
            for (std::size_t i = 0; i < self.value.size(); ++i) gs[i] += g[i];
            sn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// out[r] = x[r, idx[r]] for a (R, C) matrix
template <class S>
Tensor<S> gather_pairs(const Tensor<S>& x, const std::vector<std::int64_t>& idx) {
    if (x.rank() != 2) throw ShapeError("gather_pairs: need rank 2");
    const std::int64_t R = x.dim(0), C = x.dim(1);
    if (static_cast<std::int64_t>(idx.size()) != R) throw ShapeError("gather_pairs: index length");
    for (auto j : idx)
        if (j < 0 || j >= C) throw InvalidArgument("gather_pairs: index out of range");
    auto n = detail::new_node<S>("gather_pairs", {R}, {x});
    const S* px = x.data();
    for (std::int64_t r = 0; r < R; ++r) n->value[static_cast<std::size_t>(r)] = px[r * C + idx[static_cast<std::size_t>(r)]];
    if (n->requires_grad) {
        auto xn = x.node();
        n->backward_fn = [xn, idx, C](TensorNode<S>& self) {
            S* gx = xn->grad_data();
            const S* g = self.grad.data();
            for (std::size_t r = 0; r < idx.size(); ++r)
                gx[static_cast<std::int64_t>(r) * C + idx[r]] += g[r];
            xn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// probs (B, n, K) reduced against a per-batch-row byte mask over K -> (B, n)
template <class S>
Tensor<S> masked_sum_lastdim(const Tensor<S>& probs, const std::vector<std::uint8_t>& mask,
                             std::int64_t batch) {
    if (probs.rank() != 3 || probs.dim(0) != batch) throw ShapeError("masked_sum_lastdim: bad shape");
    const std::int64_t N = probs.dim(1), K = probs.dim(2);
    if (static_cast<std::int64_t>(mask.size()) != batch * K)
        throw ShapeError("masked_sum_lastdim: mask size mismatch");
    auto n = detail::new_node<S>("masked_sum_lastdim", {batch, N}, {probs});
    {
        const S* pp = probs.data();
        S* po = n->value.data();
        for (std::int64_t b = 0; b < batch; ++b) {
            const std::uint8_t* m = mask.data() + b * K;
            for (std::int64_t i = 0; i < N; ++i) {
                const S* row = pp + (b * N + i) * K;
                S acc = S(0);
                for (std::int64_t j = 0; j < K; ++j)
                    if (m[j]) acc += row[j];
                po[b * N + i] = acc;
            }
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto pn = probs.node();
        n->backward_fn = [pn, mask, batch, N, K](TensorNode<S>& self) {
            S* gp = pn->grad_data();
            const S* g = self.grad.data();
            for (std::int64_t b = 0; b < batch; ++b) {
                const std::uint8_t* m = mask.data() + b * K;
                for (std::int64_t i = 0; i < N; ++i) {
                    const S gv = g[b * N + i];
                    if (gv == S(0)) continue;
                    S* row = gp + (b * N + i) * K;
                    for (std::int64_t j = 0; j < K; ++j)
                        if (m[j]) row[j] += gv;
                }
            }
            pn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// ---------------------------------------------------------------------------
// losses and sampling primitives
// ---------------------------------------------------------------------------

enum class BceReduction { Sum, MeanBatch };

// Multi-label binary cross-entropy from logits, evaluated in the stable form
// max(z,0) - z*y + log1p(exp(-|z|)).
template <class S>
Tensor<S> bce_with_logits(const Tensor<S>& logits, const std::vector<S>& targets,
                          BceReduction reduction) {
    if (logits.rank() != 2) throw ShapeError("bce_with_logits: logits must be rank 2");
    if (static_cast<std::int64_t>(targets.size()) != logits.numel())
        throw ShapeError("bce_with_logits: target size mismatch");
    const std::int64_t N = logits.dim(0);
    auto n = detail::new_node<S>("bce_with_logits", Shape{}, {logits});
    S total = S(0);
    {
        const S* pz = logits.data();
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const S z = pz[i];
            const S y = targets[i];
            total += std::max(z, S(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
        }
    }
    const S norm = reduction == BceReduction::MeanBatch ? S(1) / S(N) : S(1);
    n->value[0] = total * norm;
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto zn = logits.node();
        n->backward_fn = [zn, targets, norm](TensorNode<S>& self) {
            S* gz = zn->grad_data();
            const S g = self.grad[0] * norm;
            const S* pz = zn->value.data();
            for (std::size_t i = 0; i < targets.size(); ++i) {
                const S z = pz[i];
                const S s = z >= S(0) ? S(1) / (S(1) + std::exp(-z))
                                      : S(std::exp(z) / (S(1) + std::exp(z)));
                gz[i] += g * (s - targets[i]);
            }
            zn->mark_grad_live();
        };
    }
    return Tensor<S>(n);
}

// Gumbel-Softmax with externally supplied noise (deterministic core):
// softmax((logits + noise) / temperature) over the last dimension.
template <class S>
Tensor<S> gumbel_softmax_with_noise(const Tensor<S>& logits, const Tensor<S>& noise, S temperature) {
    if (!(temperature > S(0))) throw InvalidArgument("gumbel_softmax: temperature must be positive");
    detail::require_same_shape(logits, noise, "gumbel_softmax");
    return softmax_lastdim(scale(add(logits, noise), S(1) / temperature));
}

template <class S>
Tensor<S> gumbel_noise_like(const Tensor<S>& logits, RngStream& rng) {
    auto t = Tensor<S>::zeros(logits.shape());
    for (auto& v : t.mutable_values()) v = static_cast<S>(rng.gumbel());
    return t;
}

template <class S>
Tensor<S> gumbel_softmax(const Tensor<S>& logits, S temperature, RngStream& rng) {
    if (!(temperature > S(0))) throw InvalidArgument("gumbel_softmax: temperature must be positive");
    return gumbel_softmax_with_noise(logits, gumbel_noise_like(logits, rng), temperature);
}

// Inverted dropout built from a constant mask; identity when p == 0.
template <class S>
Tensor<S> dropout(const Tensor<S>& x, double p, RngStream& rng) {
    if (p < 0.0 || p >= 1.0) throw InvalidArgument("dropout: p must be in [0,1)");
    if (p == 0.0) return x;
    auto mask = Tensor<S>::zeros(x.shape());
    const S keep = static_cast<S>(1.0 / (1.0 - p));
    for (auto& v : mask.mutable_values()) v = rng.uniform() >= p ? keep : S(0);
    return mul(x, mask);
}

enum class GateMode {
    Hard,  // forward copies kept embeddings exactly; backward uses the defined gradient
    Soft   // forward scales threshold-kept embeddings by P; reference form for FD checks
};

template <class S>
struct GateResult {
    Tensor<S> gated;
    std::vector<std::uint8_t> keep;  // per position, after force rules
};

// Threshold gate over token embeddings. For each position:
//   force_drop        -> 0
//   force_keep        -> e (no gradient to P)
//   P >  gamma        -> e (Hard) or e*P (Soft); dP receives dot(g, e) in both modes
//   otherwise         -> 0
template <class S>
GateResult<S> gate_embeddings(const Tensor<S>& e, const Tensor<S>& P, double gamma,
                              const std::vector<std::uint8_t>& force_keep,
                              const std::vector<std::uint8_t>& force_drop, GateMode mode) {
    if (e.rank() != 3 || P.rank() != 2 || e.dim(0) != P.dim(0) || e.dim(1) != P.dim(1))
        throw ShapeError("gate_embeddings: incompatible shapes");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gate_embeddings: gamma must be in (0,1)");
    const std::int64_t B = e.dim(0), N = e.dim(1), D = e.dim(2);
    const std::size_t NP = static_cast<std::size_t>(B * N);
    if (force_keep.size() != NP || force_drop.size() != NP)
        throw ShapeError("gate_embeddings: mask size mismatch");

    auto n = detail::new_node<S>("gate_embeddings", e.shape(), {e, P});
    std::vector<std::uint8_t> keep(NP, 0);
    // 0 = dropped, 1 = threshold-kept, 2 = force-kept
    std::vector<std::uint8_t> kind(NP, 0);
    {
        const S* pe = e.data();
        const S* pp = P.data();
        S* po = n->value.data();
        for (std::size_t r = 0; r < NP; ++r) {
            if (force_drop[r]) continue;
            if (force_keep[r]) {
                kind[r] = 2;
            } else if (static_cast<double>(pp[r]) > gamma) {
                kind[r] = 1;
            } else {
                continue;
            }
            keep[r] = 1;
            S* orow = po + static_cast<std::int64_t>(r) * D;
            const S* erow = pe + static_cast<std::int64_t>(r) * D;
            if (mode == GateMode::Soft && kind[r] == 1) {
                const S pv = pp[r];
                for (std::int64_t c = 0; c < D; ++c) orow[c] = erow[c] * pv;
            } else {
                std::memcpy(orow, erow, sizeof(S) * static_cast<std::size_t>(D));
            }
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto en = e.node();
        auto pn = P.node();
        n->backward_fn = [en, pn, kind, D, mode, NP](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (en->requires_grad) {
                S* ge = en->grad_data();
                const S* pp = pn->value.data();
                for (std::size_t r = 0; r < NP; ++r) {
                    if (!kind[r]) continue;
                    const S mult = (mode == GateMode::Soft && kind[r] == 1) ? pp[r] : S(1);
                    const S* grow = g + static_cast<std::int64_t>(r) * D;
                    S* erow = ge + static_cast<std::int64_t>(r) * D;
                    for (std::int64_t c = 0; c < D; ++c) erow[c] += grow[c] * mult;
                }
                en->mark_grad_live();
            }
            if (pn->requires_grad) {
                S* gp = pn->grad_data();
                const S* pe = en->value.data();
                for (std::size_t r = 0; r < NP; ++r) {
                    if (kind[r] != 1) continue;  // only threshold-kept positions feed P
                    const S* grow = g + static_cast<std::int64_t>(r) * D;
                    const S* erow = pe + static_cast<std::int64_t>(r) * D;
                    S acc = S(0);
                    for (std::int64_t c = 0; c < D; ++c) acc += grow[c] * erow[c];
                    gp[r] += acc;
                }
                pn->mark_grad_live();
            }
        };
    }
    return GateResult<S>{Tensor<S>(n), std::move(keep)};
}

// Spatial + edge encoding bias matrix (k, k) from learnable tables.
// bias(i,j) = b[bucket(i,j)] + mean of w over the tree path i..j.
struct GraphBiasSpec {
    std::int64_t k = 0;
    std::vector<std::int32_t> bucket;        // k*k bucket indices into b
    std::vector<std::int32_t> path_edges;    // flattened edge ids
    std::vector<std::int64_t> path_offsets;  // k*k+1 offsets into path_edges
    bool include_spatial = true;
    bool include_edge = true;
};

template <class S>
Tensor<S> graph_bias(const Tensor<S>& b_table, const Tensor<S>& w_edge, const GraphBiasSpec& spec) {
    const std::int64_t K = spec.k;
    if (static_cast<std::int64_t>(spec.bucket.size()) != K * K ||
        static_cast<std::int64_t>(spec.path_offsets.size()) != K * K + 1)
        throw ShapeError("graph_bias: bad spec");
    auto n = detail::new_node<S>("graph_bias", {K, K}, {b_table, w_edge});
    {
        const S* pb = b_table.data();
        const S* pw = w_edge.data();
        for (std::int64_t idx = 0; idx < K * K; ++idx) {
            S v = S(0);
            if (spec.include_spatial) v += pb[spec.bucket[static_cast<std::size_t>(idx)]];
            if (spec.include_edge) {
                const std::int64_t lo = spec.path_offsets[static_cast<std::size_t>(idx)];
                const std::int64_t hi = spec.path_offsets[static_cast<std::size_t>(idx) + 1];
                if (hi > lo) {
                    S acc = S(0);
                    for (std::int64_t r = lo; r < hi; ++r)
                        acc += pw[spec.path_edges[static_cast<std::size_t>(r)]];
                    v += acc / S(hi - lo);
                }
            }
            n->value[static_cast<std::size_t>(idx)] = v;
        }
    }
    detail::check_finite(*n);
    if (n->requires_grad) {
        auto bn = b_table.node();
        auto wn = w_edge.node();
        n->backward_fn = [bn, wn, spec, K](TensorNode<S>& self) {
            const S* g = self.grad.data();
            if (spec.include_spatial && bn->requires_grad) {
                S* gb = bn->grad_data();
                for (std::int64_t idx = 0; idx < K * K; ++idx)
                    gb[spec.bucket[static_cast<std::size_t>(idx)]] += g[idx];
                bn->mark_grad_live();
            }
            if (spec.include_edge && wn->requires_grad) {
                S* gw = wn->grad_data();
                for (std::int64_t idx = 0; idx < K * K; ++idx) {
                    const std::int64_t lo = spec.path_offsets[static_cast<std::size_t>(idx)];
                    const std::int64_t hi = spec.path_offsets[static_cast<std::size_t>(idx) + 1];
                    if (hi <= lo) continue;
                    const S share = g[idx] / S(hi - lo);
                    for (std::int64_t r = lo; r < hi; ++r)
                        gw[spec.path_edges[static_cast<std::size_t>(r)]] += share;
                }
                wn->mark_grad_live();
            }
        };
    }
    return Tensor<S>(n);
}

}  // namespace hgclr
