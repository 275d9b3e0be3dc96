#pragma once

#include <cmath>

#include "mqi/tensor.hpp"

// Dense reference kernels. Every kernel fixes its loop (and therefore
// summation) order so repeated runs are bit-identical. Each forward has a
// matching *_backward that accumulates vector-Jacobian products into the
// operand gradients.

namespace mqi {

// ---------------------------------------------------------------------------
// elementwise add / sub / mul with restricted broadcasting
//
// Broadcast rule: rank(b) == rank(a) and for every axis b's extent equals a's
// or is 1. Output takes a's shape. Covers the two documented uses: equal
// shapes and per-channel factors stored as (C,1,1) / (B,C,1,1).
// ---------------------------------------------------------------------------

enum class EwKind { Add, Sub, Mul };

inline bool broadcast_compatible(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (b[i] != a[i] && b[i] != 1) return false;
    return true;
}

namespace detail {

// Walks a's index space in row-major order keeping b's offset in sync,
// with stride 0 on broadcast axes.
template <typename T, typename F>
void ew_broadcast_loop(const Tensor<T>& a, const Tensor<T>& b, F&& body) {
    const int r = a.rank();
    const auto bs = row_major_strides(b.shape());
    std::vector<long long> eff(static_cast<size_t>(r));
    for (int k = 0; k < r; ++k) eff[static_cast<size_t>(k)] = (b.extent(k) == 1) ? 0 : bs[static_cast<size_t>(k)];
    std::vector<int> idx(static_cast<size_t>(r), 0);
    long long boff = 0;
    const long long n = a.numel();
    for (long long i = 0; i < n; ++i) {
        body(i, boff);
        for (int k = r - 1; k >= 0; --k) {
            ++idx[static_cast<size_t>(k)];
            boff += eff[static_cast<size_t>(k)];
            if (idx[static_cast<size_t>(k)] < a.extent(k)) break;
            idx[static_cast<size_t>(k)] = 0;
            boff -= eff[static_cast<size_t>(k)] * a.extent(k);
        }
    }
}

}  // namespace detail

template <typename T>
Tensor<T> elementwise(EwKind kind, const Tensor<T>& a, const Tensor<T>& b) {
    check(broadcast_compatible(a.shape(), b.shape()),
          "elementwise: shape " + shape_str(b.shape()) + " not broadcastable to " + shape_str(a.shape()));
    Tensor<T> out(a.shape());
    if (a.same_shape(b)) {
        const long long n = a.numel();
        switch (kind) {
            case EwKind::Add: for (long long i = 0; i < n; ++i) out[i] = a[i] + b[i]; break;
            case EwKind::Sub: for (long long i = 0; i < n; ++i) out[i] = a[i] - b[i]; break;
            case EwKind::Mul: for (long long i = 0; i < n; ++i) out[i] = a[i] * b[i]; break;
        }
        return out;
    }
    switch (kind) {
        case EwKind::Add:
            detail::ew_broadcast_loop(a, b, [&](long long i, long long j) { out[i] = a[i] + b[j]; });
            break;
        case EwKind::Sub:
            detail::ew_broadcast_loop(a, b, [&](long long i, long long j) { out[i] = a[i] - b[j]; });
            break;
        case EwKind::Mul:
            detail::ew_broadcast_loop(a, b, [&](long long i, long long j) { out[i] = a[i] * b[j]; });
            break;
    }
    return out;
}

template <typename T>
void elementwise_backward(EwKind kind, const Tensor<T>& gout, const Tensor<T>& a, const Tensor<T>& b,
                          Tensor<T>& ga, Tensor<T>& gb) {
    const T sign = (kind == EwKind::Sub) ? T(-1) : T(1);
    if (kind == EwKind::Mul) {
        detail::ew_broadcast_loop(a, b, [&](long long i, long long j) {
            ga[i] += gout[i] * b[j];
            gb[j] += gout[i] * a[i];
        });
    } else {
        detail::ew_broadcast_loop(a, b, [&](long long i, long long j) {
            ga[i] += gout[i];
            gb[j] += sign * gout[i];
        });
    }
}

// ---------------------------------------------------------------------------
// batched matrix product (B,M,K) x (B,K,N) -> (B,M,N), fixed k-loop order
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.rank() == 3 && b.rank() == 3, "matmul: operands must be rank 3");
    check(a.extent(0) == b.extent(0), "matmul: batch mismatch");
    check(a.extent(2) == b.extent(1),
          "matmul: inner extents " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int B = a.extent(0), M = a.extent(1), K = a.extent(2), N = b.extent(2);
    Tensor<T> out({B, M, N});
    for (int bi = 0; bi < B; ++bi) {
        const T* pa = a.data() + static_cast<long long>(bi) * M * K;
        const T* pb = b.data() + static_cast<long long>(bi) * K * N;
        T* po = out.data() + static_cast<long long>(bi) * M * N;
        for (int i = 0; i < M; ++i) {
            for (int k = 0; k < K; ++k) {
                const T aik = pa[i * K + k];
                const T* pbk = pb + k * N;
                T* poi = po + i * N;
                for (int j = 0; j < N; ++j) poi[j] += aik * pbk[j];
            }
        }
    }
    return out;
}

template <typename T>
void matmul_backward(const Tensor<T>& gout, const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& ga, Tensor<T>& gb) {
    const int B = a.extent(0), M = a.extent(1), K = a.extent(2), N = b.extent(2);
    for (int bi = 0; bi < B; ++bi) {
        const T* pg = gout.data() + static_cast<long long>(bi) * M * N;
        const T* pa = a.data() + static_cast<long long>(bi) * M * K;
        const T* pb = b.data() + static_cast<long long>(bi) * K * N;
        T* pga = ga.data() + static_cast<long long>(bi) * M * K;
        T* pgb = gb.data() + static_cast<long long>(bi) * K * N;
        // ga[i,k] += sum_j gout[i,j] * b[k,j]
        for (int i = 0; i < M; ++i)
            for (int k = 0; k < K; ++k) {
                T acc = 0;
                const T* pgi = pg + i * N;
                const T* pbk = pb + k * N;
                for (int j = 0; j < N; ++j) acc += pgi[j] * pbk[j];
                pga[i * K + k] += acc;
            }
        // gb[k,j] += sum_i a[i,k] * gout[i,j]
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < M; ++i) {
                const T aik = pa[i * K + k];
                const T* pgi = pg + i * N;
                T* pgbk = pgb + k * N;
                for (int j = 0; j < N; ++j) pgbk[j] += aik * pgi[j];
            }
    }
}

// ---------------------------------------------------------------------------
// permute
// ---------------------------------------------------------------------------

inline void check_permutation(const std::vector<int>& axes, int rank) {
    check(static_cast<int>(axes.size()) == rank, "permute: axes length != rank");
    std::vector<bool> seen(static_cast<size_t>(rank), false);
    for (int ax : axes) {
        check(ax >= 0 && ax < rank && !seen[static_cast<size_t>(ax)], "permute: invalid permutation");
        seen[static_cast<size_t>(ax)] = true;
    }
}

// out[i0,...,ir-1] = x[idx with out-axis k reading x-axis axes[k]]
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes) {
    const int r = x.rank();
    check_permutation(axes, r);
    std::vector<int> oshape(static_cast<size_t>(r));
    for (int k = 0; k < r; ++k) oshape[static_cast<size_t>(k)] = x.extent(axes[static_cast<size_t>(k)]);
    Tensor<T> out(oshape);
    const auto xs = row_major_strides(x.shape());
    std::vector<long long> step(static_cast<size_t>(r));
    for (int k = 0; k < r; ++k) step[static_cast<size_t>(k)] = xs[static_cast<size_t>(axes[static_cast<size_t>(k)])];
    std::vector<int> idx(static_cast<size_t>(r), 0);
    long long xoff = 0;
    const long long n = out.numel();
    for (long long i = 0; i < n; ++i) {
        out[i] = x[xoff];
        for (int k = r - 1; k >= 0; --k) {
            ++idx[static_cast<size_t>(k)];
            xoff += step[static_cast<size_t>(k)];
            if (idx[static_cast<size_t>(k)] < oshape[static_cast<size_t>(k)]) break;
            idx[static_cast<size_t>(k)] = 0;
            xoff -= step[static_cast<size_t>(k)] * oshape[static_cast<size_t>(k)];
        }
    }
    return out;
}

inline std::vector<int> inverse_permutation(const std::vector<int>& axes) {
    std::vector<int> inv(axes.size());
    for (size_t k = 0; k < axes.size(); ++k) inv[static_cast<size_t>(axes[k])] = static_cast<int>(k);
    return inv;
}

// ---------------------------------------------------------------------------
// slice / concat along one axis (contiguous blocks)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> slice_axis(const Tensor<T>& x, int axis, int start, int len) {
    check(axis >= 0 && axis < x.rank(), "slice: bad axis");
    check(start >= 0 && len >= 1 && start + len <= x.extent(axis), "slice: bad range");
    std::vector<int> oshape = x.shape();
    oshape[static_cast<size_t>(axis)] = len;
    Tensor<T> out(oshape);
    long long outer = 1, inner = 1;
    for (int k = 0; k < axis; ++k) outer *= x.extent(k);
    for (int k = axis + 1; k < x.rank(); ++k) inner *= x.extent(k);
    const long long xrow = static_cast<long long>(x.extent(axis)) * inner;
    const long long orow = static_cast<long long>(len) * inner;
    for (long long o = 0; o < outer; ++o) {
        const T* px = x.data() + o * xrow + start * inner;
        T* po = out.data() + o * orow;
        std::copy(px, px + orow, po);
    }
    return out;
}

template <typename T>
void slice_axis_backward(const Tensor<T>& gout, const Tensor<T>& x, int axis, int start, Tensor<T>& gx) {
    const int len = gout.extent(axis);
    long long outer = 1, inner = 1;
    for (int k = 0; k < axis; ++k) outer *= x.extent(k);
    for (int k = axis + 1; k < x.rank(); ++k) inner *= x.extent(k);
    const long long xrow = static_cast<long long>(x.extent(axis)) * inner;
    const long long orow = static_cast<long long>(len) * inner;
    for (long long o = 0; o < outer; ++o) {
        const T* pg = gout.data() + o * orow;
        T* pgx = gx.data() + o * xrow + start * inner;
        for (long long i = 0; i < orow; ++i) pgx[i] += pg[i];
    }
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    check(!parts.empty(), "concat: no parts");
    const int r = parts[0].rank();
    check(axis >= 0 && axis < r, "concat: bad axis");
    int total = 0;
    for (const auto& p : parts) {
        check(p.rank() == r, "concat: rank mismatch");
        for (int k = 0; k < r; ++k)
            if (k != axis)
                check(p.extent(k) == parts[0].extent(k), "concat: extent mismatch off the concat axis");
        total += p.extent(axis);
    }
    std::vector<int> oshape = parts[0].shape();
    oshape[static_cast<size_t>(axis)] = total;
    Tensor<T> out(oshape);
    long long outer = 1, inner = 1;
    for (int k = 0; k < axis; ++k) outer *= oshape[static_cast<size_t>(k)];
    for (int k = axis + 1; k < r; ++k) inner *= oshape[static_cast<size_t>(k)];
    const long long orow = static_cast<long long>(total) * inner;
    long long base = 0;
    for (const auto& p : parts) {
        const long long prow = static_cast<long long>(p.extent(axis)) * inner;
        for (long long o = 0; o < outer; ++o)
            std::copy(p.data() + o * prow, p.data() + (o + 1) * prow, out.data() + o * orow + base);
        base += prow;
    }
    return out;
}

// ---------------------------------------------------------------------------
// convolutions, all 3x3 / zero padding 1 / stride 1
// ---------------------------------------------------------------------------

// x (B,Cin,H,W), w (Cout,Cin,3,3), bias (Cout) -> (B,Cout,H,W)
template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    check(x.rank() == 4, "conv2d: input must be (B,Cin,H,W)");
    check(w.rank() == 4 && w.extent(2) == 3 && w.extent(3) == 3, "conv2d: weight must be (Cout,Cin,3,3)");
    check(w.extent(1) == x.extent(1), "conv2d: Cin mismatch");
    check(bias.rank() == 1 && bias.extent(0) == w.extent(0), "conv2d: bias must be (Cout)");
    const int B = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3), Cout = w.extent(0);
    Tensor<T> out({B, Cout, H, W});
    const long long hw = static_cast<long long>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < Cout; ++co) {
            T* po = out.data() + (static_cast<long long>(b) * Cout + co) * hw;
            const T bv = bias[co];
            for (long long i = 0; i < hw; ++i) po[i] = bv;
            for (int ci = 0; ci < Cin; ++ci) {
                const T* px = x.data() + (static_cast<long long>(b) * Cin + ci) * hw;
                const T* pw = w.data() + (static_cast<long long>(co) * Cin + ci) * 9;
                for (int u = 0; u < 3; ++u)
                    for (int v = 0; v < 3; ++v) {
                        const T wv = pw[u * 3 + v];
                        if (wv == T(0)) continue;
                        const int y0 = std::max(0, 1 - u), y1 = std::min(H, H + 1 - u);
                        const int x0 = std::max(0, 1 - v), x1 = std::min(W, W + 1 - v);
                        for (int y = y0; y < y1; ++y) {
                            T* prow = po + static_cast<long long>(y) * W;
                            const T* xrow = px + static_cast<long long>(y + u - 1) * W + (v - 1);
                            for (int xq = x0; xq < x1; ++xq) prow[xq] += wv * xrow[xq];
                        }
                    }
            }
        }
    return out;
}

template <typename T>
void conv2d_3x3_backward(const Tensor<T>& gout, const Tensor<T>& x, const Tensor<T>& w,
                         Tensor<T>& gx, Tensor<T>& gw, Tensor<T>& gbias) {
    const int B = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3), Cout = w.extent(0);
    const long long hw = static_cast<long long>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < Cout; ++co) {
            const T* pg = gout.data() + (static_cast<long long>(b) * Cout + co) * hw;
            T gb = 0;
            for (long long i = 0; i < hw; ++i) gb += pg[i];
            gbias[co] += gb;
            for (int ci = 0; ci < Cin; ++ci) {
                const T* px = x.data() + (static_cast<long long>(b) * Cin + ci) * hw;
                T* pgx = gx.data() + (static_cast<long long>(b) * Cin + ci) * hw;
                const T* pw = w.data() + (static_cast<long long>(co) * Cin + ci) * 9;
                T* pgw = gw.data() + (static_cast<long long>(co) * Cin + ci) * 9;
                for (int u = 0; u < 3; ++u)
                    for (int v = 0; v < 3; ++v) {
                        const T wv = pw[u * 3 + v];
                        T acc = 0;
                        const int y0 = std::max(0, 1 - u), y1 = std::min(H, H + 1 - u);
                        const int x0 = std::max(0, 1 - v), x1 = std::min(W, W + 1 - v);
                        for (int y = y0; y < y1; ++y) {
                            const T* grow = pg + static_cast<long long>(y) * W;
                            const T* xrow = px + static_cast<long long>(y + u - 1) * W + (v - 1);
                            T* gxrow = pgx + static_cast<long long>(y + u - 1) * W + (v - 1);
                            for (int xq = x0; xq < x1; ++xq) {
                                acc += grow[xq] * xrow[xq];
                                gxrow[xq] += wv * grow[xq];
                            }
                        }
                        pgw[u * 3 + v] += acc;
                    }
            }
        }
}

// x (B,C,H,W), k (C,3,3), bias (C) -> per-channel 3x3 correlation
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias) {
    check(x.rank() == 4, "dwc: input must be (B,C,H,W)");
    check(k.rank() == 3 && k.extent(1) == 3 && k.extent(2) == 3, "dwc: kernel must be (C,3,3)");
    check(k.extent(0) == x.extent(1), "dwc: channel mismatch");
    check(bias.rank() == 1 && bias.extent(0) == x.extent(1), "dwc: bias must be (C)");
    const int B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    Tensor<T> out({B, C, H, W});
    const long long hw = static_cast<long long>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* px = x.data() + (static_cast<long long>(b) * C + c) * hw;
            T* po = out.data() + (static_cast<long long>(b) * C + c) * hw;
            const T* pk = k.data() + static_cast<long long>(c) * 9;
            const T bv = bias[c];
            for (int y = 0; y < H; ++y)
                for (int xq = 0; xq < W; ++xq) {
                    T acc = bv;
                    for (int u = 0; u < 3; ++u) {
                        const int yy = y + u - 1;
                        if (yy < 0 || yy >= H) continue;
                        for (int v = 0; v < 3; ++v) {
                            const int xx = xq + v - 1;
                            if (xx < 0 || xx >= W) continue;
                            acc += pk[u * 3 + v] * px[static_cast<long long>(yy) * W + xx];
                        }
                    }
                    po[static_cast<long long>(y) * W + xq] = acc;
                }
        }
    return out;
}

template <typename T>
void depthwise_conv2d_backward(const Tensor<T>& gout, const Tensor<T>& x, const Tensor<T>& k,
                               Tensor<T>& gx, Tensor<T>& gk, Tensor<T>& gbias) {
    const int B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    const long long hw = static_cast<long long>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* px = x.data() + (static_cast<long long>(b) * C + c) * hw;
            T* pgx = gx.data() + (static_cast<long long>(b) * C + c) * hw;
            const T* pg = gout.data() + (static_cast<long long>(b) * C + c) * hw;
            const T* pk = k.data() + static_cast<long long>(c) * 9;
            T* pgk = gk.data() + static_cast<long long>(c) * 9;
            T gb = 0;
            for (long long i = 0; i < hw; ++i) gb += pg[i];
            gbias[c] += gb;
            for (int y = 0; y < H; ++y)
                for (int xq = 0; xq < W; ++xq) {
                    const T g = pg[static_cast<long long>(y) * W + xq];
                    for (int u = 0; u < 3; ++u) {
                        const int yy = y + u - 1;
                        if (yy < 0 || yy >= H) continue;
                        for (int v = 0; v < 3; ++v) {
                            const int xx = xq + v - 1;
                            if (xx < 0 || xx >= W) continue;
                            pgk[u * 3 + v] += g * px[static_cast<long long>(yy) * W + xx];
                            pgx[static_cast<long long>(yy) * W + xx] += g * pk[u * 3 + v];
                        }
                    }
                }
        }
}

// x (B,Cin,H,W), w (Cout,Cin), bias (Cout): per-pixel linear map
template <typename T>
Tensor<T> pointwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    check(x.rank() == 4, "pwc: input must be (B,Cin,H,W)");
    check(w.rank() == 2 && w.extent(1) == x.extent(1), "pwc: weight must be (Cout,Cin) with matching Cin");
    check(bias.rank() == 1 && bias.extent(0) == w.extent(0), "pwc: bias must be (Cout)");
    const int B = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3), Cout = w.extent(0);
    const long long hw = static_cast<long long>(H) * W;
    Tensor<T> out({B, Cout, H, W});
    for (int b = 0; b < B; ++b) {
        const T* px = x.data() + static_cast<long long>(b) * Cin * hw;
        T* po = out.data() + static_cast<long long>(b) * Cout * hw;
        for (int co = 0; co < Cout; ++co) {
            T* prow = po + static_cast<long long>(co) * hw;
            const T bv = bias[co];
            for (long long i = 0; i < hw; ++i) prow[i] = bv;
            for (int ci = 0; ci < Cin; ++ci) {
                const T wv = w[static_cast<long long>(co) * Cin + ci];
                if (wv == T(0)) continue;
                const T* xrow = px + static_cast<long long>(ci) * hw;
                for (long long i = 0; i < hw; ++i) prow[i] += wv * xrow[i];
            }
        }
    }
    return out;
}

template <typename T>
void pointwise_conv2d_backward(const Tensor<T>& gout, const Tensor<T>& x, const Tensor<T>& w,
                               Tensor<T>& gx, Tensor<T>& gw, Tensor<T>& gbias) {
    const int B = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3), Cout = w.extent(0);
    const long long hw = static_cast<long long>(H) * W;
    for (int b = 0; b < B; ++b) {
        const T* px = x.data() + static_cast<long long>(b) * Cin * hw;
        T* pgx = gx.data() + static_cast<long long>(b) * Cin * hw;
        const T* pg = gout.data() + static_cast<long long>(b) * Cout * hw;
        for (int co = 0; co < Cout; ++co) {
            const T* grow = pg + static_cast<long long>(co) * hw;
            T gb = 0;
            for (long long i = 0; i < hw; ++i) gb += grow[i];
            gbias[co] += gb;
            for (int ci = 0; ci < Cin; ++ci) {
                const T wv = w[static_cast<long long>(co) * Cin + ci];
                const T* xrow = px + static_cast<long long>(ci) * hw;
                T* gxrow = pgx + static_cast<long long>(ci) * hw;
                T acc = 0;
                for (long long i = 0; i < hw; ++i) {
                    acc += grow[i] * xrow[i];
                    gxrow[i] += wv * grow[i];
                }
                gw[static_cast<long long>(co) * Cin + ci] += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T(0)) {
        const T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (long long i = 0; i < x.numel(); ++i) out[i] = sigmoid_scalar(x[i]);
    return out;
}

template <typename T>
void sigmoid_backward(const Tensor<T>& gout, const Tensor<T>& y, Tensor<T>& gx) {
    for (long long i = 0; i < y.numel(); ++i) gx[i] += gout[i] * y[i] * (T(1) - y[i]);
}

// exact erf formulation: 0.5 x (1 + erf(x / sqrt(2)))
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const double inv_sqrt2 = 0.7071067811865475244;
    for (long long i = 0; i < x.numel(); ++i) {
        const double v = static_cast<double>(x[i]);
        out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
    }
    return out;
}

template <typename T>
void gelu_backward(const Tensor<T>& gout, const Tensor<T>& x, Tensor<T>& gx) {
    const double inv_sqrt2 = 0.7071067811865475244;
    const double inv_sqrt2pi = 0.3989422804014326779;
    for (long long i = 0; i < x.numel(); ++i) {
        const double v = static_cast<double>(x[i]);
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += gout[i] * static_cast<T>(cdf + v * pdf);
    }
}

// ---------------------------------------------------------------------------
// softmax over the last axis, max-subtracted
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    check(x.rank() >= 1, "softmax: rank must be >= 1");
    const int N = x.extent(x.rank() - 1);
    const long long rows = x.numel() / N;
    Tensor<T> out(x.shape());
    for (long long r = 0; r < rows; ++r) {
        const T* px = x.data() + r * N;
        T* po = out.data() + r * N;
        T m = px[0];
        for (int j = 1; j < N; ++j) m = std::max(m, px[j]);
        T sum = 0;
        for (int j = 0; j < N; ++j) {
            po[j] = std::exp(px[j] - m);
            sum += po[j];
        }
        const T inv = T(1) / sum;
        for (int j = 0; j < N; ++j) po[j] *= inv;
    }
    return out;
}

template <typename T>
void softmax_lastdim_backward(const Tensor<T>& gout, const Tensor<T>& y, Tensor<T>& gx) {
    const int N = y.extent(y.rank() - 1);
    const long long rows = y.numel() / N;
    for (long long r = 0; r < rows; ++r) {
        const T* pg = gout.data() + r * N;
        const T* py = y.data() + r * N;
        T* pgx = gx.data() + r * N;
        T dot = 0;
        for (int j = 0; j < N; ++j) dot += pg[j] * py[j];
        for (int j = 0; j < N; ++j) pgx[j] += py[j] * (pg[j] - dot);
    }
}

// ---------------------------------------------------------------------------
// global average pool (B,C,H,W) -> (B,C)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    check(x.rank() == 4, "gap: input must be (B,C,H,W)");
    const int B = x.extent(0), C = x.extent(1);
    const long long hw = static_cast<long long>(x.extent(2)) * x.extent(3);
    Tensor<T> out({B, C});
    const T inv = T(1) / static_cast<T>(hw);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* px = x.data() + (static_cast<long long>(b) * C + c) * hw;
            T acc = 0;
            for (long long i = 0; i < hw; ++i) acc += px[i];
            out[static_cast<long long>(b) * C + c] = acc * inv;
        }
    return out;
}

template <typename T>
void global_avg_pool_backward(const Tensor<T>& gout, const Tensor<T>& x, Tensor<T>& gx) {
    const int B = x.extent(0), C = x.extent(1);
    const long long hw = static_cast<long long>(x.extent(2)) * x.extent(3);
    const T inv = T(1) / static_cast<T>(hw);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T g = gout[static_cast<long long>(b) * C + c] * inv;
            T* pgx = gx.data() + (static_cast<long long>(b) * C + c) * hw;
            for (long long i = 0; i < hw; ++i) pgx[i] += g;
        }
}

// ---------------------------------------------------------------------------
// bilinear resize, align-corners = true (endpoints map to endpoints)
// ---------------------------------------------------------------------------

struct BilinearTap {
    int lo;
    int hi;
    double frac;  // weight of hi
};

inline std::vector<BilinearTap> bilinear_taps(int src, int dst) {
    std::vector<BilinearTap> taps(static_cast<size_t>(dst));
    const double scale = (dst == 1) ? 0.0 : static_cast<double>(src - 1) / (dst - 1);
    for (int i = 0; i < dst; ++i) {
        const double p = i * scale;
        int lo = static_cast<int>(std::floor(p));
        if (lo > src - 2) lo = std::max(0, src - 2);
        const double frac = (src == 1) ? 0.0 : p - lo;
        taps[static_cast<size_t>(i)] = {lo, std::min(lo + 1, src - 1), frac};
    }
    return taps;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int h1, int w1) {
    check(x.rank() == 4, "bilinear_resize: input must be (B,C,h,w)");
    check(h1 >= 1 && w1 >= 1, "bilinear_resize: target extents must be positive");
    const int B = x.extent(0), C = x.extent(1), h0 = x.extent(2), w0 = x.extent(3);
    if (h1 == h0 && w1 == w0) return x;  // bit-exact identity
    Tensor<T> out({B, C, h1, w1});
    const auto ty = bilinear_taps(h0, h1);
    const auto tx = bilinear_taps(w0, w1);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* px = x.data() + (static_cast<long long>(b) * C + c) * h0 * w0;
            T* po = out.data() + (static_cast<long long>(b) * C + c) * h1 * w1;
            for (int i = 0; i < h1; ++i) {
                const auto& a = ty[static_cast<size_t>(i)];
                for (int j = 0; j < w1; ++j) {
                    const auto& bt = tx[static_cast<size_t>(j)];
                    const double v00 = px[static_cast<long long>(a.lo) * w0 + bt.lo];
                    const double v01 = px[static_cast<long long>(a.lo) * w0 + bt.hi];
                    const double v10 = px[static_cast<long long>(a.hi) * w0 + bt.lo];
                    const double v11 = px[static_cast<long long>(a.hi) * w0 + bt.hi];
                    const double top = v00 + (v01 - v00) * bt.frac;
                    const double bot = v10 + (v11 - v10) * bt.frac;
                    po[static_cast<long long>(i) * w1 + j] = static_cast<T>(top + (bot - top) * a.frac);
                }
            }
        }
    return out;
}

template <typename T>
void bilinear_resize_backward(const Tensor<T>& gout, const Tensor<T>& x, Tensor<T>& gx) {
    const int B = x.extent(0), C = x.extent(1), h0 = x.extent(2), w0 = x.extent(3);
    const int h1 = gout.extent(2), w1 = gout.extent(3);
    if (h1 == h0 && w1 == w0) {
        for (long long i = 0; i < x.numel(); ++i) gx[i] += gout[i];
        return;
    }
    const auto ty = bilinear_taps(h0, h1);
    const auto tx = bilinear_taps(w0, w1);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            T* pgx = gx.data() + (static_cast<long long>(b) * C + c) * h0 * w0;
            const T* pg = gout.data() + (static_cast<long long>(b) * C + c) * h1 * w1;
            for (int i = 0; i < h1; ++i) {
                const auto& a = ty[static_cast<size_t>(i)];
                for (int j = 0; j < w1; ++j) {
                    const auto& bt = tx[static_cast<size_t>(j)];
                    const double g = pg[static_cast<long long>(i) * w1 + j];
                    pgx[static_cast<long long>(a.lo) * w0 + bt.lo] += static_cast<T>(g * (1 - a.frac) * (1 - bt.frac));
                    pgx[static_cast<long long>(a.lo) * w0 + bt.hi] += static_cast<T>(g * (1 - a.frac) * bt.frac);
                    pgx[static_cast<long long>(a.hi) * w0 + bt.lo] += static_cast<T>(g * a.frac * (1 - bt.frac));
                    pgx[static_cast<long long>(a.hi) * w0 + bt.hi] += static_cast<T>(g * a.frac * bt.frac);
                }
            }
        }
}

// ---------------------------------------------------------------------------
// scalar-factor scale, abs, full reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    Tensor<T> out(x.shape());
    for (long long i = 0; i < x.numel(); ++i) out[i] = c * x[i];
    return out;
}

template <typename T>
Tensor<T> abs_ew(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (long long i = 0; i < x.numel(); ++i) out[i] = std::abs(x[i]);
    return out;
}

template <typename T>
void abs_ew_backward(const Tensor<T>& gout, const Tensor<T>& x, Tensor<T>& gx) {
    for (long long i = 0; i < x.numel(); ++i) {
        if (x[i] > T(0)) gx[i] += gout[i];
        else if (x[i] < T(0)) gx[i] -= gout[i];
    }
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T acc = 0;
    for (long long i = 0; i < x.numel(); ++i) acc += x[i];
    return Tensor<T>::scalar(acc);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    T acc = 0;
    for (long long i = 0; i < x.numel(); ++i) acc += x[i];
    return Tensor<T>::scalar(acc / static_cast<T>(x.numel()));
}

}  // namespace mqi
