#pragma once

#include <cmath>
#include <vector>

#include "mqi/tensor.hpp"

// Straight-loop reference implementations used as test oracles. These are
// written with explicit index arithmetic and never call the library kernels,
// so they stay independent of the code paths they check.

namespace oracle {

using mqi::Tensor;

template <typename T>
inline T& at4(Tensor<T>& t, int b, int c, int y, int x) {
    const int C = t.extent(1), H = t.extent(2), W = t.extent(3);
    return t[((static_cast<long long>(b) * C + c) * H + y) * W + x];
}

template <typename T>
inline const T& at4(const Tensor<T>& t, int b, int c, int y, int x) {
    const int C = t.extent(1), H = t.extent(2), W = t.extent(3);
    return t[((static_cast<long long>(b) * C + c) * H + y) * W + x];
}

template <typename T>
inline const T& at3(const Tensor<T>& t, int a, int b, int c) {
    const int B = t.extent(1), C = t.extent(2);
    return t[(static_cast<long long>(a) * B + b) * C + c];
}

template <typename T>
inline T& at3(Tensor<T>& t, int a, int b, int c) {
    const int B = t.extent(1), C = t.extent(2);
    return t[(static_cast<long long>(a) * B + b) * C + c];
}

// channel-broadcast multiply: x (C,H,W) * g (C)
template <typename T>
Tensor<T> mul_channel_broadcast(const Tensor<T>& x, const std::vector<T>& g) {
    const int C = x.extent(0), H = x.extent(1), W = x.extent(2);
    Tensor<T> out(x.shape());
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int xq = 0; xq < W; ++xq)
                out[(static_cast<long long>(c) * H + y) * W + xq] =
                    x[(static_cast<long long>(c) * H + y) * W + xq] * g[static_cast<size_t>(c)];
    return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const int B = a.extent(0), M = a.extent(1), K = a.extent(2), N = b.extent(2);
    Tensor<T> out({B, M, N});
    for (int bb = 0; bb < B; ++bb)
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < N; ++j) {
                T acc = 0;
                for (int k = 0; k < K; ++k)
                    acc += a[(static_cast<long long>(bb) * M + i) * K + k] *
                           b[(static_cast<long long>(bb) * K + k) * N + j];
                out[(static_cast<long long>(bb) * M + i) * N + j] = acc;
            }
    return out;
}

// (c,h,w) -> (w,c,h)
template <typename T>
Tensor<T> permute_chw_to_wch(const Tensor<T>& x) {
    const int C = x.extent(0), H = x.extent(1), W = x.extent(2);
    Tensor<T> out({W, C, H});
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
                out[(static_cast<long long>(w) * C + c) * H + h] = x[(static_cast<long long>(c) * H + h) * W + w];
    return out;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias) {
    const int B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    Tensor<T> out(x.shape());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int xq = 0; xq < W; ++xq) {
                    T acc = bias[c];
                    for (int u = -1; u <= 1; ++u)
                        for (int v = -1; v <= 1; ++v) {
                            const int yy = y + u, xx = xq + v;
                            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                            acc += k[(static_cast<long long>(c) * 3 + (u + 1)) * 3 + (v + 1)] * at4(x, b, c, yy, xx);
                        }
                    at4(out, b, c, y, xq) = acc;
                }
    return out;
}

template <typename T>
Tensor<T> pointwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    const int B = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3);
    const int Cout = w.extent(0);
    Tensor<T> out({B, Cout, H, W});
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < Cout; ++co)
            for (int y = 0; y < H; ++y)
                for (int xq = 0; xq < W; ++xq) {
                    T acc = bias[co];
                    for (int ci = 0; ci < Cin; ++ci)
                        acc += w[static_cast<long long>(co) * Cin + ci] * at4(x, b, ci, y, xq);
                    at4(out, b, co, y, xq) = acc;
                }
    return out;
}

template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    const int B = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3);
    const int Cout = w.extent(0);
    Tensor<T> out({B, Cout, H, W});
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < Cout; ++co)
            for (int y = 0; y < H; ++y)
                for (int xq = 0; xq < W; ++xq) {
                    T acc = bias[co];
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int u = -1; u <= 1; ++u)
                            for (int v = -1; v <= 1; ++v) {
                                const int yy = y + u, xx = xq + v;
                                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                                acc += w[((static_cast<long long>(co) * Cin + ci) * 3 + (u + 1)) * 3 + (v + 1)] *
                                       at4(x, b, ci, yy, xx);
                            }
                    at4(out, b, co, y, xq) = acc;
                }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const int B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    Tensor<T> out({B, C});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double acc = 0;
            for (int y = 0; y < H; ++y)
                for (int xq = 0; xq < W; ++xq) acc += static_cast<double>(at4(x, b, c, y, xq));
            out[static_cast<long long>(b) * C + c] = static_cast<T>(acc / (static_cast<double>(H) * W));
        }
    return out;
}

// direct exp-normalize in double
template <typename T>
std::vector<double> softmax_row(const std::vector<T>& row) {
    double sum = 0;
    std::vector<double> out(row.size());
    for (size_t i = 0; i < row.size(); ++i) {
        out[i] = std::exp(static_cast<double>(row[i]));
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline long double gelu_erf_ref(long double x) {
    return 0.5L * x * (1.0L + std::erf(x / std::sqrt(2.0L)));
}

// align-corners bilinear sample of a (h0,w0) grid at target (h1,w1)
template <typename T>
Tensor<T> bilinear_grid(const Tensor<T>& x, int h1, int w1) {
    const int h0 = x.extent(0), w0 = x.extent(1);
    Tensor<T> out({h1, w1});
    for (int i = 0; i < h1; ++i)
        for (int j = 0; j < w1; ++j) {
            const double fy = (h1 == 1 || h0 == 1) ? 0.0 : static_cast<double>(i) * (h0 - 1) / (h1 - 1);
            const double fx = (w1 == 1 || w0 == 1) ? 0.0 : static_cast<double>(j) * (w0 - 1) / (w1 - 1);
            const int y0 = std::min(static_cast<int>(fy), h0 - 1), x0 = std::min(static_cast<int>(fx), w0 - 1);
            const int y1 = std::min(y0 + 1, h0 - 1), x1 = std::min(x0 + 1, w0 - 1);
            const double dy = fy - y0, dx = fx - x0;
            const double v = (1 - dy) * ((1 - dx) * x[static_cast<long long>(y0) * w0 + x0] +
                                         dx * x[static_cast<long long>(y0) * w0 + x1]) +
                             dy * ((1 - dx) * x[static_cast<long long>(y1) * w0 + x0] +
                                   dx * x[static_cast<long long>(y1) * w0 + x1]);
            out[static_cast<long long>(i) * w1 + j] = static_cast<T>(v);
        }
    return out;
}

}  // namespace oracle
