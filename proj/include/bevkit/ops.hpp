#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace bevkit::ops {

// ---------------------------------------------------------------------------
// scalar activations
// ---------------------------------------------------------------------------

inline double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// ln(1 + e^x) without overflow for large x
inline double softplus(double x) {
    if (x > 30.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double smooth_l1(double x, double beta) {
    if (beta <= 0.0) throw std::invalid_argument("smooth_l1: beta must be > 0");
    double a = std::fabs(x);
    if (a < beta) return 0.5 * x * x / beta;
    return a - 0.5 * beta;
}

inline double smooth_l1_deriv(double x, double beta) {
    if (beta <= 0.0) throw std::invalid_argument("smooth_l1: beta must be > 0");
    if (std::fabs(x) < beta) return x / beta;
    return x > 0.0 ? 1.0 : -1.0;
}

// ---------------------------------------------------------------------------
// elementwise tensor ops
// ---------------------------------------------------------------------------

template <typename F>
Tensor map(const Tensor& x, F f) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

inline Tensor sigmoid(const Tensor& x) { return map(x, [](double v) { return sigmoid(v); }); }
inline Tensor tanh(const Tensor& x) { return map(x, [](double v) { return std::tanh(v); }); }
inline Tensor softplus(const Tensor& x) { return map(x, [](double v) { return softplus(v); }); }
inline Tensor exp(const Tensor& x) { return map(x, [](double v) { return std::exp(v); }); }

inline Tensor log(const Tensor& x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] <= 0.0) {
            throw std::invalid_argument("log: non-positive input at flat index " +
                                        std::to_string(i));
        }
    }
    return map(x, [](double v) { return std::log(v); });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline Tensor add_scalar(const Tensor& a, double s) {
    return map(a, [s](double v) { return v + s; });
}
inline Tensor mul_scalar(const Tensor& a, double s) {
    return map(a, [s](double v) { return v * s; });
}

// ---------------------------------------------------------------------------
// conv2d: stride-1 cross-correlation with zero padding
// ---------------------------------------------------------------------------

inline void check_conv_args(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                            int pad_h, int pad_w) {
    require_rank(input, 4, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    require_rank(bias, 1, "conv2d bias");
    if (input.extent(1) != kernel.extent(1)) {
        throw std::invalid_argument("conv2d: input channel axis (" +
                                    std::to_string(input.extent(1)) +
                                    ") does not match kernel input-channel axis (" +
                                    std::to_string(kernel.extent(1)) + ")");
    }
    if (bias.extent(0) != kernel.extent(0)) {
        throw std::invalid_argument("conv2d: bias axis (" + std::to_string(bias.extent(0)) +
                                    ") does not match kernel output-channel axis (" +
                                    std::to_string(kernel.extent(0)) + ")");
    }
    if (pad_h < 0 || pad_w < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
    long oh = static_cast<long>(input.extent(2)) + 2 * pad_h -
              static_cast<long>(kernel.extent(2)) + 1;
    long ow = static_cast<long>(input.extent(3)) + 2 * pad_w -
              static_cast<long>(kernel.extent(3)) + 1;
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("conv2d: kernel larger than padded input on spatial axes");
    }
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     int pad_h, int pad_w) {
    check_conv_args(input, kernel, bias, pad_h, pad_w);
    const std::size_t B = input.extent(0), C = input.extent(1);
    const std::size_t H = input.extent(2), W = input.extent(3);
    const std::size_t O = kernel.extent(0), kh = kernel.extent(2), kw = kernel.extent(3);
    const std::size_t OH = H + 2 * pad_h - kh + 1, OW = W + 2 * pad_w - kw + 1;
    Tensor out({B, O, OH, OW});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < OH; ++y)
                for (std::size_t x = 0; x < OW; ++x) {
                    double acc = bias(o);
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            long iy = static_cast<long>(y + ky) - pad_h;
                            if (iy < 0 || iy >= static_cast<long>(H)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                long ix = static_cast<long>(x + kx) - pad_w;
                                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                acc += input(b, c, static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix)) *
                                       kernel(o, c, ky, kx);
                            }
                        }
                    out(b, o, y, x) = acc;
                }
    return out;
}

struct Conv2dGrads {
    Tensor input;
    Tensor kernel;
    Tensor bias;
};

inline Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel,
                                   int pad_h, int pad_w, const Tensor& grad_out) {
    require_rank(grad_out, 4, "conv2d_backward grad_out");
    const std::size_t B = input.extent(0), C = input.extent(1);
    const std::size_t H = input.extent(2), W = input.extent(3);
    const std::size_t O = kernel.extent(0), kh = kernel.extent(2), kw = kernel.extent(3);
    const std::size_t OH = H + 2 * pad_h - kh + 1, OW = W + 2 * pad_w - kw + 1;
    if (grad_out.extent(0) != B || grad_out.extent(1) != O || grad_out.extent(2) != OH ||
        grad_out.extent(3) != OW) {
        throw std::invalid_argument("conv2d_backward: grad_out shape " + grad_out.shape_str() +
                                    " does not match forward output");
    }
    Conv2dGrads g{Tensor(input.shape()), Tensor(kernel.shape()), Tensor({O})};
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < OH; ++y)
                for (std::size_t x = 0; x < OW; ++x) {
                    double go = grad_out(b, o, y, x);
                    g.bias(o) += go;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            long iy = static_cast<long>(y + ky) - pad_h;
                            if (iy < 0 || iy >= static_cast<long>(H)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                long ix = static_cast<long>(x + kx) - pad_w;
                                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                auto uy = static_cast<std::size_t>(iy);
                                auto ux = static_cast<std::size_t>(ix);
                                g.input(b, c, uy, ux) += go * kernel(o, c, ky, kx);
                                g.kernel(o, c, ky, kx) += go * input(b, c, uy, ux);
                            }
                        }
                }
    return g;
}

// ---------------------------------------------------------------------------
// bilinear sampling with zero padding outside [0,H) x [0,W)
// ---------------------------------------------------------------------------

inline Tensor bilinear_sample(const Tensor& feature, double y, double x) {
    require_rank(feature, 3, "bilinear_sample feature");
    const std::size_t C = feature.extent(0);
    const long H = static_cast<long>(feature.extent(1));
    const long W = static_cast<long>(feature.extent(2));
    const long y0 = static_cast<long>(std::floor(y));
    const long x0 = static_cast<long>(std::floor(x));
    const double wy = y - static_cast<double>(y0);
    const double wx = x - static_cast<double>(x0);
    Tensor out({C});
    for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy <= 1; ++dy) {
            long yy = y0 + dy;
            if (yy < 0 || yy >= H) continue;
            double fy = dy ? wy : 1.0 - wy;
            for (int dx = 0; dx <= 1; ++dx) {
                long xx = x0 + dx;
                if (xx < 0 || xx >= W) continue;
                double fx = dx ? wx : 1.0 - wx;
                acc += fy * fx *
                       feature(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            }
        }
        out(c) = acc;
    }
    return out;
}

// Accumulates d(sample)/d(feature) into grad_feature and returns the
// coordinate gradients. grad_out has C entries.
inline void bilinear_sample_backward(const Tensor& feature, double y, double x,
                                     const double* grad_out, Tensor& grad_feature,
                                     double& grad_y, double& grad_x) {
    const std::size_t C = feature.extent(0);
    const long H = static_cast<long>(feature.extent(1));
    const long W = static_cast<long>(feature.extent(2));
    const long y0 = static_cast<long>(std::floor(y));
    const long x0 = static_cast<long>(std::floor(x));
    const double wy = y - static_cast<double>(y0);
    const double wx = x - static_cast<double>(x0);
    grad_y = 0.0;
    grad_x = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        double go = grad_out[c];
        if (go == 0.0) continue;
        for (int dy = 0; dy <= 1; ++dy) {
            long yy = y0 + dy;
            if (yy < 0 || yy >= H) continue;
            double fy = dy ? wy : 1.0 - wy;
            double dfy = dy ? 1.0 : -1.0;
            for (int dx = 0; dx <= 1; ++dx) {
                long xx = x0 + dx;
                if (xx < 0 || xx >= W) continue;
                double fx = dx ? wx : 1.0 - wx;
                double dfx = dx ? 1.0 : -1.0;
                double f = feature(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                grad_feature(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) +=
                    go * fy * fx;
                grad_y += go * dfy * fx * f;
                grad_x += go * fy * dfx * f;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// softmax along one axis with temperature
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& input, int axis, double temperature) {
    if (temperature <= 0.0) throw std::invalid_argument("softmax: temperature must be > 0");
    if (axis < 0 || static_cast<std::size_t>(axis) >= input.rank()) {
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                    " out of range for rank " + std::to_string(input.rank()));
    }
    const std::size_t n = input.extent(axis);
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < input.rank(); ++i) inner *= input.extent(i);
    std::size_t outer = input.size() / (n * inner);
    Tensor out(input.shape());
    for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t in = 0; in < inner; ++in) {
            std::size_t base = ou * n * inner + in;
            double mx = input[base];
            for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, input[base + k * inner]);
            double sum = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                double e = std::exp((input[base + k * inner] - mx) / temperature);
                out[base + k * inner] = e;
                sum += e;
            }
            for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= sum;
        }
    return out;
}

// Backward given the softmax output y (not the input).
inline Tensor softmax_backward(const Tensor& y, int axis, double temperature,
                               const Tensor& grad_out) {
    require_same_shape(y, grad_out, "softmax_backward");
    const std::size_t n = y.extent(axis);
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < y.rank(); ++i) inner *= y.extent(i);
    std::size_t outer = y.size() / (n * inner);
    Tensor gx(y.shape());
    for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t in = 0; in < inner; ++in) {
            std::size_t base = ou * n * inner + in;
            double dot = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                dot += grad_out[base + k * inner] * y[base + k * inner];
            for (std::size_t k = 0; k < n; ++k) {
                std::size_t idx = base + k * inner;
                gx[idx] = y[idx] * (grad_out[idx] - dot) / temperature;
            }
        }
    return gx;
}

// ---------------------------------------------------------------------------
// batched matmul
// ---------------------------------------------------------------------------

inline Tensor batched_matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 3, "batched_matmul a");
    require_rank(b, 3, "batched_matmul b");
    if (a.extent(0) != b.extent(0)) {
        throw std::invalid_argument("batched_matmul: batch axis mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
    if (a.extent(2) != b.extent(1)) {
        throw std::invalid_argument("batched_matmul: inner axis mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
    const std::size_t B = a.extent(0), P = a.extent(1), Q = a.extent(2), R = b.extent(2);
    Tensor out({B, P, R});
    for (std::size_t bb = 0; bb < B; ++bb)
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t r = 0; r < R; ++r) {
                double acc = 0.0;
                for (std::size_t q = 0; q < Q; ++q) acc += a(bb, p, q) * b(bb, q, r);
                out(bb, p, r) = acc;
            }
    return out;
}

struct BmmGrads {
    Tensor a;
    Tensor b;
};

inline BmmGrads batched_matmul_backward(const Tensor& a, const Tensor& b,
                                        const Tensor& grad_out) {
    const std::size_t B = a.extent(0), P = a.extent(1), Q = a.extent(2), R = b.extent(2);
    BmmGrads g{Tensor(a.shape()), Tensor(b.shape())};
    for (std::size_t bb = 0; bb < B; ++bb)
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t r = 0; r < R; ++r) {
                double go = grad_out(bb, p, r);
                for (std::size_t q = 0; q < Q; ++q) {
                    g.a(bb, p, q) += go * b(bb, q, r);
                    g.b(bb, q, r) += go * a(bb, p, q);
                }
            }
    return g;
}

// ---------------------------------------------------------------------------
// global average pooling over spatial axes
// ---------------------------------------------------------------------------

inline Tensor global_avg_pool(const Tensor& input) {
    require_rank(input, 4, "global_avg_pool input");
    const std::size_t N = input.extent(0), C = input.extent(1);
    const std::size_t H = input.extent(2), W = input.extent(3);
    Tensor out({N, C});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) acc += input(n, c, y, x);
            out(n, c) = acc / static_cast<double>(H * W);
        }
    return out;
}

inline Tensor global_avg_pool_backward(const std::vector<std::size_t>& input_shape,
                                       const Tensor& grad_out) {
    Tensor gx(input_shape);
    const std::size_t N = input_shape[0], C = input_shape[1];
    const std::size_t H = input_shape[2], W = input_shape[3];
    const double inv = 1.0 / static_cast<double>(H * W);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            double g = grad_out(n, c) * inv;
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) gx(n, c, y, x) = g;
        }
    return gx;
}

// ---------------------------------------------------------------------------
// channel concat / split for [B,C,H,W] tensors
// ---------------------------------------------------------------------------

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank(a, 4, "concat_channels a");
    require_rank(b, 4, "concat_channels b");
    if (a.extent(0) != b.extent(0) || a.extent(2) != b.extent(2) || a.extent(3) != b.extent(3)) {
        throw std::invalid_argument("concat_channels: non-channel axes differ " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
    const std::size_t B = a.extent(0), Ca = a.extent(1), Cb = b.extent(1);
    const std::size_t H = a.extent(2), W = a.extent(3);
    Tensor out({B, Ca + Cb, H, W});
    for (std::size_t bb = 0; bb < B; ++bb)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                for (std::size_t c = 0; c < Ca; ++c) out(bb, c, y, x) = a(bb, c, y, x);
                for (std::size_t c = 0; c < Cb; ++c) out(bb, Ca + c, y, x) = b(bb, c, y, x);
            }
    return out;
}

// Splits a channel-concat gradient back into the two operand gradients,
// accumulating into the provided tensors.
inline void split_channels_accumulate(const Tensor& grad_concat, Tensor& grad_a, Tensor& grad_b) {
    const std::size_t B = grad_a.extent(0), Ca = grad_a.extent(1), Cb = grad_b.extent(1);
    const std::size_t H = grad_a.extent(2), W = grad_a.extent(3);
    for (std::size_t bb = 0; bb < B; ++bb)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                for (std::size_t c = 0; c < Ca; ++c) grad_a(bb, c, y, x) += grad_concat(bb, c, y, x);
                for (std::size_t c = 0; c < Cb; ++c)
                    grad_b(bb, c, y, x) += grad_concat(bb, Ca + c, y, x);
            }
}

}  // namespace bevkit::ops
