#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ops.hpp"
#include "rng.hpp"
#include "tensor.hpp"

// Deformable gated temporal fusion: pose-free alignment of the previous
// hidden BEV feature via modulated deformable convolution, followed by a
// GRU-style gated update and an output conv.
namespace bevkit::dgtf {

struct DgtfParams {
    // offset branch: concat(X, H_prev) -> 3*k*k channels (2k^2 raw offsets,
    // k^2 mask logits)
    Tensor conv_offset_w, conv_offset_b;
    // gates: concat inputs (2C channels) -> C channels, 3x3
    Tensor conv_r_w, conv_r_b;
    Tensor conv_z_w, conv_z_b;
    Tensor conv_h_w, conv_h_b;
    // the deformable conv itself, C -> C, k x k
    Tensor dcn_w, dcn_b;
    // output conv, C -> C, 3x3
    Tensor conv_out_w, conv_out_b;
    std::size_t k = 3;
    std::size_t deformable_groups = 1;

    std::size_t channels() const { return dcn_w.extent(0); }

    static DgtfParams zeros(std::size_t c, std::size_t k = 3) {
        DgtfParams p;
        p.k = k;
        std::size_t kk = k * k;
        p.conv_offset_w = Tensor({3 * kk, 2 * c, k, k});
        p.conv_offset_b = Tensor({3 * kk});
        p.conv_r_w = Tensor({c, 2 * c, 3, 3});
        p.conv_r_b = Tensor({c});
        p.conv_z_w = p.conv_r_w;
        p.conv_z_b = p.conv_r_b;
        p.conv_h_w = p.conv_r_w;
        p.conv_h_b = p.conv_r_b;
        p.dcn_w = Tensor({c, c, k, k});
        p.dcn_b = Tensor({c});
        p.conv_out_w = Tensor({c, c, 3, 3});
        p.conv_out_b = Tensor({c});
        return p;
    }

    static DgtfParams random(std::size_t c, std::size_t k, SplitMix64& rng, double scale = 0.3) {
        DgtfParams p = zeros(c, k);
        for (Tensor* t : {&p.conv_offset_w, &p.conv_offset_b, &p.conv_r_w, &p.conv_r_b,
                          &p.conv_z_w, &p.conv_z_b, &p.conv_h_w, &p.conv_h_b, &p.dcn_w, &p.dcn_b,
                          &p.conv_out_w, &p.conv_out_b}) {
            for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = scale * rng.next_gaussian();
        }
        return p;
    }

    std::vector<Tensor*> all_tensors() {
        return {&conv_offset_w, &conv_offset_b, &conv_r_w, &conv_r_b, &conv_z_w, &conv_z_b,
                &conv_h_w,      &conv_h_b,      &dcn_w,    &dcn_b,    &conv_out_w, &conv_out_b};
    }
    std::vector<const Tensor*> all_tensors() const {
        return {&conv_offset_w, &conv_offset_b, &conv_r_w, &conv_r_b, &conv_z_w, &conv_z_b,
                &conv_h_w,      &conv_h_b,      &dcn_w,    &dcn_b,    &conv_out_w, &conv_out_b};
    }
    static std::vector<const char*> tensor_names() {
        return {"conv_offset_w", "conv_offset_b", "conv_r_w", "conv_r_b", "conv_z_w", "conv_z_b",
                "conv_h_w",      "conv_h_b",      "dcn_w",    "dcn_b",    "conv_out_w",
                "conv_out_b"};
    }
};

struct DgtfState {
    Tensor h;
    bool initialized = false;
};

// ---------------------------------------------------------------------------
// offset prediction
// ---------------------------------------------------------------------------

struct Offsets {
    Tensor delta_p;  // [B, 2k^2, H, W], raw
    Tensor m;        // [B, k^2, H, W], sigmoid-activated
};

inline Offsets predict_offsets(const Tensor& x, const Tensor& h_prev, const DgtfParams& p) {
    require_same_shape(x, h_prev, "predict_offsets");
    int pad = static_cast<int>(p.k) / 2;
    Tensor raw = ops::conv2d(ops::concat_channels(x, h_prev), p.conv_offset_w, p.conv_offset_b,
                             pad, pad);
    const std::size_t B = raw.extent(0), H = raw.extent(2), W = raw.extent(3);
    const std::size_t kk = p.k * p.k;
    Offsets out{Tensor({B, 2 * kk, H, W}), Tensor({B, kk, H, W})};
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x2 = 0; x2 < W; ++x2) {
                for (std::size_t c = 0; c < 2 * kk; ++c)
                    out.delta_p(b, c, y, x2) = raw(b, c, y, x2);
                for (std::size_t c = 0; c < kk; ++c)
                    out.m(b, c, y, x2) = ops::sigmoid(raw(b, 2 * kk + c, y, x2));
            }
    return out;
}

struct PredictOffsetsGrads {
    Tensor x, h_prev, conv_offset_w, conv_offset_b;
};

inline PredictOffsetsGrads predict_offsets_backward(const Tensor& x, const Tensor& h_prev,
                                                    const DgtfParams& p, const Offsets& out,
                                                    const Tensor& grad_delta_p,
                                                    const Tensor& grad_m) {
    const std::size_t B = x.extent(0), H = x.extent(2), W = x.extent(3);
    const std::size_t kk = p.k * p.k;
    Tensor grad_raw({B, 3 * kk, H, W});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x2 = 0; x2 < W; ++x2) {
                for (std::size_t c = 0; c < 2 * kk; ++c)
                    grad_raw(b, c, y, x2) = grad_delta_p(b, c, y, x2);
                for (std::size_t c = 0; c < kk; ++c) {
                    double mv = out.m(b, c, y, x2);
                    grad_raw(b, 2 * kk + c, y, x2) = grad_m(b, c, y, x2) * mv * (1.0 - mv);
                }
            }
    int pad = static_cast<int>(p.k) / 2;
    Tensor cat = ops::concat_channels(x, h_prev);
    auto g = ops::conv2d_backward(cat, p.conv_offset_w, pad, pad, grad_raw);
    PredictOffsetsGrads out_g{Tensor(x.shape()), Tensor(h_prev.shape()), std::move(g.kernel),
                              std::move(g.bias)};
    ops::split_channels_accumulate(g.input, out_g.x, out_g.h_prev);
    return out_g;
}

// ---------------------------------------------------------------------------
// modulated deformable convolution (DCNv2)
// ---------------------------------------------------------------------------

// Offset channel layout: tap q (row-major over the k x k grid) uses channels
// (2q, 2q+1) = (dy, dx); mask channel q modulates tap q.
inline Tensor dcn_align(const Tensor& h_prev, const Tensor& delta_p, const Tensor& m,
                        const DgtfParams& p) {
    require_rank(h_prev, 4, "dcn_align h_prev");
    const std::size_t B = h_prev.extent(0), C = h_prev.extent(1);
    const std::size_t H = h_prev.extent(2), W = h_prev.extent(3);
    const std::size_t k = p.k, kk = k * k;
    const int pad = static_cast<int>(k) / 2;
    if (delta_p.extent(1) != 2 * kk || m.extent(1) != kk) {
        throw std::invalid_argument("dcn_align: offset/mask channel axes do not match k=" +
                                    std::to_string(k));
    }
    const std::size_t O = p.dcn_w.extent(0);
    Tensor out({B, O, H, W});
    Tensor feat({C, H, W});
    std::vector<double> vals(C);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) feat(c, y, x) = h_prev(b, c, y, x);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                for (std::size_t o = 0; o < O; ++o) out(b, o, y, x) = p.dcn_b(o);
                for (std::size_t q = 0; q < kk; ++q) {
                    double sy = static_cast<double>(y) + static_cast<double>(q / k) - pad +
                                delta_p(b, 2 * q, y, x);
                    double sx = static_cast<double>(x) + static_cast<double>(q % k) - pad +
                                delta_p(b, 2 * q + 1, y, x);
                    Tensor sample = ops::bilinear_sample(feat, sy, sx);
                    double mod = m(b, q, y, x);
                    for (std::size_t o = 0; o < O; ++o) {
                        double acc = 0.0;
                        for (std::size_t c = 0; c < C; ++c)
                            acc += p.dcn_w(o, c, q / k, q % k) * sample(c);
                        out(b, o, y, x) += mod * acc;
                    }
                }
            }
    }
    return out;
}

struct DcnGrads {
    Tensor h_prev, delta_p, m, dcn_w, dcn_b;
};

inline DcnGrads dcn_align_backward(const Tensor& h_prev, const Tensor& delta_p, const Tensor& m,
                                   const DgtfParams& p, const Tensor& grad_out) {
    const std::size_t B = h_prev.extent(0), C = h_prev.extent(1);
    const std::size_t H = h_prev.extent(2), W = h_prev.extent(3);
    const std::size_t k = p.k, kk = k * k;
    const int pad = static_cast<int>(k) / 2;
    const std::size_t O = p.dcn_w.extent(0);
    DcnGrads g{Tensor(h_prev.shape()), Tensor(delta_p.shape()), Tensor(m.shape()),
               Tensor(p.dcn_w.shape()), Tensor(p.dcn_b.shape())};
    Tensor feat({C, H, W});
    Tensor gfeat({C, H, W});
    std::vector<double> gval(C);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    feat(c, y, x) = h_prev(b, c, y, x);
                    gfeat(c, y, x) = 0.0;
                }
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                for (std::size_t o = 0; o < O; ++o) g.dcn_b(o) += grad_out(b, o, y, x);
                for (std::size_t q = 0; q < kk; ++q) {
                    double sy = static_cast<double>(y) + static_cast<double>(q / k) - pad +
                                delta_p(b, 2 * q, y, x);
                    double sx = static_cast<double>(x) + static_cast<double>(q % k) - pad +
                                delta_p(b, 2 * q + 1, y, x);
                    Tensor sample = ops::bilinear_sample(feat, sy, sx);
                    double mod = m(b, q, y, x);
                    double gmod = 0.0;
                    for (std::size_t c = 0; c < C; ++c) gval[c] = 0.0;
                    for (std::size_t o = 0; o < O; ++o) {
                        double go = grad_out(b, o, y, x);
                        if (go == 0.0) continue;
                        for (std::size_t c = 0; c < C; ++c) {
                            double w = p.dcn_w(o, c, q / k, q % k);
                            gval[c] += go * w * mod;
                            g.dcn_w(o, c, q / k, q % k) += go * mod * sample(c);
                            gmod += go * w * sample(c);
                        }
                    }
                    g.m(b, q, y, x) += gmod;
                    double gy = 0.0, gx = 0.0;
                    ops::bilinear_sample_backward(feat, sy, sx, gval.data(), gfeat, gy, gx);
                    g.delta_p(b, 2 * q, y, x) += gy;
                    g.delta_p(b, 2 * q + 1, y, x) += gx;
                }
            }
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) g.h_prev(b, c, y, x) += gfeat(c, y, x);
    }
    return g;
}

// ---------------------------------------------------------------------------
// gated update
// ---------------------------------------------------------------------------

struct GatedUpdateCache {
    Tensor r, z, h_cand, h_t;
};

inline GatedUpdateCache gated_update(const Tensor& x, const Tensor& h_aligned,
                                     const DgtfParams& p) {
    require_same_shape(x, h_aligned, "gated_update");
    Tensor cat_rz = ops::concat_channels(x, h_aligned);
    GatedUpdateCache c;
    c.r = ops::sigmoid(ops::conv2d(cat_rz, p.conv_r_w, p.conv_r_b, 1, 1));
    c.z = ops::sigmoid(ops::conv2d(cat_rz, p.conv_z_w, p.conv_z_b, 1, 1));
    Tensor cat_h = ops::concat_channels(x, ops::mul(c.r, h_aligned));
    c.h_cand = ops::tanh(ops::conv2d(cat_h, p.conv_h_w, p.conv_h_b, 1, 1));
    c.h_t = Tensor(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        c.h_t[i] = (1.0 - c.z[i]) * x[i] + c.z[i] * c.h_cand[i];
    }
    return c;
}

struct GatedUpdateGrads {
    Tensor x, h_aligned;
    Tensor conv_r_w, conv_r_b, conv_z_w, conv_z_b, conv_h_w, conv_h_b;
};

inline GatedUpdateGrads gated_update_backward(const Tensor& x, const Tensor& h_aligned,
                                              const DgtfParams& p, const GatedUpdateCache& c,
                                              const Tensor& grad_h_t) {
    GatedUpdateGrads g{Tensor(x.shape()),          Tensor(h_aligned.shape()),
                       Tensor(p.conv_r_w.shape()), Tensor(p.conv_r_b.shape()),
                       Tensor(p.conv_z_w.shape()), Tensor(p.conv_z_b.shape()),
                       Tensor(p.conv_h_w.shape()), Tensor(p.conv_h_b.shape())};
    const std::size_t n = x.size();
    Tensor gz(x.shape()), gcand(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        g.x[i] += grad_h_t[i] * (1.0 - c.z[i]);
        gz[i] = grad_h_t[i] * (c.h_cand[i] - x[i]);
        gcand[i] = grad_h_t[i] * c.z[i];
    }

    // candidate: tanh(conv_h(concat(x, r*h_aligned)))
    Tensor gu_h(x.shape());
    for (std::size_t i = 0; i < n; ++i) gu_h[i] = gcand[i] * (1.0 - c.h_cand[i] * c.h_cand[i]);
    Tensor cat_h = ops::concat_channels(x, ops::mul(c.r, h_aligned));
    auto bh = ops::conv2d_backward(cat_h, p.conv_h_w, 1, 1, gu_h);
    g.conv_h_w = std::move(bh.kernel);
    g.conv_h_b = std::move(bh.bias);
    Tensor g_rh(x.shape());
    ops::split_channels_accumulate(bh.input, g.x, g_rh);
    Tensor gr(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        gr[i] = g_rh[i] * h_aligned[i];
        g.h_aligned[i] += g_rh[i] * c.r[i];
    }

    // gates: sigmoid(conv(concat(x, h_aligned)))
    Tensor cat_rz = ops::concat_channels(x, h_aligned);
    Tensor gu_z(x.shape()), gu_r(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        gu_z[i] = gz[i] * c.z[i] * (1.0 - c.z[i]);
        gu_r[i] = gr[i] * c.r[i] * (1.0 - c.r[i]);
    }
    auto bz = ops::conv2d_backward(cat_rz, p.conv_z_w, 1, 1, gu_z);
    g.conv_z_w = std::move(bz.kernel);
    g.conv_z_b = std::move(bz.bias);
    ops::split_channels_accumulate(bz.input, g.x, g.h_aligned);
    auto br = ops::conv2d_backward(cat_rz, p.conv_r_w, 1, 1, gu_r);
    g.conv_r_w = std::move(br.kernel);
    g.conv_r_b = std::move(br.bias);
    ops::split_channels_accumulate(br.input, g.x, g.h_aligned);
    return g;
}

// ---------------------------------------------------------------------------
// full step and sequences
// ---------------------------------------------------------------------------

struct DgtfStepCache {
    Tensor h_prev;  // the actual recurrent partner (bootstrap resolved)
    bool bootstrapped = false;
    Offsets offsets;
    Tensor h_aligned;
    GatedUpdateCache gated;
};

struct DgtfStepResult {
    Tensor f_rc;
    DgtfState new_state;
    DgtfStepCache cache;
};

inline DgtfStepResult dgtf_step(const Tensor& x, const DgtfState& state, const DgtfParams& p) {
    DgtfStepResult res;
    res.cache.bootstrapped = !state.initialized;
    res.cache.h_prev = state.initialized ? state.h : x;  // first-frame bootstrap
    if (state.initialized) require_same_shape(x, state.h, "dgtf_step: state shape drift");
    res.cache.offsets = predict_offsets(x, res.cache.h_prev, p);
    res.cache.h_aligned = dcn_align(res.cache.h_prev, res.cache.offsets.delta_p,
                                    res.cache.offsets.m, p);
    res.cache.gated = gated_update(x, res.cache.h_aligned, p);
    res.f_rc = ops::conv2d(res.cache.gated.h_t, p.conv_out_w, p.conv_out_b, 1, 1);
    res.new_state = {res.cache.gated.h_t, true};
    return res;
}

struct DgtfStepGrads {
    Tensor x, h_prev;
    DgtfParams params;  // gradient tensors, same layout as the parameters
};

inline DgtfStepGrads dgtf_step_backward(const Tensor& x, const DgtfParams& p,
                                        const DgtfStepCache& cache, const Tensor& grad_f_rc) {
    DgtfStepGrads g{Tensor(x.shape()), Tensor(x.shape()), DgtfParams::zeros(p.channels(), p.k)};

    auto bout = ops::conv2d_backward(cache.gated.h_t, p.conv_out_w, 1, 1, grad_f_rc);
    g.params.conv_out_w = std::move(bout.kernel);
    g.params.conv_out_b = std::move(bout.bias);

    auto bg = gated_update_backward(x, cache.h_aligned, p, cache.gated, bout.input);
    for (std::size_t i = 0; i < g.x.size(); ++i) g.x[i] += bg.x[i];
    g.params.conv_r_w = std::move(bg.conv_r_w);
    g.params.conv_r_b = std::move(bg.conv_r_b);
    g.params.conv_z_w = std::move(bg.conv_z_w);
    g.params.conv_z_b = std::move(bg.conv_z_b);
    g.params.conv_h_w = std::move(bg.conv_h_w);
    g.params.conv_h_b = std::move(bg.conv_h_b);

    auto bd = dcn_align_backward(cache.h_prev, cache.offsets.delta_p, cache.offsets.m, p,
                                 bg.h_aligned);
    for (std::size_t i = 0; i < g.h_prev.size(); ++i) g.h_prev[i] += bd.h_prev[i];
    g.params.dcn_w = std::move(bd.dcn_w);
    g.params.dcn_b = std::move(bd.dcn_b);

    auto bo = predict_offsets_backward(x, cache.h_prev, p, cache.offsets, bd.delta_p, bd.m);
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        g.x[i] += bo.x[i];
        g.h_prev[i] += bo.h_prev[i];
    }
    g.params.conv_offset_w = std::move(bo.conv_offset_w);
    g.params.conv_offset_b = std::move(bo.conv_offset_b);

    if (cache.bootstrapped) {
        // h_prev := x on the first frame, so its gradient folds into x
        for (std::size_t i = 0; i < g.x.size(); ++i) g.x[i] += g.h_prev[i];
        g.h_prev = Tensor(x.shape());
    }
    return g;
}

// Runs a temporally ordered frame list; at time t the recurrent partner is
// the state produced at t - gap (gap interleaved independent recurrences).
inline std::vector<Tensor> run_sequence(const std::vector<Tensor>& frames, std::size_t gap,
                                        const DgtfParams& p) {
    if (gap < 1 || gap > 3) throw std::invalid_argument("run_sequence: gap must be in {1,2,3}");
    std::vector<DgtfState> streams(gap);
    std::vector<Tensor> outputs;
    outputs.reserve(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
        auto& state = streams[t % gap];
        auto res = dgtf_step(frames[t], state, p);
        state = res.new_state;
        outputs.push_back(std::move(res.f_rc));
    }
    return outputs;
}

}  // namespace bevkit::dgtf
