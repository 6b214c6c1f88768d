#pragma once

#include <stdexcept>
#include <vector>

#include "ops.hpp"
#include "rng.hpp"
#include "tensor.hpp"

// Instance-guided dynamic refinement: pooled instance prototypes are
// broadcast into BEV through a softmax assignment map, drive a per-location
// affine calibration of the fused feature, and are blended back in through
// a foreground gate.
namespace bevkit::igdr {

struct IgdrInputs {
    Tensor f_rc;        // [B,C,Hb,Wb]
    Tensor e_features;  // [N,C_inst,H',W']
    Tensor s_bev;       // [B,N,Hb,Wb], nonnegative scores
    double temperature = 1.0;
    bool has_instances = true;

    std::size_t num_instances() const { return has_instances ? s_bev.extent(1) : 0; }

    // degenerate N=0 case: the module becomes the identity on f_rc
    static IgdrInputs passthrough(Tensor f_rc_in) {
        IgdrInputs in;
        std::size_t b = f_rc_in.extent(0), hb = f_rc_in.extent(2), wb = f_rc_in.extent(3);
        in.s_bev = Tensor({b, 1, hb, wb});
        in.e_features = Tensor({1, 1, 1, 1});
        in.f_rc = std::move(f_rc_in);
        in.has_instances = false;
        return in;
    }

    void validate() const {
        if (temperature <= 0.0) throw std::invalid_argument("IgdrInputs: temperature must be > 0");
        if (!has_instances) return;
        if (s_bev.extent(1) != e_features.extent(0)) {
            throw std::invalid_argument("IgdrInputs: instance axis mismatch, S_BEV has " +
                                        std::to_string(s_bev.extent(1)) + ", E_features has " +
                                        std::to_string(e_features.extent(0)));
        }
        for (std::size_t i = 0; i < s_bev.size(); ++i) {
            if (s_bev[i] < 0.0) throw std::invalid_argument("IgdrInputs: S_BEV must be >= 0");
        }
    }
};

struct IgdrParams {
    Tensor proj_w, proj_b;              // linear C_inst -> C_inst
    Tensor conv_gamma_w, conv_gamma_b;  // 3x3, C_inst -> C
    Tensor conv_beta_w, conv_beta_b;    // 3x3, C_inst -> C
    Tensor conv_gate_w, conv_gate_b;    // 3x3, 1 -> 1

    static IgdrParams zeros(std::size_t c, std::size_t c_inst) {
        IgdrParams p;
        p.proj_w = Tensor({c_inst, c_inst});
        p.proj_b = Tensor({c_inst});
        p.conv_gamma_w = Tensor({c, c_inst, 3, 3});
        p.conv_gamma_b = Tensor({c});
        p.conv_beta_w = Tensor({c, c_inst, 3, 3});
        p.conv_beta_b = Tensor({c});
        p.conv_gate_w = Tensor({1, 1, 3, 3});
        p.conv_gate_b = Tensor({1});
        return p;
    }

    // gamma starts at 1 and beta at 0, so the module is a no-op at init
    static IgdrParams identity_init(std::size_t c, std::size_t c_inst) {
        IgdrParams p = zeros(c, c_inst);
        for (std::size_t i = 0; i < c_inst; ++i) p.proj_w(i, i) = 1.0;
        for (std::size_t i = 0; i < c; ++i) p.conv_gamma_b(i) = 1.0;
        return p;
    }

    static IgdrParams random(std::size_t c, std::size_t c_inst, SplitMix64& rng,
                             double scale = 0.3) {
        IgdrParams p = zeros(c, c_inst);
        for (Tensor* t : {&p.proj_w, &p.proj_b, &p.conv_gamma_w, &p.conv_gamma_b, &p.conv_beta_w,
                          &p.conv_beta_b, &p.conv_gate_w, &p.conv_gate_b}) {
            for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = scale * rng.next_gaussian();
        }
        return p;
    }

    std::vector<Tensor*> all_tensors() {
        return {&proj_w,      &proj_b,      &conv_gamma_w, &conv_gamma_b,
                &conv_beta_w, &conv_beta_b, &conv_gate_w,  &conv_gate_b};
    }
    std::vector<const Tensor*> all_tensors() const {
        return {&proj_w,      &proj_b,      &conv_gamma_w, &conv_gamma_b,
                &conv_beta_w, &conv_beta_b, &conv_gate_w,  &conv_gate_b};
    }
    static std::vector<const char*> tensor_names() {
        return {"proj_w",      "proj_b",      "conv_gamma_w", "conv_gamma_b",
                "conv_beta_w", "conv_beta_b", "conv_gate_w",  "conv_gate_b"};
    }
};

// ---------------------------------------------------------------------------
// the five stages
// ---------------------------------------------------------------------------

// global average pool + linear projection, replicated across the batch axis
inline Tensor pool_project(const Tensor& e_features, const IgdrParams& p, std::size_t batch) {
    Tensor pooled = ops::global_avg_pool(e_features);  // [N, C_inst]
    const std::size_t N = pooled.extent(0), C = pooled.extent(1);
    Tensor e_proj({batch, N, C});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < C; ++co) {
            double acc = p.proj_b(co);
            for (std::size_t ci = 0; ci < C; ++ci) acc += p.proj_w(co, ci) * pooled(n, ci);
            for (std::size_t b = 0; b < batch; ++b) e_proj(b, n, co) = acc;
        }
    return e_proj;
}

inline Tensor softmax_assign(const Tensor& s_bev, double temperature) {
    require_rank(s_bev, 4, "softmax_assign s_bev");
    return ops::softmax(s_bev, 1, temperature);
}

// E_BEV[b,c,h,w] = sum_n A_prob[b,n,h,w] * E_proj[b,n,c]
inline Tensor broadcast_prototypes(const Tensor& a_prob, const Tensor& e_proj) {
    if (a_prob.extent(1) != e_proj.extent(1)) {
        throw std::invalid_argument("broadcast_prototypes: instance axis mismatch " +
                                    a_prob.shape_str() + " vs " + e_proj.shape_str());
    }
    const std::size_t B = a_prob.extent(0), N = a_prob.extent(1);
    const std::size_t H = a_prob.extent(2), W = a_prob.extent(3);
    const std::size_t C = e_proj.extent(2);
    Tensor e_bev({B, C, H, W});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (std::size_t n = 0; n < N; ++n)
                        acc += a_prob(b, n, y, x) * e_proj(b, n, c);
                    e_bev(b, c, y, x) = acc;
                }
    return e_bev;
}

struct AffinePair {
    Tensor gamma, beta;
};

inline AffinePair gen_affine(const Tensor& e_bev, const IgdrParams& p) {
    return {ops::conv2d(e_bev, p.conv_gamma_w, p.conv_gamma_b, 1, 1),
            ops::conv2d(e_bev, p.conv_beta_w, p.conv_beta_b, 1, 1)};
}

inline Tensor calibrate(const Tensor& f_rc, const Tensor& gamma, const Tensor& beta) {
    require_same_shape(f_rc, gamma, "calibrate");
    require_same_shape(f_rc, beta, "calibrate");
    Tensor out(f_rc.shape());
    for (std::size_t i = 0; i < f_rc.size(); ++i) out[i] = f_rc[i] * gamma[i] + beta[i];
    return out;
}

inline Tensor foreground_gate(const Tensor& s_bev, const IgdrParams& p) {
    const std::size_t B = s_bev.extent(0), N = s_bev.extent(1);
    const std::size_t H = s_bev.extent(2), W = s_bev.extent(3);
    Tensor ssum({B, std::size_t{1}, H, W});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (std::size_t n = 0; n < N; ++n) acc += s_bev(b, n, y, x);
                ssum(b, 0, y, x) = acc;
            }
    return ops::sigmoid(ops::conv2d(ssum, p.conv_gate_w, p.conv_gate_b, 1, 1));
}

// convex blend, gate broadcast over channels
inline Tensor gated_fuse(const Tensor& f_rc, const Tensor& f_calibrated, const Tensor& g_bg) {
    require_same_shape(f_rc, f_calibrated, "gated_fuse");
    const std::size_t B = f_rc.extent(0), C = f_rc.extent(1);
    const std::size_t H = f_rc.extent(2), W = f_rc.extent(3);
    Tensor out(f_rc.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double g = g_bg(b, 0, y, x);
                    out(b, c, y, x) =
                        (1.0 - g) * f_rc(b, c, y, x) + g * f_calibrated(b, c, y, x);
                }
    return out;
}

// ---------------------------------------------------------------------------
// full forward / backward
// ---------------------------------------------------------------------------

struct IgdrResult {
    Tensor f_final;
    Tensor e_proj, a_prob, e_bev, gamma, beta, g_bg, f_calibrated;
    bool no_instance_passthrough = false;
};

inline IgdrResult igdr_forward(const IgdrInputs& in, const IgdrParams& p) {
    in.validate();
    IgdrResult res;
    if (in.num_instances() == 0) {
        res.f_final = in.f_rc;
        res.no_instance_passthrough = true;
        return res;
    }
    res.e_proj = pool_project(in.e_features, p, in.f_rc.extent(0));
    res.a_prob = softmax_assign(in.s_bev, in.temperature);
    res.e_bev = broadcast_prototypes(res.a_prob, res.e_proj);
    auto affine = gen_affine(res.e_bev, p);
    res.gamma = std::move(affine.gamma);
    res.beta = std::move(affine.beta);
    res.f_calibrated = calibrate(in.f_rc, res.gamma, res.beta);
    res.g_bg = foreground_gate(in.s_bev, p);
    res.f_final = gated_fuse(in.f_rc, res.f_calibrated, res.g_bg);
    return res;
}

struct IgdrGrads {
    Tensor f_rc, e_features, s_bev;
    IgdrParams params;  // gradient tensors
};

inline IgdrGrads igdr_backward(const IgdrInputs& in, const IgdrParams& p, const IgdrResult& res,
                               const Tensor& grad_f_final) {
    const std::size_t C = in.f_rc.extent(1);
    const std::size_t C_inst = in.e_features.extent(1);
    IgdrGrads g{Tensor(in.f_rc.shape()), Tensor(in.e_features.shape()), Tensor(in.s_bev.shape()),
                IgdrParams::zeros(C, C_inst)};
    if (res.no_instance_passthrough) {
        g.f_rc = grad_f_final;
        return g;
    }
    const std::size_t B = in.f_rc.extent(0), H = in.f_rc.extent(2), W = in.f_rc.extent(3);
    const std::size_t N = in.s_bev.extent(1);

    // gated fuse
    Tensor g_fcal(in.f_rc.shape());
    Tensor g_gate({B, std::size_t{1}, H, W});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double gate = res.g_bg(b, 0, y, x);
                double acc = 0.0;
                for (std::size_t c = 0; c < C; ++c) {
                    double go = grad_f_final(b, c, y, x);
                    g.f_rc(b, c, y, x) += go * (1.0 - gate);
                    g_fcal(b, c, y, x) = go * gate;
                    acc += go * (res.f_calibrated(b, c, y, x) - in.f_rc(b, c, y, x));
                }
                g_gate(b, 0, y, x) = acc;
            }

    // foreground gate: sigmoid(conv_gate(sum_n S_BEV))
    Tensor ssum({B, std::size_t{1}, H, W});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (std::size_t n = 0; n < N; ++n) acc += in.s_bev(b, n, y, x);
                ssum(b, 0, y, x) = acc;
            }
    Tensor gu(g_gate.shape());
    for (std::size_t i = 0; i < gu.size(); ++i) {
        double s = res.g_bg[i];
        gu[i] = g_gate[i] * s * (1.0 - s);
    }
    auto bgate = ops::conv2d_backward(ssum, p.conv_gate_w, 1, 1, gu);
    g.params.conv_gate_w = std::move(bgate.kernel);
    g.params.conv_gate_b = std::move(bgate.bias);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x)
                    g.s_bev(b, n, y, x) += bgate.input(b, 0, y, x);

    // calibrate
    Tensor g_gamma(res.gamma.shape()), g_beta(res.beta.shape());
    for (std::size_t i = 0; i < g_fcal.size(); ++i) {
        g.f_rc[i] += g_fcal[i] * res.gamma[i];
        g_gamma[i] = g_fcal[i] * in.f_rc[i];
        g_beta[i] = g_fcal[i];
    }

    // affine generators
    auto bgamma = ops::conv2d_backward(res.e_bev, p.conv_gamma_w, 1, 1, g_gamma);
    auto bbeta = ops::conv2d_backward(res.e_bev, p.conv_beta_w, 1, 1, g_beta);
    g.params.conv_gamma_w = std::move(bgamma.kernel);
    g.params.conv_gamma_b = std::move(bgamma.bias);
    g.params.conv_beta_w = std::move(bbeta.kernel);
    g.params.conv_beta_b = std::move(bbeta.bias);
    Tensor g_ebev = ops::add(bgamma.input, bbeta.input);

    // prototype broadcast
    Tensor g_aprob(res.a_prob.shape());
    Tensor g_eproj(res.e_proj.shape());
    const std::size_t Cp = res.e_proj.extent(2);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t n = 0; n < N; ++n) {
                    double ga = 0.0;
                    for (std::size_t c = 0; c < Cp; ++c) {
                        double ge = g_ebev(b, c, y, x);
                        ga += ge * res.e_proj(b, n, c);
                        g_eproj(b, n, c) += ge * res.a_prob(b, n, y, x);
                    }
                    g_aprob(b, n, y, x) = ga;
                }

    // softmax assignment
    Tensor g_sbev_soft = ops::softmax_backward(res.a_prob, 1, in.temperature, g_aprob);
    for (std::size_t i = 0; i < g.s_bev.size(); ++i) g.s_bev[i] += g_sbev_soft[i];

    // pool + projection (prototypes replicated over batch: accumulate)
    Tensor pooled = ops::global_avg_pool(in.e_features);
    Tensor g_pooled(pooled.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t co = 0; co < Cp; ++co) {
                double ge = g_eproj(b, n, co);
                g.params.proj_b(co) += ge;
                for (std::size_t ci = 0; ci < Cp; ++ci) {
                    g.params.proj_w(co, ci) += ge * pooled(n, ci);
                    g_pooled(n, ci) += ge * p.proj_w(co, ci);
                }
            }
    g.e_features = ops::global_avg_pool_backward(in.e_features.shape(), g_pooled);
    return g;
}

}  // namespace bevkit::igdr
