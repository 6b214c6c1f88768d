#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgtf.hpp"
#include "igdr.hpp"
#include "ops.hpp"
#include "pdf.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace bevkit::gradcheck {

struct FiniteDiffConfig {
    double h = 1e-5;
    double tol = 1e-4;
    double floor = 1e-8;
    std::size_t max_probe = 64;

    void validate() const {
        if (h <= 0.0) throw std::invalid_argument("FiniteDiffConfig: h must be > 0");
        if (tol <= 0.0) throw std::invalid_argument("FiniteDiffConfig: tol must be > 0");
    }
};

// One differentiable problem: mutable inputs, a scalar objective of the
// current input values, and the analytic gradient per input.
struct Problem {
    std::vector<Tensor*> inputs;
    std::vector<Tensor> analytic;
    std::function<double()> eval;
};

// Central differences on a seeded subsample of elements; returns the worst
// guarded relative error across all probed elements.
inline double max_rel_error(Problem& prob, const FiniteDiffConfig& cfg, SplitMix64& rng) {
    cfg.validate();
    if (prob.inputs.size() != prob.analytic.size()) {
        throw std::invalid_argument("gradcheck: inputs/analytic count mismatch");
    }
    double worst = 0.0;
    for (std::size_t t = 0; t < prob.inputs.size(); ++t) {
        Tensor& x = *prob.inputs[t];
        const Tensor& ga = prob.analytic[t];
        require_same_shape(x, ga, "gradcheck analytic");
        std::vector<std::size_t> idx(x.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::size_t n_probe = std::min<std::size_t>(cfg.max_probe, x.size());
        for (std::size_t i = 0; i < n_probe; ++i) {
            std::size_t j = i + rng.next_below(idx.size() - i);
            std::swap(idx[i], idx[j]);
        }
        for (std::size_t i = 0; i < n_probe; ++i) {
            std::size_t e = idx[i];
            double orig = x[e];
            x[e] = orig + cfg.h;
            double fp = prob.eval();
            x[e] = orig - cfg.h;
            double fm = prob.eval();
            x[e] = orig;
            double gfd = (fp - fm) / (2.0 * cfg.h);
            double denom = std::max({std::fabs(ga[e]), std::fabs(gfd), cfg.floor});
            worst = std::max(worst, std::fabs(ga[e] - gfd) / denom);
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// registered targets
// ---------------------------------------------------------------------------

using TargetFn = std::function<double(const FiniteDiffConfig&, std::uint64_t)>;

namespace detail {

inline Tensor random_tensor(std::vector<std::size_t> shape, SplitMix64& rng, double lo = -2.0,
                            double hi = 2.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// the fixed pdf gradcheck instance: B=2, D=8, H=W=6
struct PdfInstance {
    pdf::DepthBinSpec bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 8);
    pdf::DepthSupervisionBatch batch;
    pdf::RankingConfig cfg;
    double sigma, beta = 1.0;

    explicit PdfInstance(std::uint64_t seed) {
        // wide target so no bin's gradient sinks below finite-difference noise
        sigma = 2.5 * bins.width();
        cfg.n_edge_pairs = 32;
        cfg.n_global_pairs = 32;
        cfg.dilation_radius = 1;
        cfg.rng_seed = seed;
        SplitMix64 rng(seed);
        const std::size_t B = 2, D = 8, H = 6, W = 6;
        batch.p = Tensor({B, D, H, W});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double sum = 0.0;
                    for (std::size_t k = 0; k < D; ++k) {
                        double v = 0.1 + rng.next_double();
                        batch.p(b, k, y, x) = v;
                        sum += v;
                    }
                    for (std::size_t k = 0; k < D; ++k) batch.p(b, k, y, x) /= sum;
                }
        batch.d_dense = Tensor({B, H, W});
        batch.d_sparse = Tensor({B, H, W});
        batch.mask_dense = Tensor({B, H, W}, 1.0);
        batch.mask_sparse = Tensor({B, H, W});
        batch.instance_masks = Tensor({B, std::size_t{1}, H, W});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    batch.d_dense(b, y, x) = rng.uniform(5.0, 60.0);
                    batch.d_sparse(b, y, x) =
                        std::clamp(batch.d_dense(b, y, x) + rng.uniform(-0.3, 0.3), 1.0, 70.0);
                    batch.mask_sparse(b, y, x) = rng.next_double() < 0.5 ? 1.0 : 0.0;
                    // a 2x3 object block
                    if (y >= 1 && y <= 2 && x >= 1 && x <= 3) {
                        batch.instance_masks(b, 0, y, x) = 1.0;
                    }
                }
    }
};

// the fixed dgtf gradcheck instance: B=1, C=2, 6x6, k=3
struct DgtfInstance {
    Tensor x, h_prev;
    dgtf::DgtfParams params;

    explicit DgtfInstance(std::uint64_t seed) {
        SplitMix64 rng(seed);
        x = random_tensor({1, 2, 6, 6}, rng);
        h_prev = random_tensor({1, 2, 6, 6}, rng);
        params = dgtf::DgtfParams::random(2, 3, rng);
    }
};

// the fixed igdr gradcheck instance: B=1, N=3, C=2, C_inst=4, 5x5
struct IgdrInstance {
    igdr::IgdrInputs in;
    igdr::IgdrParams params;

    explicit IgdrInstance(std::uint64_t seed) {
        SplitMix64 rng(seed);
        in.f_rc = random_tensor({1, 2, 5, 5}, rng);
        in.e_features = random_tensor({3, 4, 4, 4}, rng);
        in.s_bev = random_tensor({1, 3, 5, 5}, rng, 0.5, 2.0);  // stays >= 0 under probing
        in.temperature = 1.0;
        params = igdr::IgdrParams::random(2, 4, rng);
    }
};

inline void register_tensor_targets(std::map<std::string, TargetFn>& reg) {
    reg["tensor.conv2d"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor input = random_tensor({2, 3, 5, 5}, rng);
        Tensor kernel = random_tensor({4, 3, 3, 3}, rng);
        Tensor bias = random_tensor({4}, rng);
        Tensor cot = random_tensor({2, 4, 5, 5}, rng);
        auto g = ops::conv2d_backward(input, kernel, 1, 1, cot);
        Problem prob;
        prob.inputs = {&input, &kernel, &bias};
        prob.analytic = {g.input, g.kernel, g.bias};
        prob.eval = [&] { return dot(ops::conv2d(input, kernel, bias, 1, 1), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["tensor.bilinear_sample"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor feature = random_tensor({3, 6, 6}, rng);
        Tensor coords = Tensor::from_data({2}, {rng.uniform(0.2, 4.3), rng.uniform(0.2, 4.3)});
        Tensor cot = random_tensor({3}, rng);
        Tensor gfeat(feature.shape());
        double gy = 0.0, gx = 0.0;
        ops::bilinear_sample_backward(feature, coords(0), coords(1), cot.data(), gfeat, gy, gx);
        Problem prob;
        prob.inputs = {&feature, &coords};
        prob.analytic = {gfeat, Tensor::from_data({2}, {gy, gx})};
        prob.eval = [&] { return dot(ops::bilinear_sample(feature, coords(0), coords(1)), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["tensor.softmax"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor x = random_tensor({2, 5, 3, 3}, rng);
        Tensor cot = random_tensor(x.shape(), rng);
        double tau = 0.7;
        Tensor y = ops::softmax(x, 1, tau);
        Problem prob;
        prob.inputs = {&x};
        prob.analytic = {ops::softmax_backward(y, 1, tau, cot)};
        prob.eval = [&] { return dot(ops::softmax(x, 1, tau), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["tensor.batched_matmul"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor a = random_tensor({2, 3, 4}, rng);
        Tensor b = random_tensor({2, 4, 5}, rng);
        Tensor cot = random_tensor({2, 3, 5}, rng);
        auto g = ops::batched_matmul_backward(a, b, cot);
        Problem prob;
        prob.inputs = {&a, &b};
        prob.analytic = {g.a, g.b};
        prob.eval = [&] { return dot(ops::batched_matmul(a, b), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["tensor.global_avg_pool"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor x = random_tensor({2, 3, 4, 5}, rng);
        Tensor cot = random_tensor({2, 3}, rng);
        Problem prob;
        prob.inputs = {&x};
        prob.analytic = {ops::global_avg_pool_backward(x.shape(), cot)};
        prob.eval = [&] { return dot(ops::global_avg_pool(x), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["tensor.elementwise"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor x = random_tensor({4, 4}, rng);
        Tensor cot = random_tensor(x.shape(), rng);
        // softplus, sigmoid, tanh, exp probed through one chained objective
        Tensor ga(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) {
            double s = ops::sigmoid(x[i]);
            double t = std::tanh(x[i]);
            ga[i] = cot[i] * (ops::sigmoid(x[i])          // d softplus
                              + s * (1.0 - s)             // d sigmoid
                              + (1.0 - t * t)             // d tanh
                              + std::exp(x[i]));          // d exp
        }
        Problem prob;
        prob.inputs = {&x};
        prob.analytic = {ga};
        prob.eval = [&] {
            double acc = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                acc += cot[i] * (ops::softplus(x[i]) + ops::sigmoid(x[i]) + std::tanh(x[i]) +
                                 std::exp(x[i]));
            }
            return acc;
        };
        return max_rel_error(prob, cfg, rng);
    };
}

inline void register_pdf_targets(std::map<std::string, TargetFn>& reg) {
    reg["pdf.kl_prob_loss"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        PdfInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor ga(inst.batch.p.shape());
        pdf::kl_prob_loss_grad_p(inst.batch, inst.bins, inst.sigma, 1.0, ga);
        Problem prob;
        prob.inputs = {&inst.batch.p};
        prob.analytic = {ga};
        prob.eval = [&] { return pdf::kl_prob_loss(inst.batch, inst.bins, inst.sigma); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["pdf.expected_depth"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        PdfInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor cot = random_tensor({2, 6, 6}, rng);
        Tensor ga(inst.batch.p.shape());
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t k = 0; k < 8; ++k)
                for (std::size_t y = 0; y < 6; ++y)
                    for (std::size_t x = 0; x < 6; ++x)
                        ga(b, k, y, x) = cot(b, y, x) * inst.bins.centers[k];
        Problem prob;
        prob.inputs = {&inst.batch.p};
        prob.analytic = {ga};
        prob.eval = [&] { return dot(pdf::expected_depth(inst.batch.p, inst.bins), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["pdf.smooth_l1"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor x = random_tensor({8}, rng);
        double beta = 1.0;
        Tensor ga(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] = ops::smooth_l1_deriv(x[i], beta);
        Problem prob;
        prob.inputs = {&x};
        prob.analytic = {ga};
        prob.eval = [&] {
            double acc = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) acc += ops::smooth_l1(x[i], beta);
            return acc;
        };
        return max_rel_error(prob, cfg, rng);
    };
    reg["pdf.foundation_loss"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        PdfInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor dhat = pdf::expected_depth(inst.batch.p, inst.bins);
        Tensor gdhat({2, 6, 6});
        pdf::foundation_loss_grad_dhat(inst.batch, dhat, inst.beta, 0.01, 0.03, 1.0, gdhat);
        Tensor ga(inst.batch.p.shape());
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t k = 0; k < 8; ++k)
                for (std::size_t y = 0; y < 6; ++y)
                    for (std::size_t x = 0; x < 6; ++x)
                        ga(b, k, y, x) = gdhat(b, y, x) * inst.bins.centers[k];
        Problem prob;
        prob.inputs = {&inst.batch.p};
        prob.analytic = {ga};
        prob.eval = [&] {
            return pdf::foundation_loss(inst.batch, inst.bins, inst.beta, 0.01, 0.03).l_found;
        };
        return max_rel_error(prob, cfg, rng);
    };
    reg["pdf.pair_rank_loss"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor dhat = random_tensor({2}, rng, 5.0, 30.0);
        double gi = 10.0, gj = 20.0;
        double g = pdf::pair_rank_loss_grad_i(dhat(0), dhat(1), gi, gj);
        Problem prob;
        prob.inputs = {&dhat};
        prob.analytic = {Tensor::from_data({2}, {g, -g})};
        prob.eval = [&] { return pdf::pair_rank_loss(dhat(0), dhat(1), gi, gj); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["pdf.relative_loss"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        PdfInstance inst(seed);
        SplitMix64 rng(seed + 1);
        pdf::DepthLossWeights w{0.0, 0.0, 0.0, 1.0};
        Tensor ga = pdf::total_depth_loss_grad_p(inst.batch, inst.bins, inst.cfg, w, inst.sigma,
                                                 inst.beta, SplitMix64(inst.cfg.rng_seed));
        Problem prob;
        prob.inputs = {&inst.batch.p};
        prob.analytic = {ga};
        prob.eval = [&] {
            return pdf::relative_loss(inst.batch, inst.bins, inst.cfg,
                                      SplitMix64(inst.cfg.rng_seed))
                .l_relative;
        };
        return max_rel_error(prob, cfg, rng);
    };
    reg["pdf.total_depth_loss"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        PdfInstance inst(seed);
        SplitMix64 rng(seed + 1);
        pdf::DepthLossWeights w;  // defaults (0.1, 0.01, 0.03, 0.05)
        Tensor ga = pdf::total_depth_loss_grad_p(inst.batch, inst.bins, inst.cfg, w, inst.sigma,
                                                 inst.beta, SplitMix64(inst.cfg.rng_seed));
        Problem prob;
        prob.inputs = {&inst.batch.p};
        prob.analytic = {ga};
        prob.eval = [&] {
            return pdf::total_depth_loss(inst.batch, inst.bins, inst.cfg, w, inst.sigma,
                                         inst.beta, SplitMix64(inst.cfg.rng_seed))
                .l_depth;
        };
        return max_rel_error(prob, cfg, rng);
    };
}

inline void register_dgtf_targets(std::map<std::string, TargetFn>& reg) {
    reg["dgtf.predict_offsets"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        DgtfInstance inst(seed);
        SplitMix64 rng(seed + 1);
        auto off = dgtf::predict_offsets(inst.x, inst.h_prev, inst.params);
        Tensor cot_dp = random_tensor(off.delta_p.shape(), rng);
        Tensor cot_m = random_tensor(off.m.shape(), rng);
        auto g = dgtf::predict_offsets_backward(inst.x, inst.h_prev, inst.params, off, cot_dp,
                                                cot_m);
        Problem prob;
        prob.inputs = {&inst.x, &inst.h_prev, &inst.params.conv_offset_w,
                       &inst.params.conv_offset_b};
        prob.analytic = {g.x, g.h_prev, g.conv_offset_w, g.conv_offset_b};
        prob.eval = [&] {
            auto o = dgtf::predict_offsets(inst.x, inst.h_prev, inst.params);
            return dot(o.delta_p, cot_dp) + dot(o.m, cot_m);
        };
        return max_rel_error(prob, cfg, rng);
    };
    reg["dgtf.dcn_align"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        DgtfInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor delta_p = random_tensor({1, 18, 6, 6}, rng, -1.5, 1.5);
        Tensor m = random_tensor({1, 9, 6, 6}, rng, 0.1, 0.9);
        Tensor cot = random_tensor({1, 2, 6, 6}, rng);
        auto g = dgtf::dcn_align_backward(inst.h_prev, delta_p, m, inst.params, cot);
        Problem prob;
        prob.inputs = {&inst.h_prev, &delta_p, &m, &inst.params.dcn_w, &inst.params.dcn_b};
        prob.analytic = {g.h_prev, g.delta_p, g.m, g.dcn_w, g.dcn_b};
        prob.eval = [&] { return dot(dgtf::dcn_align(inst.h_prev, delta_p, m, inst.params), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["dgtf.gated_update"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        DgtfInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor h_aligned = random_tensor({1, 2, 6, 6}, rng);
        Tensor cot = random_tensor({1, 2, 6, 6}, rng);
        auto cache = dgtf::gated_update(inst.x, h_aligned, inst.params);
        auto g = dgtf::gated_update_backward(inst.x, h_aligned, inst.params, cache, cot);
        Problem prob;
        prob.inputs = {&inst.x,          &h_aligned,           &inst.params.conv_r_w,
                       &inst.params.conv_r_b, &inst.params.conv_z_w, &inst.params.conv_z_b,
                       &inst.params.conv_h_w, &inst.params.conv_h_b};
        prob.analytic = {g.x,        g.h_aligned, g.conv_r_w, g.conv_r_b,
                         g.conv_z_w, g.conv_z_b,  g.conv_h_w, g.conv_h_b};
        prob.eval = [&] {
            return dot(dgtf::gated_update(inst.x, h_aligned, inst.params).h_t, cot);
        };
        return max_rel_error(prob, cfg, rng);
    };
    reg["dgtf.dgtf_step"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        DgtfInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor cot = random_tensor({1, 2, 6, 6}, rng);
        dgtf::DgtfState state{inst.h_prev, true};
        auto res = dgtf::dgtf_step(inst.x, state, inst.params);
        auto g = dgtf::dgtf_step_backward(inst.x, inst.params, res.cache, cot);
        Problem prob;
        prob.inputs = {&inst.x, &state.h};
        prob.analytic = {g.x, g.h_prev};
        auto names = dgtf::DgtfParams::tensor_names();
        auto param_ptrs = inst.params.all_tensors();
        auto grad_ptrs = g.params.all_tensors();
        for (std::size_t i = 0; i < param_ptrs.size(); ++i) {
            prob.inputs.push_back(param_ptrs[i]);
            prob.analytic.push_back(*grad_ptrs[i]);
        }
        prob.eval = [&] { return dot(dgtf::dgtf_step(inst.x, state, inst.params).f_rc, cot); };
        return max_rel_error(prob, cfg, rng);
    };
}

inline void register_igdr_targets(std::map<std::string, TargetFn>& reg) {
    reg["igdr.pool_project"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        IgdrInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor cot = random_tensor({1, 3, 4}, rng);
        Tensor pooled = ops::global_avg_pool(inst.in.e_features);
        Tensor gpooled(pooled.shape());
        Tensor gw(inst.params.proj_w.shape()), gb(inst.params.proj_b.shape());
        for (std::size_t n = 0; n < 3; ++n)
            for (std::size_t co = 0; co < 4; ++co) {
                double ge = cot(0, n, co);
                gb(co) += ge;
                for (std::size_t ci = 0; ci < 4; ++ci) {
                    gw(co, ci) += ge * pooled(n, ci);
                    gpooled(n, ci) += ge * inst.params.proj_w(co, ci);
                }
            }
        Problem prob;
        prob.inputs = {&inst.in.e_features, &inst.params.proj_w, &inst.params.proj_b};
        prob.analytic = {ops::global_avg_pool_backward(inst.in.e_features.shape(), gpooled), gw,
                         gb};
        prob.eval = [&] {
            return dot(igdr::pool_project(inst.in.e_features, inst.params, 1), cot);
        };
        return max_rel_error(prob, cfg, rng);
    };
    reg["igdr.softmax_assign"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        IgdrInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor cot = random_tensor(inst.in.s_bev.shape(), rng);
        Tensor y = igdr::softmax_assign(inst.in.s_bev, inst.in.temperature);
        Problem prob;
        prob.inputs = {&inst.in.s_bev};
        prob.analytic = {ops::softmax_backward(y, 1, inst.in.temperature, cot)};
        prob.eval = [&] {
            return dot(igdr::softmax_assign(inst.in.s_bev, inst.in.temperature), cot);
        };
        return max_rel_error(prob, cfg, rng);
    };
    reg["igdr.broadcast_prototypes"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor a = random_tensor({1, 3, 5, 5}, rng);
        Tensor e = random_tensor({1, 3, 4}, rng);
        Tensor cot = random_tensor({1, 4, 5, 5}, rng);
        Tensor ga(a.shape()), ge(e.shape());
        for (std::size_t n = 0; n < 3; ++n)
            for (std::size_t y = 0; y < 5; ++y)
                for (std::size_t x = 0; x < 5; ++x)
                    for (std::size_t c = 0; c < 4; ++c) {
                        ga(0, n, y, x) += cot(0, c, y, x) * e(0, n, c);
                        ge(0, n, c) += cot(0, c, y, x) * a(0, n, y, x);
                    }
        Problem prob;
        prob.inputs = {&a, &e};
        prob.analytic = {ga, ge};
        prob.eval = [&] { return dot(igdr::broadcast_prototypes(a, e), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["igdr.gen_affine"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        IgdrInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor e_bev = random_tensor({1, 4, 5, 5}, rng);
        Tensor cot_g = random_tensor({1, 2, 5, 5}, rng);
        Tensor cot_b = random_tensor({1, 2, 5, 5}, rng);
        auto bg = ops::conv2d_backward(e_bev, inst.params.conv_gamma_w, 1, 1, cot_g);
        auto bb = ops::conv2d_backward(e_bev, inst.params.conv_beta_w, 1, 1, cot_b);
        Problem prob;
        prob.inputs = {&e_bev, &inst.params.conv_gamma_w, &inst.params.conv_gamma_b,
                       &inst.params.conv_beta_w, &inst.params.conv_beta_b};
        prob.analytic = {ops::add(bg.input, bb.input), bg.kernel, bg.bias, bb.kernel, bb.bias};
        prob.eval = [&] {
            auto a = igdr::gen_affine(e_bev, inst.params);
            return dot(a.gamma, cot_g) + dot(a.beta, cot_b);
        };
        return max_rel_error(prob, cfg, rng);
    };
    reg["igdr.calibrate"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor f = random_tensor({1, 2, 5, 5}, rng);
        Tensor gamma = random_tensor(f.shape(), rng);
        Tensor beta = random_tensor(f.shape(), rng);
        Tensor cot = random_tensor(f.shape(), rng);
        Tensor gf(f.shape()), gg(f.shape()), gb(f.shape());
        for (std::size_t i = 0; i < f.size(); ++i) {
            gf[i] = cot[i] * gamma[i];
            gg[i] = cot[i] * f[i];
            gb[i] = cot[i];
        }
        Problem prob;
        prob.inputs = {&f, &gamma, &beta};
        prob.analytic = {gf, gg, gb};
        prob.eval = [&] { return dot(igdr::calibrate(f, gamma, beta), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["igdr.foreground_gate"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        IgdrInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor cot = random_tensor({1, 1, 5, 5}, rng);
        Tensor g_out = igdr::foreground_gate(inst.in.s_bev, inst.params);
        Tensor ssum({1, std::size_t{1}, 5, 5});
        for (std::size_t n = 0; n < 3; ++n)
            for (std::size_t i = 0; i < 25; ++i) ssum[i] += inst.in.s_bev[n * 25 + i];
        Tensor gu(g_out.shape());
        for (std::size_t i = 0; i < gu.size(); ++i) gu[i] = cot[i] * g_out[i] * (1.0 - g_out[i]);
        auto bc = ops::conv2d_backward(ssum, inst.params.conv_gate_w, 1, 1, gu);
        Tensor gs(inst.in.s_bev.shape());
        for (std::size_t n = 0; n < 3; ++n)
            for (std::size_t i = 0; i < 25; ++i) gs[n * 25 + i] = bc.input[i];
        Problem prob;
        prob.inputs = {&inst.in.s_bev, &inst.params.conv_gate_w, &inst.params.conv_gate_b};
        prob.analytic = {gs, bc.kernel, bc.bias};
        prob.eval = [&] {
            return dot(igdr::foreground_gate(inst.in.s_bev, inst.params), cot);
        };
        return max_rel_error(prob, cfg, rng);
    };
    reg["igdr.gated_fuse"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        SplitMix64 rng(seed);
        Tensor f = random_tensor({1, 2, 5, 5}, rng);
        Tensor fc = random_tensor(f.shape(), rng);
        Tensor g = random_tensor({1, 1, 5, 5}, rng, 0.1, 0.9);
        Tensor cot = random_tensor(f.shape(), rng);
        Tensor gf(f.shape()), gfc(f.shape()), gg(g.shape());
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < 25; ++i) {
                double gv = g[i];
                double go = cot[c * 25 + i];
                gf[c * 25 + i] = go * (1.0 - gv);
                gfc[c * 25 + i] = go * gv;
                gg[i] += go * (fc[c * 25 + i] - f[c * 25 + i]);
            }
        Problem prob;
        prob.inputs = {&f, &fc, &g};
        prob.analytic = {gf, gfc, gg};
        prob.eval = [&] { return dot(igdr::gated_fuse(f, fc, g), cot); };
        return max_rel_error(prob, cfg, rng);
    };
    reg["igdr.igdr_forward"] = [](const FiniteDiffConfig& cfg, std::uint64_t seed) {
        IgdrInstance inst(seed);
        SplitMix64 rng(seed + 1);
        Tensor cot = random_tensor({1, 2, 5, 5}, rng);
        auto res = igdr::igdr_forward(inst.in, inst.params);
        auto g = igdr::igdr_backward(inst.in, inst.params, res, cot);
        Problem prob;
        prob.inputs = {&inst.in.f_rc, &inst.in.e_features, &inst.in.s_bev};
        prob.analytic = {g.f_rc, g.e_features, g.s_bev};
        auto param_ptrs = inst.params.all_tensors();
        auto grad_ptrs = g.params.all_tensors();
        for (std::size_t i = 0; i < param_ptrs.size(); ++i) {
            prob.inputs.push_back(param_ptrs[i]);
            prob.analytic.push_back(*grad_ptrs[i]);
        }
        prob.eval = [&] { return dot(igdr::igdr_forward(inst.in, inst.params).f_final, cot); };
        return max_rel_error(prob, cfg, rng);
    };
}

}  // namespace detail

inline const std::map<std::string, TargetFn>& targets() {
    static const std::map<std::string, TargetFn> reg = [] {
        std::map<std::string, TargetFn> r;
        detail::register_tensor_targets(r);
        detail::register_pdf_targets(r);
        detail::register_dgtf_targets(r);
        detail::register_igdr_targets(r);
        return r;
    }();
    return reg;
}

inline std::vector<std::string> target_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : targets()) names.push_back(k);
    return names;
}

// Runs one target, or every target if name is "all" or a suite prefix
// ("pdf", "dgtf", "igdr", "tensor").
inline CheckReport run(const std::string& target, const FiniteDiffConfig& cfg,
                       std::uint64_t seed) {
    CheckReport rep;
    rep.suite = "gradcheck";
    rep.seed = seed;
    const auto& reg = targets();
    std::vector<std::pair<std::string, TargetFn>> selected;
    if (target == "all") {
        for (const auto& kv : reg) selected.push_back(kv);
    } else if (reg.count(target)) {
        selected.push_back({target, reg.at(target)});
    } else {
        for (const auto& kv : reg) {
            if (kv.first.rfind(target + ".", 0) == 0) selected.push_back(kv);
        }
        if (selected.empty()) {
            std::string valid;
            for (const auto& n : target_names()) valid += "\n  " + n;
            throw std::invalid_argument("gradcheck: unknown target '" + target +
                                        "'; valid targets:" + valid);
        }
    }
    for (const auto& [name, fn] : selected) {
        auto t0 = std::chrono::steady_clock::now();
        double err = fn(cfg, seed);
        auto t1 = std::chrono::steady_clock::now();
        double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        rep.add(name, err < cfg.tol, err, cfg.tol, ms);
    }
    return rep;
}

}  // namespace bevkit::gradcheck
