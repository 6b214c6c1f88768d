#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dgtf.hpp"
#include "gradcheck.hpp"
#include "igdr.hpp"
#include "ops.hpp"
#include "pdf.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "synthdata.hpp"
#include "tensor.hpp"
#include "tensor_io.hpp"

// Randomized property suites; each function appends records to a CheckReport.
namespace bevkit::props {

namespace detail {

using gradcheck::detail::random_tensor;

// Where failing trials dump their reproducing tensors.
inline std::string& failure_dir() {
    static std::string dir = "props_failures";
    return dir;
}

inline void dump_failure(const std::string& check, std::size_t trial,
                         const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(failure_dir()) / (check + "_trial" + std::to_string(trial));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) return;  // dumping is best-effort
    for (const auto& [name, t] : tensors) {
        write_tensor((dir / (name + ".rten")).string(), *t, TensorDtype::f64);
    }
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

// direct 6-loop convolution, kept independent of ops::conv2d on purpose
inline Tensor conv2d_reference(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                               std::size_t pad_h, std::size_t pad_w) {
    const std::size_t B = input.extent(0), C = input.extent(1);
    const long H = static_cast<long>(input.extent(2)), W = static_cast<long>(input.extent(3));
    const std::size_t O = kernel.extent(0);
    const long kh = static_cast<long>(kernel.extent(2)), kw = static_cast<long>(kernel.extent(3));
    const long Ho = H + 2 * static_cast<long>(pad_h) - kh + 1;
    const long Wo = W + 2 * static_cast<long>(pad_w) - kw + 1;
    Tensor out({B, O, static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (long oy = 0; oy < Ho; ++oy)
                for (long ox = 0; ox < Wo; ++ox) {
                    double acc = bias(o);
                    for (std::size_t c = 0; c < C; ++c)
                        for (long ky = 0; ky < kh; ++ky)
                            for (long kx = 0; kx < kw; ++kx) {
                                long iy = oy + ky - static_cast<long>(pad_h);
                                long ix = ox + kx - static_cast<long>(pad_w);
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += input(b, c, static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix)) *
                                       kernel(o, c, static_cast<std::size_t>(ky),
                                              static_cast<std::size_t>(kx));
                            }
                    out(b, o, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)) = acc;
                }
    return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline synth::SceneSpec random_scene_spec(SplitMix64& rng, std::size_t hw = 16) {
    synth::SceneSpec spec;
    spec.width = hw;
    spec.height = hw;
    spec.seed = rng.next_u64();
    synth::Region bg;
    bg.y0 = 0;
    bg.x0 = 0;
    bg.y1 = hw;
    bg.x1 = hw;
    bg.depth = rng.uniform(20.0, 60.0);
    spec.background_planes.push_back(bg);
    std::size_t n_obj = 1 + rng.next_below(2);
    for (std::size_t k = 0; k < n_obj; ++k) {
        synth::Region obj;
        obj.kind = rng.next_double() < 0.5 ? synth::Region::Kind::Rect
                                           : synth::Region::Kind::Ellipse;
        obj.y0 = 2 + rng.next_below(hw / 2);
        obj.x0 = 2 + rng.next_below(hw / 2);
        obj.y1 = std::min(obj.y0 + 3 + rng.next_below(4), hw - 1);
        obj.x1 = std::min(obj.x0 + 3 + rng.next_below(4), hw - 1);
        obj.depth = rng.uniform(3.0, 12.0);
        spec.objects.push_back(obj);
    }
    spec.sparse_fraction = 0.3;
    spec.noise_sigma = 0.05;
    return spec;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// tensor suite
// ---------------------------------------------------------------------------

inline void run_tensor_props(CheckReport& rep, std::uint64_t seed, std::size_t trials) {
    SplitMix64 rng(seed);
    using namespace detail;

    {
        Timer tm;
        double worst = 0.0;
        bool ok = true;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t B = 1 + rng.next_below(2), C = 1 + rng.next_below(3);
            std::size_t H = 2 + rng.next_below(7), W = 2 + rng.next_below(7);
            std::size_t O = 1 + rng.next_below(3);
            std::size_t kh = 1 + 2 * rng.next_below(2), kw = 1 + 2 * rng.next_below(2);
            Tensor input = random_tensor({B, C, H, W}, rng);
            Tensor kernel = random_tensor({O, C, kh, kw}, rng);
            Tensor bias = random_tensor({O}, rng);
            std::size_t ph = kh / 2, pw = kw / 2;
            Tensor got = ops::conv2d(input, kernel, bias, ph, pw);
            Tensor want = conv2d_reference(input, kernel, bias, ph, pw);
            double d = max_abs_diff(got, want);
            worst = std::max(worst, d);
            if (d >= 1e-10) {
                ok = false;
                dump_failure("conv2d_vs_reference", t, {{"input", &input}, {"kernel", &kernel}});
                break;
            }
        }
        rep.add("tensor.conv2d_vs_loop_reference", ok, worst, 1e-10, tm.ms());
    }

    {
        Timer tm;
        double worst = 0.0;
        bool ok = true;
        for (std::size_t t = 0; t < trials; ++t) {
            Tensor x = random_tensor({2, 1 + rng.next_below(6), 3, 3}, rng);
            double tau = rng.uniform(0.2, 3.0);
            Tensor y = ops::softmax(x, 1, tau);
            Tensor shifted = ops::add_scalar(x, rng.uniform(-5.0, 5.0));
            Tensor y2 = ops::softmax(shifted, 1, tau);
            for (std::size_t b = 0; b < 2 && ok; ++b)
                for (std::size_t yy = 0; yy < 3 && ok; ++yy)
                    for (std::size_t xx = 0; xx < 3 && ok; ++xx) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < x.extent(1); ++c) {
                            double v = y(b, c, yy, xx);
                            if (v < 0.0) ok = false;
                            s += v;
                        }
                        worst = std::max(worst, std::fabs(s - 1.0));
                    }
            worst = std::max(worst, max_abs_diff(y, y2));
            if (worst >= 1e-12) ok = false;
            if (!ok) {
                dump_failure("softmax_normalization", t, {{"input", &x}});
                break;
            }
        }
        rep.add("tensor.softmax_normalized_and_shift_invariant", ok, worst, 1e-12, tm.ms());
    }

    {
        Timer tm;
        double worst = 0.0;
        bool ok = true;
        for (std::size_t t = 0; t < trials; ++t) {
            Tensor f = random_tensor({2, 6, 6}, rng);
            // exact at grid points
            std::size_t gy = rng.next_below(6), gx = rng.next_below(6);
            Tensor at = ops::bilinear_sample(f, static_cast<double>(gy), static_cast<double>(gx));
            for (std::size_t c = 0; c < 2; ++c) {
                worst = std::max(worst, std::fabs(at(c) - f(c, gy, gx)));
            }
            // Lipschitz continuity under tiny coordinate perturbations
            double y0 = rng.uniform(0.0, 5.0), x0 = rng.uniform(0.0, 5.0);
            double eps = 1e-6;
            Tensor a = ops::bilinear_sample(f, y0, x0);
            Tensor b = ops::bilinear_sample(f, y0 + eps, x0 - eps);
            double fmax = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) fmax = std::max(fmax, std::fabs(f[i]));
            for (std::size_t c = 0; c < 2; ++c) {
                if (std::fabs(a(c) - b(c)) > 4.0 * (2.0 * eps) * fmax) ok = false;
            }
            if (worst >= 1e-12) ok = false;
            if (!ok) {
                dump_failure("bilinear_continuity", t, {{"feature", &f}});
                break;
            }
        }
        rep.add("tensor.bilinear_exact_at_grid_and_continuous", ok, worst, 1e-12, tm.ms());
    }

    {
        // analytic vs finite-difference gradients for every tensor_core op
        gradcheck::FiniteDiffConfig cfg;
        for (const auto& [name, fn] : gradcheck::targets()) {
            if (name.rfind("tensor.", 0) != 0) continue;
            Timer tm;
            double err = fn(cfg, seed);
            rep.add("tensor.gradcheck." + name.substr(7), err < cfg.tol, err, cfg.tol, tm.ms());
        }
    }
}

// ---------------------------------------------------------------------------
// pdf suite
// ---------------------------------------------------------------------------

inline void run_pdf_props(CheckReport& rep, std::uint64_t seed, std::size_t trials) {
    SplitMix64 rng(seed);
    using namespace detail;
    pdf::DepthBinSpec bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 16);
    double sigma = bins.width();

    {
        Timer tm;
        double worst_neg = 0.0, worst_match = 0.0;
        bool ok = true;
        for (std::size_t t = 0; t < trials; ++t) {
            auto spec = random_scene_spec(rng);
            auto batch = synth::make_depth_scene(spec, bins, sigma);
            // P as generated is the gaussian target of d_dense but kl averages
            // over the sparse mask where d_sparse is noisy, so perturb first:
            // matching case uses d_sparse targets directly.
            pdf::DepthSupervisionBatch matching = batch;
            for (std::size_t y = 0; y < batch.height(); ++y)
                for (std::size_t x = 0; x < batch.width(); ++x) {
                    if (matching.mask_sparse(0, y, x) == 0.0) continue;
                    auto g = pdf::gaussian_target(matching.d_sparse(0, y, x), bins, sigma);
                    for (std::size_t k = 0; k < bins.num_bins; ++k) {
                        matching.p(0, k, y, x) = g[k];
                    }
                }
            worst_match = std::max(worst_match, std::fabs(pdf::kl_prob_loss(matching, bins, sigma)));
            // random mismatched P must be strictly nonnegative
            pdf::DepthSupervisionBatch noisy = batch;
            for (std::size_t y = 0; y < batch.height(); ++y)
                for (std::size_t x = 0; x < batch.width(); ++x) {
                    double sum = 0.0;
                    for (std::size_t k = 0; k < bins.num_bins; ++k) {
                        double v = 0.05 + rng.next_double();
                        noisy.p(0, k, y, x) = v;
                        sum += v;
                    }
                    for (std::size_t k = 0; k < bins.num_bins; ++k) noisy.p(0, k, y, x) /= sum;
                }
            double kl = pdf::kl_prob_loss(noisy, bins, sigma);
            worst_neg = std::min(worst_neg, kl);
            if (kl < -1e-9 || worst_match > 1e-9) {
                ok = false;
                dump_failure("kl_nonneg", t, {{"p", &noisy.p}, {"d_sparse", &noisy.d_sparse}});
                break;
            }
        }
        rep.add("pdf.kl_nonnegative_zero_iff_match", ok, std::max(-worst_neg, worst_match), 1e-9,
                tm.ms());
    }

    {
        Timer tm;
        double worst = 0.0;
        bool ok = true;
        for (std::size_t t = 0; t < trials; ++t) {
            double di = rng.uniform(1.0, 70.0), dj = rng.uniform(1.0, 70.0);
            double gi = rng.uniform(1.0, 70.0), gj = rng.uniform(1.0, 70.0);
            double a = pdf::pair_rank_loss(di, dj, gi, gj);
            double b = pdf::pair_rank_loss(dj, di, gj, gi);  // i <-> j swap
            worst = std::max(worst, std::fabs(a - b));
            // monotonicity: pushing the prediction toward the correct ordering
            // strictly lowers the loss
            if (gi != gj) {
                double s = gi > gj ? 1.0 : -1.0;
                double better = pdf::pair_rank_loss(di + s * 0.5, dj, gi, gj);
                if (better >= a) ok = false;
            }
            if (worst >= 1e-12) ok = false;
            if (!ok) break;
        }
        rep.add("pdf.pair_rank_symmetric_and_monotone", ok, worst, 1e-12, tm.ms());
    }

    {
        Timer tm;
        bool ok = true;
        std::size_t bad = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t H = 9, W = 9;
            Tensor mask({H, W});
            std::size_t n_on = 1 + rng.next_below(10);
            for (std::size_t i = 0; i < n_on; ++i) mask[rng.next_below(H * W)] = 1.0;
            std::size_t r = 1 + rng.next_below(2);
            Tensor ring = pdf::dilated_ring(mask, r);
            for (std::size_t y = 0; y < H && ok; ++y)
                for (std::size_t x = 0; x < W && ok; ++x) {
                    if (ring(y, x) == 0.0) continue;
                    if (mask(y, x) != 0.0) ok = false;  // must be disjoint
                    // must be within Chebyshev distance r of the mask
                    bool near = false;
                    for (std::size_t yy = 0; yy < H && !near; ++yy)
                        for (std::size_t xx = 0; xx < W && !near; ++xx) {
                            if (mask(yy, xx) == 0.0) continue;
                            std::size_t dy = y > yy ? y - yy : yy - y;
                            std::size_t dx = x > xx ? x - xx : xx - x;
                            if (std::max(dy, dx) <= r) near = true;
                        }
                    if (!near) ok = false;
                }
            if (!ok) {
                ++bad;
                dump_failure("dilated_ring", t, {{"mask", &mask}});
                break;
            }
        }
        rep.add("pdf.dilated_ring_disjoint_within_radius", ok, static_cast<double>(bad), 0.0,
                tm.ms());
    }

    {
        // sampler contracts: ring/interior membership, threshold rule, global
        // pairs avoid every instance, flat scenes yield nothing
        Timer tm;
        bool ok = true;
        std::size_t violations = 0;
        pdf::RankingConfig cfg;
        cfg.n_edge_pairs = 16;
        cfg.n_global_pairs = 16;
        cfg.dilation_radius = 2;
        for (std::size_t t = 0; t < trials && ok; ++t) {
            auto spec = random_scene_spec(rng);
            auto batch = synth::make_depth_scene(spec, bins, sigma);
            SplitMix64 srng(seed + t);
            auto edge = pdf::sample_edge_pairs(batch, cfg, srng);
            SplitMix64 srng2(seed + t);
            auto edge_again = pdf::sample_edge_pairs(batch, cfg, srng2);
            if (edge.size() != edge_again.size()) ++violations;  // determinism
            const std::size_t K = batch.num_instances();
            for (const auto& pr : edge) {
                bool i_in_ring = false, j_in_interior = false;
                for (std::size_t k = 0; k < K; ++k) {
                    Tensor m = Tensor({batch.height(), batch.width()});
                    for (std::size_t y = 0; y < batch.height(); ++y)
                        for (std::size_t x = 0; x < batch.width(); ++x)
                            m(y, x) = batch.instance_masks(pr.b, k, y, x);
                    Tensor ring = pdf::dilated_ring(m, cfg.dilation_radius);
                    if (ring(pr.yi, pr.xi) != 0.0 && m(pr.yj, pr.xj) != 0.0) {
                        i_in_ring = true;
                        j_in_interior = true;
                    }
                }
                double di = batch.d_dense(pr.b, pr.yi, pr.xi);
                double dj = batch.d_dense(pr.b, pr.yj, pr.xj);
                if (!i_in_ring || !j_in_interior) ++violations;
                if (!pdf::dynamic_threshold(di, dj, cfg).include) ++violations;
            }
            SplitMix64 grng(seed + t + 1);
            auto global = pdf::sample_global_pairs(batch, cfg, grng);
            for (const auto& pr : global) {
                for (std::size_t k = 0; k < K; ++k) {
                    if (batch.instance_masks(pr.b, k, pr.yi, pr.xi) != 0.0) ++violations;
                    if (batch.instance_masks(pr.b, k, pr.yj, pr.xj) != 0.0) ++violations;
                }
                double di = batch.d_dense(pr.b, pr.yi, pr.xi);
                double dj = batch.d_dense(pr.b, pr.yj, pr.xj);
                if (!pdf::dynamic_threshold(di, dj, cfg).include) ++violations;
            }
            if (violations) ok = false;
        }
        {
            // flat scene: constant depth means every pair is excluded
            synth::SceneSpec flat;
            flat.width = 16;
            flat.height = 16;
            synth::Region bg;
            bg.y1 = 16;
            bg.x1 = 16;
            bg.depth = 10.0;
            flat.background_planes.push_back(bg);
            synth::Region obj;
            obj.y0 = 4;
            obj.x0 = 4;
            obj.y1 = 8;
            obj.x1 = 8;
            obj.depth = 10.0;
            flat.objects.push_back(obj);
            flat.noise_sigma = 0.0;
            auto batch = synth::make_depth_scene(flat, bins, sigma);
            SplitMix64 frng(seed);
            if (!pdf::sample_edge_pairs(batch, cfg, frng).empty()) ++violations, ok = false;
            if (!pdf::sample_global_pairs(batch, cfg, frng).empty()) ++violations, ok = false;
        }
        rep.add("pdf.sampler_contracts", ok, static_cast<double>(violations), 0.0, tm.ms());
    }

    {
        // synthetic generator statistics: dense finite, sparse noise bounded
        Timer tm;
        bool ok = true;
        std::size_t checked = 0, outliers = 0;
        SplitMix64 grng(seed + 7);
        for (std::size_t t = 0; t < std::max<std::size_t>(trials / 4, 8); ++t) {
            auto spec = random_scene_spec(grng, 24);
            spec.noise_sigma = 0.1;
            spec.sparse_fraction = 0.5;
            auto batch = synth::make_depth_scene(spec, bins, sigma);
            if (!batch.d_dense.all_finite()) ok = false;
            for (std::size_t y = 0; y < batch.height(); ++y)
                for (std::size_t x = 0; x < batch.width(); ++x) {
                    if (batch.mask_sparse(0, y, x) == 0.0) continue;
                    ++checked;
                    double dev = std::fabs(batch.d_sparse(0, y, x) - batch.d_dense(0, y, x));
                    if (dev > 6.0 * spec.noise_sigma) ++outliers;
                }
            // bit-determinism under the same seed
            auto again = synth::make_depth_scene(spec, bins, sigma);
            if (max_abs_diff(batch.d_sparse, again.d_sparse) != 0.0) ok = false;
        }
        if (checked < 10000 || outliers > 0) ok = ok && (outliers == 0);
        rep.add("pdf.scene_generator_noise_and_determinism", ok && outliers == 0,
                static_cast<double>(outliers), 0.0, tm.ms());
    }

    {
        gradcheck::FiniteDiffConfig cfg;
        Timer tm;
        double err = gradcheck::targets().at("pdf.total_depth_loss")(cfg, seed);
        rep.add("pdf.gradcheck.total_depth_loss", err < cfg.tol, err, cfg.tol, tm.ms());
    }
}

// ---------------------------------------------------------------------------
// dgtf suite
// ---------------------------------------------------------------------------

inline void run_dgtf_props(CheckReport& rep, std::uint64_t seed, std::size_t trials) {
    SplitMix64 rng(seed);
    using namespace detail;

    {
        Timer tm;
        double worst = 0.0;
        bool ok = true;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t C = 1 + rng.next_below(4);
            std::size_t H = 3 + rng.next_below(8), W = 3 + rng.next_below(8);
            dgtf::DgtfParams p = dgtf::DgtfParams::random(C, 3, rng);
            Tensor h = random_tensor({1, C, H, W}, rng);
            Tensor dp({1, 18, H, W});
            Tensor m({1, 9, H, W}, 1.0);
            Tensor got = dgtf::dcn_align(h, dp, m, p);
            Tensor want = ops::conv2d(h, p.dcn_w, p.dcn_b, 1, 1);
            double d = max_abs_diff(got, want);
            worst = std::max(worst, d);
            if (d >= 1e-10) {
                ok = false;
                dump_failure("dcn_degenerate", t, {{"h_prev", &h}, {"dcn_w", &p.dcn_w}});
                break;
            }
        }
        rep.add("dgtf.degenerate_dcn_equals_conv2d", ok, worst, 1e-10, tm.ms());
    }

    {
        Timer tm;
        bool ok = true;
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t C = 1 + rng.next_below(3);
            dgtf::DgtfParams p = dgtf::DgtfParams::random(C, 3, rng);
            Tensor x = random_tensor({1, C, 5, 5}, rng);
            Tensor ha = random_tensor({1, C, 5, 5}, rng);
            auto cache = dgtf::gated_update(x, ha, p);
            for (std::size_t i = 0; i < cache.h_t.size(); ++i) {
                if (cache.r[i] <= 0.0 || cache.r[i] >= 1.0) ok = false;
                if (cache.z[i] <= 0.0 || cache.z[i] >= 1.0) ok = false;
                if (cache.h_cand[i] <= -1.0 || cache.h_cand[i] >= 1.0) ok = false;
                double lo = std::min(x[i], cache.h_cand[i]);
                double hi = std::max(x[i], cache.h_cand[i]);
                double slack = std::max(lo - cache.h_t[i], cache.h_t[i] - hi);
                worst = std::max(worst, slack);
                if (slack > 1e-12) ok = false;
            }
            if (!ok) {
                dump_failure("gate_ranges", t, {{"x", &x}, {"h_aligned", &ha}});
                break;
            }
        }
        rep.add("dgtf.gate_ranges_and_blend_convexity", ok, worst, 1e-12, tm.ms());
    }

    {
        // oracle shift compensation on interior pixels
        Timer tm;
        double worst = 0.0;
        bool ok = true;
        for (long dy = -2; dy <= 2 && ok; ++dy)
            for (long dx = -2; dx <= 2 && ok; ++dx) {
                std::size_t C = 2, H = 12, W = 12, k = 3;
                dgtf::DgtfParams p = dgtf::DgtfParams::random(C, k, rng);
                Tensor base = random_tensor({1, C, H, W}, rng);
                synth::MotionSpec ms;
                ms.base_feature = base;
                ms.dy = dy;
                ms.dx = dx;
                ms.n_frames = 2;
                auto seq = synth::make_moving_bev(ms);
                const Tensor& shifted = seq.clean_frames[1];
                Tensor dp({1, 2 * k * k, H, W});
                for (std::size_t q = 0; q < k * k; ++q)
                    for (std::size_t i = 0; i < H * W; ++i) {
                        dp[(2 * q) * H * W + i] = static_cast<double>(-dy);
                        dp[(2 * q + 1) * H * W + i] = static_cast<double>(-dx);
                    }
                Tensor m({1, k * k, H, W}, 1.0);
                Tensor zero_dp({1, 2 * k * k, H, W});
                // negated-shift offsets align the base frame forward onto the
                // shifted frame
                Tensor aligned = dgtf::dcn_align(base, dp, m, p);
                Tensor ref = dgtf::dcn_align(shifted, zero_dp, m, p);
                long band = static_cast<long>(k) +
                            std::max(std::labs(dy), std::labs(dx));
                for (long y = band; y < static_cast<long>(H) - band; ++y)
                    for (long x = band; x < static_cast<long>(W) - band; ++x)
                        for (std::size_t c = 0; c < C; ++c) {
                            double d = std::fabs(
                                aligned(0, c, static_cast<std::size_t>(y),
                                        static_cast<std::size_t>(x)) -
                                ref(0, c, static_cast<std::size_t>(y),
                                    static_cast<std::size_t>(x)));
                            worst = std::max(worst, d);
                        }
                if (worst >= 1e-10) ok = false;
            }
        rep.add("dgtf.oracle_shift_compensation_interior", ok, worst, 1e-10, tm.ms());
    }

    {
        // gap=2 equals two independent gap=1 streams on the even/odd frames
        Timer tm;
        SplitMix64 srng(seed + 3);
        std::size_t C = 2;
        dgtf::DgtfParams p = dgtf::DgtfParams::random(C, 3, srng);
        std::vector<Tensor> frames;
        for (std::size_t t = 0; t < 4; ++t) frames.push_back(random_tensor({1, C, 6, 6}, srng));
        auto out = dgtf::run_sequence(frames, 2, p);
        auto even = dgtf::run_sequence({frames[0], frames[2]}, 1, p);
        auto odd = dgtf::run_sequence({frames[1], frames[3]}, 1, p);
        double d = std::max({max_abs_diff(out[0], even[0]), max_abs_diff(out[2], even[1]),
                             max_abs_diff(out[1], odd[0]), max_abs_diff(out[3], odd[1])});
        rep.add("dgtf.gap2_equals_interleaved_streams", d == 0.0, d, 0.0, tm.ms());
    }

    {
        gradcheck::FiniteDiffConfig cfg;
        Timer tm;
        double err = gradcheck::targets().at("dgtf.dgtf_step")(cfg, seed);
        rep.add("dgtf.gradcheck.dgtf_step", err < cfg.tol, err, cfg.tol, tm.ms());
    }
}

// ---------------------------------------------------------------------------
// igdr suite
// ---------------------------------------------------------------------------

inline void run_igdr_props(CheckReport& rep, std::uint64_t seed, std::size_t trials) {
    SplitMix64 rng(seed);
    using namespace detail;

    {
        Timer tm;
        double worst = 0.0;
        bool ok = true;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t N = 1 + rng.next_below(4);
            Tensor s = random_tensor({1, N, 4, 4}, rng, 0.0, 3.0);
            double tau = rng.uniform(0.2, 2.0);
            Tensor a = igdr::softmax_assign(s, tau);
            Tensor shifted = ops::add_scalar(s, rng.uniform(-2.0, 2.0));
            Tensor a2 = igdr::softmax_assign(shifted, tau);
            for (std::size_t y = 0; y < 4; ++y)
                for (std::size_t x = 0; x < 4; ++x) {
                    double sum = 0.0;
                    for (std::size_t n = 0; n < N; ++n) sum += a(0, n, y, x);
                    worst = std::max(worst, std::fabs(sum - 1.0));
                }
            worst = std::max(worst, max_abs_diff(a, a2));
            if (worst >= 1e-12) {
                ok = false;
                dump_failure("a_prob_normalization", t, {{"s_bev", &s}});
                break;
            }
        }
        rep.add("igdr.a_prob_normalized_and_shift_invariant", ok, worst, 1e-12, tm.ms());
    }

    {
        Timer tm;
        double worst = 0.0;
        bool ok = true;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t N = 1 + rng.next_below(3), C = 1 + rng.next_below(3);
            igdr::IgdrInputs in;
            in.f_rc = random_tensor({1, C, 5, 5}, rng);
            in.e_features = random_tensor({N, 4, 3, 3}, rng);
            in.s_bev = random_tensor({1, N, 5, 5}, rng, 0.0, 2.0);
            igdr::IgdrParams p = igdr::IgdrParams::random(C, 4, rng);
            auto res = igdr::igdr_forward(in, p);
            // convexity of the gated blend
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < 25; ++i) {
                    double f = in.f_rc[c * 25 + i];
                    double fc = res.f_calibrated[c * 25 + i];
                    double ff = res.f_final[c * 25 + i];
                    double slack = std::max(std::min(f, fc) - ff, ff - std::max(f, fc));
                    worst = std::max(worst, slack);
                    double g = res.g_bg[i];
                    if (g <= 0.0 || g >= 1.0) ok = false;
                }
            if (worst > 1e-12) ok = false;
            if (!ok) {
                dump_failure("igdr_convexity", t, {{"f_rc", &in.f_rc}, {"s_bev", &in.s_bev}});
                break;
            }
        }
        rep.add("igdr.gate_range_and_fuse_convexity", ok, worst, 1e-12, tm.ms());
    }

    {
        Timer tm;
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t N = 1 + rng.next_below(3), C = 1 + rng.next_below(3);
            igdr::IgdrInputs in;
            in.f_rc = random_tensor({1, C, 5, 5}, rng);
            in.e_features = random_tensor({N, 4, 3, 3}, rng);
            in.s_bev = random_tensor({1, N, 5, 5}, rng, 0.0, 2.0);
            igdr::IgdrParams p = igdr::IgdrParams::identity_init(C, 4);
            auto res = igdr::igdr_forward(in, p);
            worst = std::max(worst, max_abs_diff(res.f_final, in.f_rc));
        }
        rep.add("igdr.identity_at_init_exact", worst == 0.0, worst, 0.0, tm.ms());
    }

    {
        // the gate must depend on S_BEV only through its instance-axis sum
        Timer tm;
        double worst = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t N = 2 + rng.next_below(3);
            Tensor s = random_tensor({1, N, 4, 4}, rng, 0.0, 2.0);
            igdr::IgdrParams p = igdr::IgdrParams::random(2, 4, rng);
            Tensor redistributed = s;
            for (std::size_t y = 0; y < 4; ++y)
                for (std::size_t x = 0; x < 4; ++x) {
                    double sum = 0.0;
                    for (std::size_t n = 0; n < N; ++n) sum += s(0, n, y, x);
                    // put all mass on instance 0
                    redistributed(0, 0, y, x) = sum;
                    for (std::size_t n = 1; n < N; ++n) redistributed(0, n, y, x) = 0.0;
                }
            Tensor g1 = igdr::foreground_gate(s, p);
            Tensor g2 = igdr::foreground_gate(redistributed, p);
            worst = std::max(worst, max_abs_diff(g1, g2));
        }
        rep.add("igdr.gate_depends_only_on_score_sum", worst < 1e-12, worst, 1e-12, tm.ms());
    }

    {
        gradcheck::FiniteDiffConfig cfg;
        Timer tm;
        double err = gradcheck::targets().at("igdr.igdr_forward")(cfg, seed);
        rep.add("igdr.gradcheck.igdr_forward", err < cfg.tol, err, cfg.tol, tm.ms());
    }
}

inline CheckReport run_props(const std::string& suite, std::uint64_t seed, std::size_t trials) {
    CheckReport rep;
    rep.suite = "props." + suite;
    rep.seed = seed;
    rep.config["trials"] = trials;
    if (trials == 0) return rep;  // vacuous pass
    bool any = false;
    if (suite == "tensor" || suite == "all") run_tensor_props(rep, seed, trials), any = true;
    if (suite == "pdf" || suite == "all") run_pdf_props(rep, seed, trials), any = true;
    if (suite == "dgtf" || suite == "all") run_dgtf_props(rep, seed, trials), any = true;
    if (suite == "igdr" || suite == "all") run_igdr_props(rep, seed, trials), any = true;
    if (!any) {
        throw std::invalid_argument("props: unknown suite '" + suite +
                                    "'; expected tensor, pdf, dgtf, igdr, or all");
    }
    return rep;
}

}  // namespace bevkit::props
