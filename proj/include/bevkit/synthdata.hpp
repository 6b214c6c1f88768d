#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pdf.hpp"
#include "rng.hpp"
#include "tensor.hpp"

// Seed-deterministic scene and feature generators backing all verification.
namespace bevkit::synth {

struct Region {
    enum class Kind { Rect, Ellipse };
    Kind kind = Kind::Rect;
    // half-open bounding box [y0,y1) x [x0,x1)
    std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;
    double depth = 10.0;

    bool contains(std::size_t y, std::size_t x) const {
        if (y < y0 || y >= y1 || x < x0 || x >= x1) return false;
        if (kind == Kind::Rect) return true;
        double cy = 0.5 * (static_cast<double>(y0) + static_cast<double>(y1) - 1.0);
        double cx = 0.5 * (static_cast<double>(x0) + static_cast<double>(x1) - 1.0);
        double ry = 0.5 * static_cast<double>(y1 - y0);
        double rx = 0.5 * static_cast<double>(x1 - x0);
        double dy = (static_cast<double>(y) - cy) / ry;
        double dx = (static_cast<double>(x) - cx) / rx;
        return dy * dy + dx * dx <= 1.0;
    }
};

struct SceneSpec {
    std::size_t width = 32, height = 32;
    std::vector<Region> background_planes;
    std::vector<Region> objects;
    double sparse_fraction = 0.1;
    double noise_sigma = 0.0;
    std::uint64_t seed = 42;

    void validate(const pdf::DepthBinSpec& bins) const {
        if (width < 1 || height < 1) throw std::invalid_argument("SceneSpec: empty frame");
        if (sparse_fraction < 0.0 || sparse_fraction > 1.0) {
            throw std::invalid_argument("SceneSpec: sparse_fraction must be in [0,1]");
        }
        if (background_planes.empty()) {
            throw std::invalid_argument("SceneSpec: need at least one background plane");
        }
        auto check = [&](const Region& r) {
            if (r.y1 > height || r.x1 > width || r.y0 >= r.y1 || r.x0 >= r.x1) {
                throw std::invalid_argument("SceneSpec: region outside frame or degenerate");
            }
            if (r.depth < bins.d_min || r.depth > bins.d_max) {
                throw std::invalid_argument("SceneSpec: region depth outside bin range");
            }
        };
        for (const auto& r : background_planes) check(r);
        for (const auto& r : objects) check(r);
    }
};

// Paints dense depth back-to-front (later regions win), draws the sparse
// "LiDAR" subset, and fills P with the gaussian target of the dense depth
// (a perfect prediction; callers overwrite P to test imperfect ones).
inline pdf::DepthSupervisionBatch make_depth_scene(const SceneSpec& spec,
                                                   const pdf::DepthBinSpec& bins,
                                                   double sigma) {
    spec.validate(bins);
    const std::size_t H = spec.height, W = spec.width;
    const std::size_t K = std::max<std::size_t>(spec.objects.size(), 1);
    pdf::DepthSupervisionBatch batch;
    batch.d_dense = Tensor({1, H, W}, spec.background_planes.front().depth);
    batch.mask_dense = Tensor({1, H, W}, 1.0);
    batch.d_sparse = Tensor({1, H, W});
    batch.mask_sparse = Tensor({1, H, W});
    batch.instance_masks = Tensor({1, K, H, W});

    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            for (const auto& r : spec.background_planes) {
                if (r.contains(y, x)) batch.d_dense(0, y, x) = r.depth;
            }
            for (std::size_t k = 0; k < spec.objects.size(); ++k) {
                if (spec.objects[k].contains(y, x)) {
                    batch.d_dense(0, y, x) = spec.objects[k].depth;  // later wins
                    batch.instance_masks(0, k, y, x) = 1.0;
                }
            }
        }

    SplitMix64 rng(spec.seed);
    // sparse subset: partial Fisher-Yates over all pixel indices
    std::size_t n_sparse = static_cast<std::size_t>(spec.sparse_fraction *
                                                    static_cast<double>(H * W));
    std::vector<std::size_t> idx(H * W);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n_sparse; ++i) {
        std::size_t j = i + rng.next_below(idx.size() - i);
        std::swap(idx[i], idx[j]);
        std::size_t y = idx[i] / W, x = idx[i] % W;
        batch.mask_sparse(0, y, x) = 1.0;
        double d = batch.d_dense(0, y, x) + spec.noise_sigma * rng.next_gaussian();
        batch.d_sparse(0, y, x) = std::clamp(d, bins.d_min, bins.d_max);
    }

    batch.p = Tensor({1, bins.num_bins, H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            auto g = pdf::gaussian_target(batch.d_dense(0, y, x), bins, sigma);
            for (std::size_t k = 0; k < bins.num_bins; ++k) batch.p(0, k, y, x) = g[k];
        }
    return batch;
}

// ---------------------------------------------------------------------------
// moving BEV sequences
// ---------------------------------------------------------------------------

struct MotionSpec {
    Tensor base_feature;  // [B,C,Hb,Wb]
    long dy = 0, dx = 0;  // integer pixel shift per frame, |.| <= 4
    std::size_t n_frames = 2;
    double noise_sigma = 0.0;
    std::uint64_t seed = 42;

    void validate() const {
        require_rank(base_feature, 4, "MotionSpec base_feature");
        if (std::abs(dy) > 4 || std::abs(dx) > 4) {
            throw std::invalid_argument("MotionSpec: |dy|,|dx| must be <= 4");
        }
        if (n_frames < 2) throw std::invalid_argument("MotionSpec: n_frames must be >= 2");
    }
};

struct MovingBev {
    std::vector<Tensor> frames;        // noisy
    std::vector<Tensor> clean_frames;  // shift only
    long dy = 0, dx = 0;               // true per-frame shift
};

inline MovingBev make_moving_bev(const MotionSpec& spec) {
    spec.validate();
    const std::size_t B = spec.base_feature.extent(0), C = spec.base_feature.extent(1);
    const long H = static_cast<long>(spec.base_feature.extent(2));
    const long W = static_cast<long>(spec.base_feature.extent(3));
    MovingBev out;
    out.dy = spec.dy;
    out.dx = spec.dx;
    SplitMix64 rng(spec.seed);
    for (std::size_t t = 0; t < spec.n_frames; ++t) {
        Tensor clean(spec.base_feature.shape());
        long oy = static_cast<long>(t) * spec.dy;
        long ox = static_cast<long>(t) * spec.dx;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c)
                for (long y = 0; y < H; ++y)
                    for (long x = 0; x < W; ++x) {
                        long sy = y - oy, sx = x - ox;
                        double v = 0.0;  // zero fill outside
                        if (sy >= 0 && sy < H && sx >= 0 && sx < W) {
                            v = spec.base_feature(b, c, static_cast<std::size_t>(sy),
                                                  static_cast<std::size_t>(sx));
                        }
                        clean(b, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = v;
                    }
        Tensor noisy = clean;
        if (spec.noise_sigma > 0.0) {
            for (std::size_t i = 0; i < noisy.size(); ++i) {
                noisy[i] += spec.noise_sigma * rng.next_gaussian();
            }
        }
        out.clean_frames.push_back(std::move(clean));
        out.frames.push_back(std::move(noisy));
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic instance proposals
// ---------------------------------------------------------------------------

struct Box {
    long y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
};

struct InstanceBev {
    Tensor s_bev;       // [1,N,Hb,Wb]
    Tensor e_features;  // [N,C_inst,H',W']
    std::vector<Box> jittered_boxes;
};

// Boxes are integer-jittered before rasterization so the priors are
// realistic rather than ground-truth-exact.
inline InstanceBev make_instance_bev(const std::vector<Box>& boxes,
                                     const std::vector<double>& scores, std::size_t hb,
                                     std::size_t wb, long jitter, std::uint64_t seed,
                                     std::size_t c_inst = 4, std::size_t roi = 5) {
    if (boxes.empty()) throw std::invalid_argument("make_instance_bev: need at least one box");
    if (boxes.size() != scores.size()) {
        throw std::invalid_argument("make_instance_bev: boxes/scores length mismatch");
    }
    const std::size_t N = boxes.size();
    SplitMix64 rng(seed);
    InstanceBev out;
    out.s_bev = Tensor({std::size_t{1}, N, hb, wb});
    out.e_features = Tensor({N, c_inst, roi, roi});
    for (std::size_t n = 0; n < N; ++n) {
        Box b = boxes[n];
        if (jitter > 0) {
            long jy = static_cast<long>(rng.next_below(2 * jitter + 1)) - jitter;
            long jx = static_cast<long>(rng.next_below(2 * jitter + 1)) - jitter;
            b.y0 += jy;
            b.y1 += jy;
            b.x0 += jx;
            b.x1 += jx;
        }
        out.jittered_boxes.push_back(b);
        for (long y = std::max(b.y0, 0L); y < std::min(b.y1, static_cast<long>(hb)); ++y)
            for (long x = std::max(b.x0, 0L); x < std::min(b.x1, static_cast<long>(wb)); ++x) {
                out.s_bev(std::size_t{0}, n, static_cast<std::size_t>(y),
                          static_cast<std::size_t>(x)) = scores[n];
            }
        // per-instance deterministic pattern so prototypes are distinguishable
        SplitMix64 feat_rng(seed ^ (0x9E3779B97F4A7C15ull * (n + 1)));
        for (std::size_t c = 0; c < c_inst; ++c)
            for (std::size_t y = 0; y < roi; ++y)
                for (std::size_t x = 0; x < roi; ++x) {
                    out.e_features(n, c, y, x) = feat_rng.next_gaussian();
                }
    }
    return out;
}

}  // namespace bevkit::synth
