#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ops.hpp"
#include "rng.hpp"
#include "tensor.hpp"

// Panoramic depth supervision: probabilistic (KL on binned distributions),
// metric (smooth-L1 on expected depth) and structural (pairwise ordinal
// ranking with dynamic tolerance).
namespace bevkit::pdf {

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

struct DepthBinSpec {
    double d_min = 1.0;
    double d_max = 70.0;
    std::size_t num_bins = 70;
    std::vector<double> centers;

    static DepthBinSpec uniform(double d_min, double d_max, std::size_t num_bins) {
        if (!(0.0 < d_min && d_min < d_max)) {
            throw std::invalid_argument("DepthBinSpec: need 0 < d_min < d_max");
        }
        if (num_bins < 2) throw std::invalid_argument("DepthBinSpec: need at least 2 bins");
        DepthBinSpec s;
        s.d_min = d_min;
        s.d_max = d_max;
        s.num_bins = num_bins;
        double w = (d_max - d_min) / static_cast<double>(num_bins);
        s.centers.resize(num_bins);
        for (std::size_t k = 0; k < num_bins; ++k) {
            s.centers[k] = d_min + (static_cast<double>(k) + 0.5) * w;
        }
        return s;
    }

    double width() const { return (d_max - d_min) / static_cast<double>(num_bins); }
};

struct DepthSupervisionBatch {
    Tensor p;               // [B,D,H,W] predicted per-pixel depth distribution
    Tensor d_sparse;        // [B,H,W] meters
    Tensor mask_sparse;     // [B,H,W] in {0,1}
    Tensor d_dense;         // [B,H,W] meters
    Tensor mask_dense;      // [B,H,W] in {0,1}
    Tensor instance_masks;  // [B,K,H,W] in {0,1}

    std::size_t batch_size() const { return p.extent(0); }
    std::size_t height() const { return p.extent(2); }
    std::size_t width() const { return p.extent(3); }
    std::size_t num_instances() const { return instance_masks.extent(1); }
};

struct RankingConfig {
    double tau_abs = 0.5;
    double tau_rel = 0.03;
    double w_edge = 0.6;
    double w_global = 0.4;
    std::size_t n_edge_pairs = 512;
    std::size_t n_global_pairs = 512;
    std::size_t dilation_radius = 2;
    std::uint64_t rng_seed = 42;

    void validate() const {
        if (tau_abs <= 0.0) throw std::invalid_argument("RankingConfig: tau_abs must be > 0");
        if (tau_rel < 0.0 || tau_rel >= 1.0) {
            throw std::invalid_argument("RankingConfig: tau_rel must be in [0,1)");
        }
        if (w_edge + w_global <= 0.0) {
            throw std::invalid_argument("RankingConfig: w_edge + w_global must be > 0");
        }
        if (dilation_radius < 1) {
            throw std::invalid_argument("RankingConfig: dilation_radius must be >= 1");
        }
    }
};

// lambda2 of the total loss is fixed to 1; the foundation term carries its
// own internal (lambda_abs, lambda_dense) weighting.
struct DepthLossWeights {
    double lambda1 = 0.1;
    double lambda_abs = 0.01;
    double lambda_dense = 0.03;
    double lambda3 = 0.05;

    void validate() const {
        if (lambda1 < 0 || lambda_abs < 0 || lambda_dense < 0 || lambda3 < 0) {
            throw std::invalid_argument("DepthLossWeights: weights must be >= 0");
        }
    }
};

// Ordered pixel pair inside one batch element; (yi,xi) is the first pixel.
struct PixelPair {
    std::size_t b, yi, xi, yj, xj;
};

struct DepthLossReport {
    double l_prob = 0.0;
    double l_abs = 0.0;
    double l_dense = 0.0;
    double l_found = 0.0;
    double l_edge = 0.0;
    double l_global = 0.0;
    double l_relative = 0.0;
    double l_depth = 0.0;
    std::size_t n_edge_pairs_used = 0;
    std::size_t n_global_pairs_used = 0;
    bool empty_sparse = false;
    bool empty_dense = false;
};

// ---------------------------------------------------------------------------
// probabilistic supervision
// ---------------------------------------------------------------------------

inline std::vector<double> gaussian_target(double d, const DepthBinSpec& bins, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_target: sigma must be > 0");
    if (d < bins.d_min || d > bins.d_max) {
        throw std::invalid_argument("gaussian_target: depth " + std::to_string(d) +
                                    " outside [" + std::to_string(bins.d_min) + ", " +
                                    std::to_string(bins.d_max) + "]");
    }
    std::vector<double> g(bins.num_bins);
    double sum = 0.0;
    for (std::size_t k = 0; k < bins.num_bins; ++k) {
        double z = (bins.centers[k] - d) / sigma;
        g[k] = std::max(std::exp(-0.5 * z * z), 1e-12);  // floor keeps KL finite
        sum += g[k];
    }
    for (double& v : g) v /= sum;
    return g;
}

inline double kl_prob_loss(const DepthSupervisionBatch& batch, const DepthBinSpec& bins,
                           double sigma, bool* empty_flag = nullptr) {
    const std::size_t B = batch.batch_size(), D = bins.num_bins;
    const std::size_t H = batch.height(), W = batch.width();
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                if (batch.mask_sparse(b, y, x) == 0.0) continue;
                auto g = gaussian_target(batch.d_sparse(b, y, x), bins, sigma);
                double kl = 0.0;
                for (std::size_t k = 0; k < D; ++k) {
                    double p = std::max(batch.p(b, k, y, x), 1e-12);
                    kl += g[k] * std::log(g[k] / p);
                }
                total += kl;
                ++count;
            }
    if (empty_flag) *empty_flag = (count == 0);
    return count ? total / static_cast<double>(count) : 0.0;
}

// d(kl_prob_loss)/dP, accumulated into grad_p with weight `scale`.
inline void kl_prob_loss_grad_p(const DepthSupervisionBatch& batch, const DepthBinSpec& bins,
                                double sigma, double scale, Tensor& grad_p) {
    const std::size_t B = batch.batch_size(), D = bins.num_bins;
    const std::size_t H = batch.height(), W = batch.width();
    std::size_t count = 0;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                if (batch.mask_sparse(b, y, x) != 0.0) ++count;
    if (count == 0) return;
    double inv = scale / static_cast<double>(count);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                if (batch.mask_sparse(b, y, x) == 0.0) continue;
                auto g = gaussian_target(batch.d_sparse(b, y, x), bins, sigma);
                for (std::size_t k = 0; k < D; ++k) {
                    double p = batch.p(b, k, y, x);
                    if (p > 1e-12) grad_p(b, k, y, x) += -inv * g[k] / p;
                }
            }
}

// ---------------------------------------------------------------------------
// expected depth and foundation supervision
// ---------------------------------------------------------------------------

inline Tensor expected_depth(const Tensor& p, const DepthBinSpec& bins) {
    require_rank(p, 4, "expected_depth p");
    if (p.extent(1) != bins.num_bins) {
        throw std::invalid_argument("expected_depth: bin axis " + std::to_string(p.extent(1)) +
                                    " does not match DepthBinSpec D=" +
                                    std::to_string(bins.num_bins));
    }
    const std::size_t B = p.extent(0), D = p.extent(1), H = p.extent(2), W = p.extent(3);
    Tensor out({B, H, W});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (std::size_t k = 0; k < D; ++k) acc += p(b, k, y, x) * bins.centers[k];
                out(b, y, x) = acc;
            }
    return out;
}

struct FoundationLoss {
    double l_found = 0.0;
    double l_abs = 0.0;
    double l_dense = 0.0;
    bool empty = false;
};

inline FoundationLoss foundation_loss(const DepthSupervisionBatch& batch,
                                      const DepthBinSpec& bins, double beta,
                                      double lambda_abs, double lambda_dense) {
    Tensor dhat = expected_depth(batch.p, bins);
    const std::size_t B = batch.batch_size(), H = batch.height(), W = batch.width();
    double abs_sum = 0.0, dense_sum = 0.0;
    std::size_t n_abs = 0, n_dense = 0;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                if (batch.mask_sparse(b, y, x) != 0.0) {
                    abs_sum += ops::smooth_l1(dhat(b, y, x) - batch.d_sparse(b, y, x), beta);
                    ++n_abs;
                }
                if (batch.mask_dense(b, y, x) != 0.0) {
                    dense_sum += ops::smooth_l1(dhat(b, y, x) - batch.d_dense(b, y, x), beta);
                    ++n_dense;
                }
            }
    FoundationLoss out;
    out.empty = (n_abs == 0 && n_dense == 0);
    out.l_abs = n_abs ? abs_sum / static_cast<double>(n_abs) : 0.0;
    out.l_dense = n_dense ? dense_sum / static_cast<double>(n_dense) : 0.0;
    out.l_found = lambda_abs * out.l_abs + lambda_dense * out.l_dense;
    return out;
}

// d(foundation_loss.l_found)/d(dhat) at each pixel, accumulated into
// grad_dhat [B,H,W] with weight `scale`.
inline void foundation_loss_grad_dhat(const DepthSupervisionBatch& batch,
                                      const Tensor& dhat, double beta, double lambda_abs,
                                      double lambda_dense, double scale, Tensor& grad_dhat) {
    const std::size_t B = batch.batch_size(), H = batch.height(), W = batch.width();
    std::size_t n_abs = 0, n_dense = 0;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                if (batch.mask_sparse(b, y, x) != 0.0) ++n_abs;
                if (batch.mask_dense(b, y, x) != 0.0) ++n_dense;
            }
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double g = 0.0;
                if (n_abs && batch.mask_sparse(b, y, x) != 0.0) {
                    g += lambda_abs *
                         ops::smooth_l1_deriv(dhat(b, y, x) - batch.d_sparse(b, y, x), beta) /
                         static_cast<double>(n_abs);
                }
                if (n_dense && batch.mask_dense(b, y, x) != 0.0) {
                    g += lambda_dense *
                         ops::smooth_l1_deriv(dhat(b, y, x) - batch.d_dense(b, y, x), beta) /
                         static_cast<double>(n_dense);
                }
                grad_dhat(b, y, x) += scale * g;
            }
}

// ---------------------------------------------------------------------------
// structural ranking supervision
// ---------------------------------------------------------------------------

struct ThresholdResult {
    double tau;
    bool include;
};

inline ThresholdResult dynamic_threshold(double d_i, double d_j, const RankingConfig& cfg) {
    double tau = std::max(cfg.tau_abs, cfg.tau_rel * 0.5 * (d_i + d_j));
    return {tau, std::fabs(d_i - d_j) > tau};
}

inline double pair_rank_loss(double dhat_i, double dhat_j, double d_gi, double d_gj) {
    double s = (d_gi > d_gj) ? 1.0 : (d_gi < d_gj ? -1.0 : 0.0);
    return ops::softplus(-s * (dhat_i - dhat_j));
}

// d(pair_rank_loss)/d(dhat_i); the gradient w.r.t. dhat_j is the negation.
inline double pair_rank_loss_grad_i(double dhat_i, double dhat_j, double d_gi, double d_gj) {
    double s = (d_gi > d_gj) ? 1.0 : (d_gi < d_gj ? -1.0 : 0.0);
    return -s * ops::sigmoid(-s * (dhat_i - dhat_j));
}

// Square-element dilation minus the original mask: the "just outside" band.
inline Tensor dilated_ring(const Tensor& mask, std::size_t radius) {
    require_rank(mask, 2, "dilated_ring mask");
    const long H = static_cast<long>(mask.extent(0));
    const long W = static_cast<long>(mask.extent(1));
    const long r = static_cast<long>(radius);
    Tensor ring(mask.shape());
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            if (mask(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) != 0.0) continue;
            bool near = false;
            for (long dy = -r; dy <= r && !near; ++dy) {
                long yy = y + dy;
                if (yy < 0 || yy >= H) continue;
                for (long dx = -r; dx <= r; ++dx) {
                    long xx = x + dx;
                    if (xx < 0 || xx >= W) continue;
                    if (mask(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) != 0.0) {
                        near = true;
                        break;
                    }
                }
            }
            if (near) ring(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1.0;
        }
    return ring;
}

namespace detail {

struct Pixel {
    std::size_t y, x;
};

inline std::vector<Pixel> masked_pixels(const DepthSupervisionBatch& batch, std::size_t b,
                                        const Tensor& mask2d) {
    std::vector<Pixel> out;
    for (std::size_t y = 0; y < batch.height(); ++y)
        for (std::size_t x = 0; x < batch.width(); ++x) {
            if (mask2d(y, x) != 0.0 && batch.mask_dense(b, y, x) != 0.0) out.push_back({y, x});
        }
    return out;
}

inline Tensor instance_mask_2d(const DepthSupervisionBatch& batch, std::size_t b, std::size_t k) {
    Tensor m({batch.height(), batch.width()});
    for (std::size_t y = 0; y < batch.height(); ++y)
        for (std::size_t x = 0; x < batch.width(); ++x) m(y, x) = batch.instance_masks(b, k, y, x);
    return m;
}

}  // namespace detail

inline std::vector<PixelPair> sample_edge_pairs(const DepthSupervisionBatch& batch,
                                                const RankingConfig& cfg, SplitMix64& rng) {
    cfg.validate();
    std::vector<PixelPair> pairs;
    const std::size_t K = batch.num_instances();
    for (std::size_t b = 0; b < batch.batch_size(); ++b) {
        // per-instance candidate lists, dense-masked
        std::vector<std::vector<detail::Pixel>> rings, interiors;
        for (std::size_t k = 0; k < K; ++k) {
            Tensor m = detail::instance_mask_2d(batch, b, k);
            auto interior = detail::masked_pixels(batch, b, m);
            auto ring = detail::masked_pixels(batch, b, dilated_ring(m, cfg.dilation_radius));
            if (!interior.empty() && !ring.empty()) {
                rings.push_back(std::move(ring));
                interiors.push_back(std::move(interior));
            }
        }
        if (rings.empty()) continue;
        std::size_t kept = 0, attempts = 0;
        const std::size_t cap = 20 * cfg.n_edge_pairs;
        while (kept < cfg.n_edge_pairs && attempts < cap) {
            ++attempts;
            std::size_t inst = rng.next_below(rings.size());
            auto pi = rings[inst][rng.next_below(rings[inst].size())];
            auto pj = interiors[inst][rng.next_below(interiors[inst].size())];
            double di = batch.d_dense(b, pi.y, pi.x);
            double dj = batch.d_dense(b, pj.y, pj.x);
            if (!dynamic_threshold(di, dj, cfg).include) continue;
            pairs.push_back({b, pi.y, pi.x, pj.y, pj.x});
            ++kept;
        }
    }
    return pairs;
}

inline std::vector<PixelPair> sample_global_pairs(const DepthSupervisionBatch& batch,
                                                  const RankingConfig& cfg, SplitMix64& rng) {
    cfg.validate();
    std::vector<PixelPair> pairs;
    const std::size_t K = batch.num_instances();
    for (std::size_t b = 0; b < batch.batch_size(); ++b) {
        std::vector<detail::Pixel> background;
        for (std::size_t y = 0; y < batch.height(); ++y)
            for (std::size_t x = 0; x < batch.width(); ++x) {
                if (batch.mask_dense(b, y, x) == 0.0) continue;
                bool fg = false;
                for (std::size_t k = 0; k < K && !fg; ++k) {
                    fg = batch.instance_masks(b, k, y, x) != 0.0;
                }
                if (!fg) background.push_back({y, x});
            }
        if (background.size() < 2) continue;
        std::size_t kept = 0, attempts = 0;
        const std::size_t cap = 20 * cfg.n_global_pairs;
        while (kept < cfg.n_global_pairs && attempts < cap) {
            ++attempts;
            auto pi = background[rng.next_below(background.size())];
            auto pj = background[rng.next_below(background.size())];
            double di = batch.d_dense(b, pi.y, pi.x);
            double dj = batch.d_dense(b, pj.y, pj.x);
            if (!dynamic_threshold(di, dj, cfg).include) continue;
            pairs.push_back({b, pi.y, pi.x, pj.y, pj.x});
            ++kept;
        }
    }
    return pairs;
}

struct RelativeLoss {
    double l_relative = 0.0;
    double l_edge = 0.0;
    double l_global = 0.0;
    std::vector<PixelPair> edge_pairs;
    std::vector<PixelPair> global_pairs;
};

inline RelativeLoss relative_loss(const DepthSupervisionBatch& batch, const DepthBinSpec& bins,
                                  const RankingConfig& cfg, SplitMix64 rng) {
    RelativeLoss out;
    out.edge_pairs = sample_edge_pairs(batch, cfg, rng);
    out.global_pairs = sample_global_pairs(batch, cfg, rng);
    Tensor dhat = expected_depth(batch.p, bins);
    auto mean_loss = [&](const std::vector<PixelPair>& pairs) {
        if (pairs.empty()) return 0.0;
        double sum = 0.0;
        for (const auto& pr : pairs) {
            sum += pair_rank_loss(dhat(pr.b, pr.yi, pr.xi), dhat(pr.b, pr.yj, pr.xj),
                                  batch.d_dense(pr.b, pr.yi, pr.xi),
                                  batch.d_dense(pr.b, pr.yj, pr.xj));
        }
        return sum / static_cast<double>(pairs.size());
    };
    out.l_edge = mean_loss(out.edge_pairs);
    out.l_global = mean_loss(out.global_pairs);
    out.l_relative = cfg.w_edge * out.l_edge + cfg.w_global * out.l_global;
    return out;
}

// ---------------------------------------------------------------------------
// total loss and its gradient w.r.t. P
// ---------------------------------------------------------------------------

inline DepthLossReport total_depth_loss(const DepthSupervisionBatch& batch,
                                        const DepthBinSpec& bins, const RankingConfig& cfg,
                                        const DepthLossWeights& weights, double sigma,
                                        double beta, SplitMix64 rng) {
    weights.validate();
    DepthLossReport rep;
    rep.l_prob = kl_prob_loss(batch, bins, sigma, &rep.empty_sparse);
    auto found = foundation_loss(batch, bins, beta, weights.lambda_abs, weights.lambda_dense);
    rep.l_abs = found.l_abs;
    rep.l_dense = found.l_dense;
    rep.l_found = found.l_found;
    rep.empty_dense = found.empty;
    auto rel = relative_loss(batch, bins, cfg, rng);
    rep.l_edge = rel.l_edge;
    rep.l_global = rel.l_global;
    rep.l_relative = rel.l_relative;
    rep.n_edge_pairs_used = rel.edge_pairs.size();
    rep.n_global_pairs_used = rel.global_pairs.size();
    rep.l_depth = weights.lambda1 * rep.l_prob + rep.l_found + weights.lambda3 * rep.l_relative;
    return rep;
}

inline Tensor total_depth_loss_grad_p(const DepthSupervisionBatch& batch,
                                      const DepthBinSpec& bins, const RankingConfig& cfg,
                                      const DepthLossWeights& weights, double sigma,
                                      double beta, SplitMix64 rng) {
    Tensor grad_p(batch.p.shape());
    kl_prob_loss_grad_p(batch, bins, sigma, weights.lambda1, grad_p);

    Tensor dhat = expected_depth(batch.p, bins);
    Tensor grad_dhat({batch.batch_size(), batch.height(), batch.width()});
    foundation_loss_grad_dhat(batch, dhat, beta, weights.lambda_abs, weights.lambda_dense, 1.0,
                              grad_dhat);

    // pair sampling depends only on ground truth, so the kept pair set is a
    // constant of the gradient
    auto edge = sample_edge_pairs(batch, cfg, rng);
    auto global = sample_global_pairs(batch, cfg, rng);
    auto add_pairs = [&](const std::vector<PixelPair>& pairs, double w) {
        if (pairs.empty() || w == 0.0) return;
        double scale = weights.lambda3 * w / static_cast<double>(pairs.size());
        for (const auto& pr : pairs) {
            double gi = pair_rank_loss_grad_i(dhat(pr.b, pr.yi, pr.xi), dhat(pr.b, pr.yj, pr.xj),
                                              batch.d_dense(pr.b, pr.yi, pr.xi),
                                              batch.d_dense(pr.b, pr.yj, pr.xj));
            grad_dhat(pr.b, pr.yi, pr.xi) += scale * gi;
            grad_dhat(pr.b, pr.yj, pr.xj) -= scale * gi;
        }
    };
    add_pairs(edge, cfg.w_edge);
    add_pairs(global, cfg.w_global);

    // chain d(dhat)/dP = bin center
    const std::size_t B = batch.batch_size(), D = bins.num_bins;
    const std::size_t H = batch.height(), W = batch.width();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double g = grad_dhat(b, y, x);
                if (g == 0.0) continue;
                for (std::size_t k = 0; k < D; ++k) grad_p(b, k, y, x) += g * bins.centers[k];
            }
    return grad_p;
}

}  // namespace bevkit::pdf
