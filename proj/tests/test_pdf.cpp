#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bevkit/pdf.hpp"
#include "bevkit/rng.hpp"
#include "bevkit/synthdata.hpp"

using namespace bevkit;

namespace {

// a tiny batch with uniform prediction everywhere, single masked pixel
pdf::DepthSupervisionBatch uniform_batch(const pdf::DepthBinSpec& bins, double d_sparse) {
    pdf::DepthSupervisionBatch b;
    std::size_t D = bins.num_bins;
    b.p = Tensor({1, D, 1, 1}, 1.0 / static_cast<double>(D));
    b.d_sparse = Tensor({1, 1, 1}, d_sparse);
    b.mask_sparse = Tensor({1, 1, 1}, 1.0);
    b.d_dense = Tensor({1, 1, 1}, d_sparse);
    b.mask_dense = Tensor({1, 1, 1}, 1.0);
    b.instance_masks = Tensor({1, 1, 1, 1});
    return b;
}

synth::SceneSpec object_on_background(double obj_depth, double bg_depth) {
    synth::SceneSpec spec;
    spec.width = 16;
    spec.height = 16;
    synth::Region bg;
    bg.y1 = 16;
    bg.x1 = 16;
    bg.depth = bg_depth;
    spec.background_planes.push_back(bg);
    synth::Region obj;
    obj.y0 = 5;
    obj.x0 = 5;
    obj.y1 = 10;
    obj.x1 = 10;
    obj.depth = obj_depth;
    spec.objects.push_back(obj);
    spec.sparse_fraction = 0.3;
    spec.noise_sigma = 0.0;
    return spec;
}

}  // namespace

TEST_CASE("DepthBinSpec: centers and validation") {
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 70);
    CHECK(bins.width() == doctest::Approx(69.0 / 70.0));
    CHECK(bins.centers.front() == doctest::Approx(1.0 + 0.5 * bins.width()));
    for (std::size_t k = 1; k < bins.num_bins; ++k) CHECK(bins.centers[k] > bins.centers[k - 1]);
    CHECK_THROWS_AS(pdf::DepthBinSpec::uniform(5.0, 2.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(pdf::DepthBinSpec::uniform(1.0, 70.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(pdf::DepthBinSpec::uniform(-1.0, 70.0, 10), std::invalid_argument);
}

TEST_CASE("gaussian_target: concentration, symmetry, normalization") {
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 16);
    double w = bins.width();

    // narrow sigma concentrates nearly all mass on the target bin
    auto g = pdf::gaussian_target(bins.centers[5], bins, w / 10.0);
    CHECK(g[5] > 0.999);

    // midway between two centers the two bins are equal
    auto mid = pdf::gaussian_target(0.5 * (bins.centers[4] + bins.centers[5]), bins, w);
    CHECK(mid[4] == doctest::Approx(mid[5]).epsilon(1e-12));

    SplitMix64 rng(42);
    for (int t = 0; t < 1000; ++t) {
        double d = rng.uniform(1.0, 70.0);
        double sigma = rng.uniform(0.1, 10.0);
        auto gt = pdf::gaussian_target(d, bins, sigma);
        double sum = 0.0;
        for (double v : gt) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }

    CHECK_THROWS_AS(pdf::gaussian_target(100.0, bins, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(pdf::gaussian_target(10.0, bins, 0.0), std::invalid_argument);
}

TEST_CASE("kl_prob_loss: zero on match, two-bin hand value, masking") {
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 16);
    double sigma = bins.width();

    auto batch = uniform_batch(bins, 20.0);
    auto g = pdf::gaussian_target(20.0, bins, sigma);
    for (std::size_t k = 0; k < bins.num_bins; ++k) batch.p(0, k, 0, 0) = g[k];
    CHECK(std::fabs(pdf::kl_prob_loss(batch, bins, sigma)) < 1e-9);

    // one-hot-like target vs uniform two-bin prediction: KL -> ln 2
    auto bins2 = pdf::DepthBinSpec::uniform(1.0, 3.0, 2);
    auto b2 = uniform_batch(bins2, bins2.centers[0]);
    double kl2 = pdf::kl_prob_loss(b2, bins2, 1e-3);
    CHECK(kl2 == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    // perturbing unmasked pixels leaves the loss unchanged
    pdf::DepthSupervisionBatch wide;
    wide.p = Tensor({1, 16, 1, 2}, 1.0 / 16.0);
    wide.d_sparse = Tensor({1, 1, 2}, 20.0);
    wide.mask_sparse = Tensor({1, 1, 2});
    wide.mask_sparse(0, 0, 0) = 1.0;
    wide.d_dense = wide.d_sparse;
    wide.mask_dense = Tensor({1, 1, 2}, 1.0);
    wide.instance_masks = Tensor({1, 1, 1, 2});
    double before = pdf::kl_prob_loss(wide, bins, sigma);
    wide.p(0, 3, 0, 1) = 0.9;  // unmasked pixel, not even a distribution
    CHECK(pdf::kl_prob_loss(wide, bins, sigma) == before);

    // empty mask: zero with the flag set
    wide.mask_sparse(0, 0, 0) = 0.0;
    bool empty = false;
    CHECK(pdf::kl_prob_loss(wide, bins, sigma, &empty) == 0.0);
    CHECK(empty);
}

TEST_CASE("expected_depth: one-hot, uniform, loop oracle") {
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 8);
    Tensor p({1, 8, 1, 1});
    p(0, 3, 0, 0) = 1.0;
    CHECK(pdf::expected_depth(p, bins)(0, 0, 0) == doctest::Approx(bins.centers[3]));

    Tensor u({1, 8, 1, 1}, 1.0 / 8.0);
    CHECK(pdf::expected_depth(u, bins)(0, 0, 0) == doctest::Approx(0.5 * (1.0 + 70.0)));

    SplitMix64 rng(9);
    Tensor r({2, 8, 3, 3});
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rng.next_double();
    Tensor got = pdf::expected_depth(r, bins);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t y = 0; y < 3; ++y)
            for (std::size_t x = 0; x < 3; ++x) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 8; ++k) acc += r(b, k, y, x) * bins.centers[k];
                CHECK(std::fabs(got(b, y, x) - acc) < 1e-12);
            }
}

TEST_CASE("smooth_l1: zero residual, quadratic and linear branches") {
    CHECK(ops::smooth_l1(0.0, 1.0) == 0.0);
    CHECK(ops::smooth_l1(0.5, 1.0) == doctest::Approx(0.125));
    CHECK(ops::smooth_l1(2.0, 1.0) == doctest::Approx(1.5));
    // continuous first derivative at the branch point
    CHECK(ops::smooth_l1_deriv(1.0 - 1e-9, 1.0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(ops::smooth_l1_deriv(1.0 + 1e-9, 1.0) == 1.0);
}

TEST_CASE("foundation_loss: perfect prediction, composition, linearity") {
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 16);
    auto batch = uniform_batch(bins, bins.centers[7]);
    // make the prediction decode exactly to the target depth
    for (std::size_t k = 0; k < 16; ++k) batch.p(0, k, 0, 0) = 0.0;
    batch.p(0, 7, 0, 0) = 1.0;
    auto fl = pdf::foundation_loss(batch, bins, 1.0, 0.01, 0.03);
    CHECK(fl.l_abs == doctest::Approx(0.0));
    CHECK(fl.l_dense == doctest::Approx(0.0));
    CHECK(fl.l_found == doctest::Approx(0.0));

    // an off-target prediction composes per the stated weights
    batch.d_sparse(0, 0, 0) = bins.centers[7] + 2.0;
    batch.d_dense(0, 0, 0) = bins.centers[7] - 3.0;
    auto f1 = pdf::foundation_loss(batch, bins, 1.0, 0.01, 0.03);
    CHECK(f1.l_found == doctest::Approx(0.01 * f1.l_abs + 0.03 * f1.l_dense).epsilon(1e-12));
    auto f2 = pdf::foundation_loss(batch, bins, 1.0, 0.01, 0.06);
    CHECK(f2.l_found - 0.01 * f2.l_abs ==
          doctest::Approx(2.0 * (f1.l_found - 0.01 * f1.l_abs)).epsilon(1e-12));

    // both masks empty: zero with flag
    batch.mask_sparse(0, 0, 0) = 0.0;
    batch.mask_dense(0, 0, 0) = 0.0;
    auto fe = pdf::foundation_loss(batch, bins, 1.0, 0.01, 0.03);
    CHECK(fe.l_found == 0.0);
    CHECK(fe.empty);
}

TEST_CASE("dynamic_threshold: formula, equality, absolute floor") {
    pdf::RankingConfig cfg;
    cfg.tau_abs = 0.5;
    cfg.tau_rel = 0.03;

    auto a = pdf::dynamic_threshold(20.0, 30.0, cfg);
    CHECK(a.tau == doctest::Approx(0.75));
    CHECK(a.include);

    auto b = pdf::dynamic_threshold(15.0, 15.0, cfg);
    CHECK_FALSE(b.include);

    auto c = pdf::dynamic_threshold(2.0, 2.4, cfg);
    CHECK(c.tau == doctest::Approx(0.5));
    CHECK_FALSE(c.include);
}

TEST_CASE("pair_rank_loss: margins and symmetry") {
    // correct ordering with margin 10
    CHECK(pdf::pair_rank_loss(30.0, 20.0, 30.0, 20.0) ==
          doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-12));
    // zero margin is ln 2 regardless of the sign
    CHECK(pdf::pair_rank_loss(25.0, 25.0, 30.0, 20.0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    // inverted ordering with margin 10
    CHECK(pdf::pair_rank_loss(20.0, 30.0, 30.0, 20.0) ==
          doctest::Approx(10.0 + std::log1p(std::exp(-10.0))).epsilon(1e-12));
    // symmetric under swapping the pair
    CHECK(pdf::pair_rank_loss(22.0, 27.0, 30.0, 20.0) ==
          doctest::Approx(pdf::pair_rank_loss(27.0, 22.0, 20.0, 30.0)).epsilon(1e-15));
}

TEST_CASE("dilated_ring: point, full frame, counted border") {
    Tensor point({11, 11});
    point(5, 5) = 1.0;
    Tensor ring = pdf::dilated_ring(point, 1);
    std::size_t n = 0;
    for (std::size_t i = 0; i < ring.size(); ++i) n += ring[i] != 0.0;
    CHECK(n == 8);
    CHECK(ring(5, 5) == 0.0);

    Tensor full({4, 4}, 1.0);
    Tensor empty = pdf::dilated_ring(full, 2);
    for (std::size_t i = 0; i < empty.size(); ++i) CHECK(empty[i] == 0.0);

    Tensor square({9, 9});
    for (std::size_t y = 3; y < 6; ++y)
        for (std::size_t x = 3; x < 6; ++x) square(y, x) = 1.0;
    Tensor r = pdf::dilated_ring(square, 1);
    std::size_t count = 0;
    for (std::size_t i = 0; i < r.size(); ++i) count += r[i] != 0.0;
    CHECK(count == 16);  // the 5x5 border around a 3x3 block
}

TEST_CASE("sample_edge_pairs: membership, flat exclusion, near-total acceptance") {
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 16);
    auto spec = object_on_background(5.0, 30.0);
    auto batch = synth::make_depth_scene(spec, bins, bins.width());
    pdf::RankingConfig cfg;
    cfg.n_edge_pairs = 64;
    cfg.dilation_radius = 2;

    SplitMix64 rng(42);
    auto pairs = pdf::sample_edge_pairs(batch, cfg, rng);
    CHECK(!pairs.empty());
    Tensor mask({16, 16});
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) mask(y, x) = batch.instance_masks(0, 0, y, x);
    Tensor ring = pdf::dilated_ring(mask, cfg.dilation_radius);
    for (const auto& p : pairs) {
        CHECK(ring(p.yi, p.xi) != 0.0);
        CHECK(mask(p.yj, p.xj) != 0.0);
        double di = batch.d_dense(p.b, p.yi, p.xi);
        double dj = batch.d_dense(p.b, p.yj, p.xj);
        CHECK(pdf::dynamic_threshold(di, dj, cfg).include);
    }
    // a 25 m step exceeds any threshold, so sampling never rejects
    CHECK(pairs.size() == cfg.n_edge_pairs);

    // flat scene: zero pairs
    auto flat = object_on_background(30.0, 30.0);
    auto flat_batch = synth::make_depth_scene(flat, bins, bins.width());
    SplitMix64 rng2(42);
    CHECK(pdf::sample_edge_pairs(flat_batch, cfg, rng2).empty());

    // deterministic under the seed
    SplitMix64 r1(7), r2(7);
    auto p1 = pdf::sample_edge_pairs(batch, cfg, r1);
    auto p2 = pdf::sample_edge_pairs(batch, cfg, r2);
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].yi == p2[i].yi);
        CHECK(p1[i].xi == p2[i].xi);
        CHECK(p1[i].yj == p2[i].yj);
        CHECK(p1[i].xj == p2[i].xj);
    }
}

TEST_CASE("sample_global_pairs: avoids instances, spans planes") {
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 16);
    // two background planes at 5 m and 30 m
    synth::SceneSpec spec;
    spec.width = 16;
    spec.height = 16;
    synth::Region far;
    far.y1 = 16;
    far.x1 = 16;
    far.depth = 30.0;
    synth::Region near;
    near.y0 = 8;
    near.y1 = 16;
    near.x1 = 16;
    near.depth = 5.0;
    spec.background_planes = {far, near};
    synth::Region obj;
    obj.y0 = 2;
    obj.x0 = 2;
    obj.y1 = 5;
    obj.x1 = 5;
    obj.depth = 10.0;
    spec.objects.push_back(obj);
    spec.noise_sigma = 0.0;
    auto batch = synth::make_depth_scene(spec, bins, bins.width());

    pdf::RankingConfig cfg;
    cfg.n_global_pairs = 64;
    SplitMix64 rng(42);
    auto pairs = pdf::sample_global_pairs(batch, cfg, rng);
    CHECK(!pairs.empty());
    for (const auto& p : pairs) {
        CHECK(batch.instance_masks(0, 0, p.yi, p.xi) == 0.0);
        CHECK(batch.instance_masks(0, 0, p.yj, p.xj) == 0.0);
        // within-plane differences are zero, so every kept pair spans planes
        CHECK(batch.d_dense(0, p.yi, p.xi) != batch.d_dense(0, p.yj, p.xj));
    }
}

TEST_CASE("relative_loss: perfect prediction bound, weight selection, inversion") {
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 64);
    auto spec = object_on_background(5.0, 30.0);
    auto batch = synth::make_depth_scene(spec, bins, 0.2);  // sharp target -> accurate d_hat
    pdf::RankingConfig cfg;
    cfg.n_edge_pairs = 32;
    cfg.n_global_pairs = 32;

    auto rl = pdf::relative_loss(batch, bins, cfg, SplitMix64(42));
    CHECK(rl.l_relative < ops::softplus(-cfg.tau_abs));

    pdf::RankingConfig edge_only = cfg;
    edge_only.w_edge = 1.0;
    edge_only.w_global = 0.0;
    auto re = pdf::relative_loss(batch, bins, edge_only, SplitMix64(42));
    CHECK(re.l_relative == doctest::Approx(re.l_edge).epsilon(1e-15));

    // inverted prediction: every pair is wrongly ordered, so each pair's loss
    // is at least ln 2
    // the background must span two depths or no global pair clears the
    // threshold
    auto split_spec = spec;
    split_spec.background_planes[0].x1 = 8;
    synth::Region right;
    right.x0 = 8;
    right.x1 = 16;
    right.y1 = 16;
    right.depth = 45.0;
    split_spec.background_planes.push_back(right);
    auto split = synth::make_depth_scene(split_spec, bins, 0.2);
    pdf::DepthSupervisionBatch inv = split;
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
            double flipped = 71.0 - split.d_dense(0, y, x);
            auto g = pdf::gaussian_target(flipped, bins, 0.2);
            for (std::size_t k = 0; k < bins.num_bins; ++k) inv.p(0, k, y, x) = g[k];
        }
    auto ri = pdf::relative_loss(inv, bins, cfg, SplitMix64(42));
    CHECK(ri.l_edge >= std::log(2.0));
    CHECK(ri.l_global >= std::log(2.0));
}

TEST_CASE("total_depth_loss: weighting, annihilation, perfect prediction") {
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 64);
    auto spec = object_on_background(5.0, 30.0);
    auto batch = synth::make_depth_scene(spec, bins, 0.2);
    pdf::RankingConfig cfg;
    cfg.n_edge_pairs = 32;
    cfg.n_global_pairs = 32;
    pdf::DepthLossWeights w;  // 0.1 / 0.01 / 0.03 / 0.05
    double sigma = 0.2;

    auto rep = pdf::total_depth_loss(batch, bins, cfg, w, sigma, 1.0, SplitMix64(42));
    CHECK(rep.l_depth == doctest::Approx(w.lambda1 * rep.l_prob + rep.l_found +
                                         w.lambda3 * rep.l_relative)
                             .epsilon(1e-12));
    CHECK(rep.l_found ==
          doctest::Approx(w.lambda_abs * rep.l_abs + w.lambda_dense * rep.l_dense).epsilon(1e-12));

    pdf::DepthLossWeights zero{0.0, 0.0, 0.0, 0.0};
    auto z = pdf::total_depth_loss(batch, bins, cfg, zero, sigma, 1.0, SplitMix64(42));
    CHECK(z.l_depth == 0.0);

    // P generated as the target of noise-free dense depth: near-zero total.
    // sigma of one bin width keeps the discretized expectation on the true
    // depth; much narrower and d_hat snaps to bin centers.
    auto perfect_spec = spec;
    perfect_spec.noise_sigma = 0.0;
    double psigma = bins.width();
    auto perfect = synth::make_depth_scene(perfect_spec, bins, psigma);
    auto pr = pdf::total_depth_loss(perfect, bins, cfg, w, psigma, 1.0, SplitMix64(42));
    CHECK(pr.l_depth < 1e-3);
}

TEST_CASE("total_depth_loss_grad_p matches central differences on the fixed instance") {
    // mirrors the registered gradcheck instance but asserts the bound here too
    auto bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 8);
    auto spec = object_on_background(5.0, 30.0);
    spec.width = 6;
    spec.height = 6;
    spec.objects[0].y0 = 1;
    spec.objects[0].x0 = 1;
    spec.objects[0].y1 = 4;
    spec.objects[0].x1 = 4;
    spec.background_planes[0].y1 = 6;
    spec.background_planes[0].x1 = 6;
    auto batch = synth::make_depth_scene(spec, bins, 2.5 * bins.width());
    // soften P away from the exact target so gradients are generic
    SplitMix64 prng(11);
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 6; ++x) {
            double sum = 0.0;
            for (std::size_t k = 0; k < 8; ++k) {
                batch.p(0, k, y, x) = 0.1 + prng.next_double();
                sum += batch.p(0, k, y, x);
            }
            for (std::size_t k = 0; k < 8; ++k) batch.p(0, k, y, x) /= sum;
        }
    pdf::RankingConfig cfg;
    cfg.n_edge_pairs = 16;
    cfg.n_global_pairs = 16;
    cfg.dilation_radius = 1;
    pdf::DepthLossWeights w;
    double sigma = 2.5 * bins.width();

    Tensor ga = pdf::total_depth_loss_grad_p(batch, bins, cfg, w, sigma, 1.0, SplitMix64(42));
    auto objective = [&] {
        return pdf::total_depth_loss(batch, bins, cfg, w, sigma, 1.0, SplitMix64(42)).l_depth;
    };
    double h = 1e-5, worst = 0.0;
    SplitMix64 pick(5);
    for (int t = 0; t < 48; ++t) {
        std::size_t e = pick.next_below(batch.p.size());
        double orig = batch.p[e];
        batch.p[e] = orig + h;
        double fp = objective();
        batch.p[e] = orig - h;
        double fm = objective();
        batch.p[e] = orig;
        double fd = (fp - fm) / (2.0 * h);
        double denom = std::max({std::fabs(ga[e]), std::fabs(fd), 1e-8});
        worst = std::max(worst, std::fabs(ga[e] - fd) / denom);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("RankingConfig validation") {
    pdf::RankingConfig cfg;
    cfg.tau_abs = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = pdf::RankingConfig{};
    cfg.tau_rel = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = pdf::RankingConfig{};
    cfg.w_edge = 0.0;
    cfg.w_global = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = pdf::RankingConfig{};
    cfg.dilation_radius = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
