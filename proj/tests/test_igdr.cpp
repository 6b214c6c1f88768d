#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bevkit/igdr.hpp"
#include "bevkit/rng.hpp"
#include "reference_impls.hpp"

using namespace bevkit;

namespace {

Tensor rand_t(std::vector<std::size_t> shape, SplitMix64& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

igdr::IgdrInputs random_inputs(SplitMix64& rng, std::size_t n, std::size_t c) {
    igdr::IgdrInputs in;
    in.f_rc = rand_t({1, c, 5, 5}, rng);
    in.e_features = rand_t({n, 4, 3, 3}, rng);
    in.s_bev = rand_t({1, n, 5, 5}, rng, 0.0, 2.0);
    return in;
}

}  // namespace

TEST_CASE("pool_project: constant features, zero projection, loop oracle") {
    SplitMix64 rng(1);
    igdr::IgdrParams id = igdr::IgdrParams::identity_init(2, 4);
    Tensor feats({3, 4, 3, 3}, 2.5);
    Tensor ep = igdr::pool_project(feats, id, 1);
    for (std::size_t i = 0; i < ep.size(); ++i) CHECK(ep[i] == doctest::Approx(2.5));

    igdr::IgdrParams zero = igdr::IgdrParams::zeros(2, 4);
    Tensor zp = igdr::pool_project(feats, zero, 1);
    for (std::size_t i = 0; i < zp.size(); ++i) CHECK(zp[i] == 0.0);

    igdr::IgdrParams p = igdr::IgdrParams::random(2, 4, rng);
    Tensor r = rand_t({3, 4, 3, 3}, rng);
    Tensor got = igdr::pool_project(r, p, 2);
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t co = 0; co < 4; ++co) {
            double acc = p.proj_b(co);
            for (std::size_t ci = 0; ci < 4; ++ci) {
                double pooled = 0.0;
                for (std::size_t y = 0; y < 3; ++y)
                    for (std::size_t x = 0; x < 3; ++x) pooled += r(n, ci, y, x);
                acc += p.proj_w(co, ci) * pooled / 9.0;
            }
            CHECK(std::fabs(got(0, n, co) - acc) < 1e-12);
            CHECK(got(1, n, co) == got(0, n, co));  // replicated over batch
        }
}

TEST_CASE("softmax_assign: single instance, symmetry, sharpness") {
    SplitMix64 rng(2);
    Tensor one = rand_t({1, 1, 3, 3}, rng, 0.0, 2.0);
    Tensor a1 = igdr::softmax_assign(one, 1.0);
    for (std::size_t i = 0; i < a1.size(); ++i) CHECK(a1[i] == doctest::Approx(1.0));

    Tensor eq({1, 4, 2, 2}, 0.7);
    Tensor ae = igdr::softmax_assign(eq, 1.0);
    for (std::size_t i = 0; i < ae.size(); ++i) CHECK(ae[i] == doctest::Approx(0.25));

    Tensor two = Tensor::from_data({1, 2, 1, 1}, {1.0, 0.0});
    Tensor at = igdr::softmax_assign(two, 0.1);
    CHECK(at(0, 0, 0, 0) > 0.9999);
    CHECK(at(0, 0, 0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-12));

    CHECK_THROWS_AS(igdr::softmax_assign(two, 0.0), std::invalid_argument);
}

TEST_CASE("broadcast_prototypes: replication, selection, loop oracle") {
    SplitMix64 rng(3);
    Tensor e1 = rand_t({1, 1, 3}, rng);
    Tensor a1({1, 1, 2, 2}, 1.0);
    Tensor b1 = igdr::broadcast_prototypes(a1, e1);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 4; ++i) CHECK(b1(0, c, i / 2, i % 2) == e1(0, 0, c));

    Tensor e = rand_t({1, 3, 2}, rng);
    Tensor onehot({1, 3, 1, 1});
    onehot(0, 2, 0, 0) = 1.0;
    Tensor sel = igdr::broadcast_prototypes(onehot, e);
    CHECK(sel(0, 0, 0, 0) == e(0, 2, 0));
    CHECK(sel(0, 1, 0, 0) == e(0, 2, 1));

    Tensor a = rand_t({1, 3, 2, 2}, rng, 0.0, 1.0);
    Tensor got = igdr::broadcast_prototypes(a, e);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t x = 0; x < 2; ++x) {
                double acc = 0.0;
                for (std::size_t n = 0; n < 3; ++n) acc += a(0, n, y, x) * e(0, n, c);
                CHECK(std::fabs(got(0, c, y, x) - acc) < 1e-12);
            }

    Tensor bad = rand_t({1, 4, 2}, rng);
    CHECK_THROWS_AS(igdr::broadcast_prototypes(a, bad), std::invalid_argument);
}

TEST_CASE("gen_affine: identity init, bias passthrough, conv oracle") {
    SplitMix64 rng(4);
    igdr::IgdrParams id = igdr::IgdrParams::identity_init(2, 4);
    Tensor e = rand_t({1, 4, 4, 4}, rng);
    auto a = igdr::gen_affine(e, id);
    for (std::size_t i = 0; i < a.gamma.size(); ++i) {
        CHECK(a.gamma[i] == 1.0);
        CHECK(a.beta[i] == 0.0);
    }

    igdr::IgdrParams p = igdr::IgdrParams::random(2, 4, rng);
    Tensor zero({1, 4, 4, 4});
    auto z = igdr::gen_affine(zero, p);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(z.gamma[c * 16 + i] == p.conv_gamma_b(c));
            CHECK(z.beta[c * 16 + i] == p.conv_beta_b(c));
        }

    auto r = igdr::gen_affine(e, p);
    Tensor wg = refimpl::conv2d_ref(e, p.conv_gamma_w, p.conv_gamma_b, 1);
    Tensor wb = refimpl::conv2d_ref(e, p.conv_beta_w, p.conv_beta_b, 1);
    CHECK(refimpl::max_abs_diff(r.gamma, wg) < 1e-12);
    CHECK(refimpl::max_abs_diff(r.beta, wb) < 1e-12);
}

TEST_CASE("calibrate: identity, replacement, arithmetic") {
    SplitMix64 rng(5);
    Tensor f = rand_t({1, 2, 3, 3}, rng);
    Tensor one(f.shape(), 1.0);
    Tensor zero(f.shape());
    CHECK(refimpl::max_abs_diff(igdr::calibrate(f, one, zero), f) == 0.0);

    Tensor beta = rand_t(f.shape(), rng);
    CHECK(refimpl::max_abs_diff(igdr::calibrate(f, zero, beta), beta) == 0.0);

    Tensor half(f.shape(), 0.5);
    Tensor two(f.shape(), 2.0);
    Tensor neg(f.shape(), -1.0);
    Tensor out = igdr::calibrate(half, two, neg);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("foreground_gate: neutral, locked, bounded") {
    SplitMix64 rng(6);
    igdr::IgdrParams zero = igdr::IgdrParams::zeros(2, 4);
    Tensor s({1, 3, 4, 4});
    Tensor g = igdr::foreground_gate(s, zero);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.5);

    igdr::IgdrParams locked = igdr::IgdrParams::random(2, 4, rng);
    locked.conv_gate_b(0) = -20.0;
    for (std::size_t i = 0; i < locked.conv_gate_w.size(); ++i) locked.conv_gate_w[i] *= 0.01;
    Tensor sl = rand_t({1, 3, 4, 4}, rng, 0.0, 1.0);
    Tensor gl = igdr::foreground_gate(sl, locked);
    for (std::size_t i = 0; i < gl.size(); ++i) CHECK(gl[i] < 1e-8);

    igdr::IgdrParams p = igdr::IgdrParams::random(2, 4, rng);
    Tensor gb = igdr::foreground_gate(rand_t({1, 3, 4, 4}, rng, 0.0, 5.0), p);
    for (std::size_t i = 0; i < gb.size(); ++i) {
        CHECK(gb[i] > 0.0);
        CHECK(gb[i] < 1.0);
    }
}

TEST_CASE("gated_fuse: endpoints and midpoint") {
    SplitMix64 rng(7);
    Tensor f = rand_t({1, 2, 3, 3}, rng);
    Tensor fc = rand_t({1, 2, 3, 3}, rng);
    Tensor g0({1, 1, 3, 3});
    CHECK(refimpl::max_abs_diff(igdr::gated_fuse(f, fc, g0), f) == 0.0);
    Tensor g1({1, 1, 3, 3}, 1.0);
    CHECK(refimpl::max_abs_diff(igdr::gated_fuse(f, fc, g1), fc) == 0.0);
    Tensor gh({1, 1, 3, 3}, 0.5);
    Tensor mid = igdr::gated_fuse(f, fc, gh);
    for (std::size_t i = 0; i < mid.size(); ++i) {
        CHECK(mid[i] == doctest::Approx(0.5 * (f[i] + fc[i])).epsilon(1e-15));
    }
}

TEST_CASE("igdr_forward: identity init is exactly the identity") {
    SplitMix64 rng(8);
    for (int t = 0; t < 20; ++t) {
        auto in = random_inputs(rng, 1 + rng.next_below(4), 1 + rng.next_below(3));
        igdr::IgdrParams id = igdr::IgdrParams::identity_init(in.f_rc.extent(1), 4);
        auto res = igdr::igdr_forward(in, id);
        CHECK(refimpl::max_abs_diff(res.f_final, in.f_rc) == 0.0);
    }
}

TEST_CASE("igdr_forward: no-instance passthrough") {
    SplitMix64 rng(9);
    Tensor f = rand_t({1, 3, 4, 4}, rng);
    auto in = igdr::IgdrInputs::passthrough(f);
    igdr::IgdrParams p = igdr::IgdrParams::random(3, 4, rng);
    auto res = igdr::igdr_forward(in, p);
    CHECK(res.no_instance_passthrough);
    CHECK(refimpl::max_abs_diff(res.f_final, f) == 0.0);
}

TEST_CASE("igdr_forward: matches the straight-line reference") {
    SplitMix64 rng(10);
    for (int t = 0; t < 10; ++t) {
        auto in = random_inputs(rng, 1 + rng.next_below(4), 1 + rng.next_below(3));
        in.temperature = rng.uniform(0.3, 2.0);
        igdr::IgdrParams p = igdr::IgdrParams::random(in.f_rc.extent(1), 4, rng);
        auto got = igdr::igdr_forward(in, p);
        Tensor want = refimpl::igdr_forward_ref(in, p);
        CHECK(refimpl::max_abs_diff(got.f_final, want) < 1e-12);
    }
}

TEST_CASE("IgdrInputs validation") {
    SplitMix64 rng(11);
    auto in = random_inputs(rng, 2, 2);
    in.temperature = 0.0;
    CHECK_THROWS_AS(in.validate(), std::invalid_argument);
    in.temperature = 1.0;
    in.s_bev(0, 0, 0, 0) = -0.5;
    CHECK_THROWS_AS(in.validate(), std::invalid_argument);
    in = random_inputs(rng, 2, 2);
    in.e_features = rand_t({3, 4, 3, 3}, rng);  // instance axis mismatch
    CHECK_THROWS_AS(in.validate(), std::invalid_argument);
}
