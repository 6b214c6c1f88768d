#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bevkit/config.hpp"
#include "bevkit/demo.hpp"
#include "bevkit/golden.hpp"
#include "bevkit/gradcheck.hpp"
#include "bevkit/params_io.hpp"
#include "bevkit/props.hpp"
#include "bevkit/report.hpp"
#include "bevkit/tensor_io.hpp"
#include "reference_impls.hpp"

using namespace bevkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("bevkit_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("rten round trip: f64 bit-exact, f32 within 1e-6 relative") {
    TempDir dir("rten");
    SplitMix64 rng(1);
    Tensor t({2, 3, 4});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-100.0, 100.0);

    write_tensor((dir.path / "a.rten").string(), t, TensorDtype::f64);
    TensorDtype dt;
    Tensor back = read_tensor((dir.path / "a.rten").string(), &dt);
    CHECK(dt == TensorDtype::f64);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

    write_tensor((dir.path / "b.rten").string(), t, TensorDtype::f32);
    Tensor b32 = read_tensor((dir.path / "b.rten").string(), &dt);
    CHECK(dt == TensorDtype::f32);
    for (std::size_t i = 0; i < t.size(); ++i) {
        double denom = std::max(std::fabs(t[i]), 1e-6);
        CHECK(std::fabs(b32[i] - t[i]) / denom < 1e-6);
    }

    // corrupt header magic is rejected
    {
        std::fstream f(dir.path / "a.rten", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
    }
    CHECK_THROWS_AS(read_tensor((dir.path / "a.rten").string()), std::runtime_error);
    CHECK_THROWS_AS(read_tensor((dir.path / "missing.rten").string()), std::runtime_error);
}

TEST_CASE("finite differences: quadratic self-test") {
    Tensor x = Tensor::from_data({1}, {3.0});
    gradcheck::Problem prob;
    prob.inputs = {&x};
    prob.analytic = {Tensor::from_data({1}, {6.0})};
    prob.eval = [&] { return x(0) * x(0); };
    gradcheck::FiniteDiffConfig cfg;
    SplitMix64 rng(42);
    // central differences are exact for quadratics up to roundoff
    CHECK(gradcheck::max_rel_error(prob, cfg, rng) < 1e-9);
}

TEST_CASE("gradcheck: unknown target names the valid ones") {
    gradcheck::FiniteDiffConfig cfg;
    try {
        gradcheck::run("no.such.op", cfg, 42);
        FAIL("expected a rejection");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("pdf.total_depth_loss") != std::string::npos);
        CHECK(msg.find("dgtf.dgtf_step") != std::string::npos);
    }
}

TEST_CASE("gradcheck: suite prefixes select subsets and reports are reproducible") {
    gradcheck::FiniteDiffConfig cfg;
    auto rep = gradcheck::run("igdr", cfg, 42);
    CHECK(rep.checks.size() >= 5);
    for (const auto& c : rep.checks) CHECK(c.name.rfind("igdr.", 0) == 0);

    auto rep2 = gradcheck::run("igdr", cfg, 42);
    REQUIRE(rep.checks.size() == rep2.checks.size());
    for (std::size_t i = 0; i < rep.checks.size(); ++i) {
        CHECK(rep.checks[i].value == rep2.checks[i].value);  // bit-identical
    }
}

TEST_CASE("check report: conjunction semantics and canonical round trip") {
    CheckReport rep;
    rep.suite = "demo";
    CHECK(rep.pass());  // vacuous
    rep.add("ok", true, 0.5, 1.0, 2.0);
    CHECK(rep.pass());
    rep.add("bad", false, 2.0, 1.0, 3.0);
    CHECK_FALSE(rep.pass());
    CHECK(rep.to_json().at("pass").get<bool>() == false);

    std::string once = rep.to_json().dump(2);
    auto back = CheckReport::from_json(nlohmann::ordered_json::parse(once));
    std::string twice = back.to_json().dump(2);
    CHECK(once == twice);  // byte-identical canonical serialization
}

TEST_CASE("props: zero trials is a vacuous pass, unknown suite rejected") {
    auto rep = props::run_props("all", 42, 0);
    CHECK(rep.pass());
    CHECK(rep.checks.empty());
    CHECK_THROWS_AS(props::run_props("nope", 42, 1), std::invalid_argument);
}

TEST_CASE("golden: generate then verify, corruption names the tensor") {
    TempDir dir("golden");
    auto gen = golden::generate(dir.path.string());
    CHECK(gen.pass());
    auto ver = golden::verify(dir.path.string());
    CHECK(ver.pass());

    // flip one payload byte of a known tensor
    {
        auto p = dir.path / "dgtf_f_rc.f64.rten";
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        REQUIRE(f.good());
        f.seekg(0, std::ios::end);
        auto end = f.tellg();
        f.seekp(static_cast<std::streamoff>(end) - 5);
        int c = 0;
        f.seekg(static_cast<std::streamoff>(end) - 5);
        c = f.get();
        f.seekp(static_cast<std::streamoff>(end) - 5);
        f.put(static_cast<char>(c ^ 0x40));
    }
    auto bad = golden::verify(dir.path.string());
    CHECK_FALSE(bad.pass());
    bool named = false;
    for (const auto& c : bad.checks) {
        if (c.name == "dgtf_f_rc" && !c.pass) named = true;
        if (c.name != "dgtf_f_rc") CHECK(c.pass);
    }
    CHECK(named);
}

TEST_CASE("dual-implementation oracles agree on the golden instances") {
    SplitMix64 rng(99);
    dgtf::DgtfParams dp = dgtf::DgtfParams::random(2, 3, rng);
    Tensor x({1, 2, 7, 7}), h({1, 2, 7, 7});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = rng.uniform(-2.0, 2.0);
    auto got = dgtf::dgtf_step(x, dgtf::DgtfState{h, true}, dp);
    CHECK(refimpl::max_abs_diff(got.f_rc, refimpl::dgtf_step_ref(x, dgtf::DgtfState{h, true}, dp)) <
          1e-12);

    igdr::IgdrInputs in;
    in.f_rc = Tensor({1, 2, 5, 5});
    in.e_features = Tensor({3, 4, 3, 3});
    in.s_bev = Tensor({1, 3, 5, 5});
    for (std::size_t i = 0; i < in.f_rc.size(); ++i) in.f_rc[i] = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < in.e_features.size(); ++i)
        in.e_features[i] = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < in.s_bev.size(); ++i) in.s_bev[i] = rng.uniform(0.0, 2.0);
    igdr::IgdrParams ip = igdr::IgdrParams::random(2, 4, rng);
    auto ires = igdr::igdr_forward(in, ip);
    CHECK(refimpl::max_abs_diff(ires.f_final, refimpl::igdr_forward_ref(in, ip)) < 1e-12);
}

TEST_CASE("params round trip through the manifest directory") {
    TempDir dir("params");
    SplitMix64 rng(3);
    dgtf::DgtfParams dp = dgtf::DgtfParams::random(3, 3, rng);
    params_io::save_dgtf_params(dp, (dir.path / "dgtf").string());
    auto dback = params_io::load_dgtf_params((dir.path / "dgtf").string());
    CHECK(dback.k == dp.k);
    auto a = dp.all_tensors();
    auto b = dback.all_tensors();
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(refimpl::max_abs_diff(*a[i], *b[i]) == 0.0);
    }

    igdr::IgdrParams ip = igdr::IgdrParams::random(2, 4, rng);
    params_io::save_igdr_params(ip, (dir.path / "igdr").string());
    auto iback = params_io::load_igdr_params((dir.path / "igdr").string());
    auto ia = ip.all_tensors();
    auto ib = iback.all_tensors();
    for (std::size_t i = 0; i < ia.size(); ++i) {
        CHECK(refimpl::max_abs_diff(*ia[i], *ib[i]) == 0.0);
    }
}

TEST_CASE("config: exact field names, motion spec, loss report schema") {
    auto rj = nlohmann::ordered_json::parse(R"({
        "tau_abs": 0.7, "tau_rel": 0.05, "w_edge": 0.8, "w_global": 0.2,
        "n_edge_pairs": 100, "n_global_pairs": 50, "dilation_radius": 3,
        "rng_seed": 9
    })");
    auto cfg = config::ranking_config_from_json(rj);
    CHECK(cfg.tau_abs == 0.7);
    CHECK(cfg.tau_rel == 0.05);
    CHECK(cfg.n_edge_pairs == 100);
    CHECK(cfg.dilation_radius == 3);
    CHECK(cfg.rng_seed == 9);

    auto wj = nlohmann::ordered_json::parse(
        R"({"lambda1": 0.1, "lambda_abs": 0.01, "lambda_dense": 0.03, "lambda3": 0.05})");
    auto w = config::loss_weights_from_json(wj);
    CHECK(w.lambda1 == 0.1);
    CHECK(w.lambda3 == 0.05);
    CHECK_THROWS_AS(config::loss_weights_from_json(
                        nlohmann::ordered_json::parse(R"({"lambda1": -1})")),
                    std::invalid_argument);

    auto mj = nlohmann::ordered_json::parse(
        R"({"base_shape": [1,2,8,8], "base_seed": 5, "shift": [1,-1], "n_frames": 3,
            "noise_sigma": 0.1, "seed": 11})");
    auto ms = config::motion_spec_from_json(mj);
    CHECK(ms.dy == 1);
    CHECK(ms.dx == -1);
    CHECK(ms.n_frames == 3);
    CHECK(ms.base_feature.extent(3) == 8);

    pdf::DepthLossReport lr;
    lr.l_depth = 1.5;
    lr.n_edge_pairs_used = 7;
    auto j = config::loss_report_to_json(lr);
    CHECK(j.at("l_depth") == 1.5);
    CHECK(j.at("n_edge_pairs_used") == 7);
    for (const char* key : {"l_prob", "l_abs", "l_dense", "l_edge", "l_global", "l_relative",
                            "l_depth", "n_edge_pairs_used", "n_global_pairs_used"}) {
        CHECK(j.contains(key));
    }
}

TEST_CASE("demo oracle: zero shift is exact, unit shift within tolerance") {
    SplitMix64 rng(4);
    synth::MotionSpec spec;
    spec.base_feature = Tensor({1, 2, 14, 14});
    for (std::size_t i = 0; i < spec.base_feature.size(); ++i) {
        spec.base_feature[i] = rng.uniform(-2.0, 2.0);
    }
    spec.n_frames = 3;

    auto zero = demo::demo_temporal(spec, "oracle", 0, 0.0);
    CHECK(zero.pass());
    CHECK(zero.checks[0].value == 0.0);

    spec.dy = 1;
    auto one = demo::demo_temporal(spec, "oracle", 0, 0.0);
    CHECK(one.pass());

    CHECK_THROWS_AS(demo::demo_temporal(spec, "bogus", 0, 0.0), std::invalid_argument);
}

TEST_CASE("demo trained: divergence at an absurd learning rate is reported") {
    SplitMix64 rng(5);
    synth::MotionSpec spec;
    spec.base_feature = Tensor({1, 2, 8, 8});
    for (std::size_t i = 0; i < spec.base_feature.size(); ++i) {
        spec.base_feature[i] = rng.uniform(-2.0, 2.0);
    }
    spec.dy = 1;
    spec.n_frames = 2;
    spec.noise_sigma = 0.05;
    auto rep = demo::demo_trained(spec, 200, 1e5);
    CHECK_FALSE(rep.pass());
    CHECK(rep.config.contains("diverged_at_lr"));
}
