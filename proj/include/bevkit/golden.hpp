#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgtf.hpp"
#include "igdr.hpp"
#include "ops.hpp"
#include "pdf.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "synthdata.hpp"
#include "tensor.hpp"
#include "tensor_io.hpp"

// Fixed-seed canonical instances for every module; generate writes them as
// RTEN files (f64 plus an f32 copy), verify recomputes and compares.
namespace bevkit::golden {

namespace fs = std::filesystem;

constexpr std::uint64_t kGoldenSeed = 20240042ull;

namespace detail {

// every golden tensor of one run, keyed by name
using TensorSet = std::map<std::string, Tensor>;

inline Tensor random_tensor(std::vector<std::size_t> shape, SplitMix64& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-2.0, 2.0);
    return t;
}

inline synth::SceneSpec canonical_scene() {
    synth::SceneSpec spec;
    spec.width = 20;
    spec.height = 20;
    synth::Region bg;
    bg.y1 = 20;
    bg.x1 = 20;
    bg.depth = 30.0;
    spec.background_planes.push_back(bg);
    synth::Region near_plane;
    near_plane.y0 = 12;
    near_plane.x0 = 0;
    near_plane.y1 = 20;
    near_plane.x1 = 20;
    near_plane.depth = 12.0;
    spec.background_planes.push_back(near_plane);
    synth::Region obj;
    obj.y0 = 4;
    obj.x0 = 5;
    obj.y1 = 9;
    obj.x1 = 11;
    obj.depth = 5.0;
    spec.objects.push_back(obj);
    synth::Region obj2;
    obj2.kind = synth::Region::Kind::Ellipse;
    obj2.y0 = 13;
    obj2.x0 = 12;
    obj2.y1 = 19;
    obj2.x1 = 18;
    obj2.depth = 7.0;
    spec.objects.push_back(obj2);
    spec.sparse_fraction = 0.25;
    spec.noise_sigma = 0.05;
    spec.seed = kGoldenSeed;
    return spec;
}

inline pdf::RankingConfig canonical_ranking_config() {
    pdf::RankingConfig cfg;
    cfg.n_edge_pairs = 64;
    cfg.n_global_pairs = 64;
    cfg.rng_seed = kGoldenSeed;
    return cfg;
}

// Computes every canonical instance; the scalar losses go into `scalars`.
inline TensorSet compute_all(nlohmann::ordered_json& scalars) {
    TensorSet set;
    SplitMix64 rng(kGoldenSeed);

    // conv2d
    set["conv_input"] = random_tensor({2, 3, 5, 5}, rng);
    set["conv_kernel"] = random_tensor({4, 3, 3, 3}, rng);
    set["conv_bias"] = random_tensor({4}, rng);
    set["conv_output"] =
        ops::conv2d(set["conv_input"], set["conv_kernel"], set["conv_bias"], 1, 1);

    // pdf scene and losses
    pdf::DepthBinSpec bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 16);
    double sigma = bins.width();
    auto batch = synth::make_depth_scene(canonical_scene(), bins, sigma);
    set["pdf_p"] = batch.p;
    set["pdf_d_dense"] = batch.d_dense;
    set["pdf_d_sparse"] = batch.d_sparse;
    set["pdf_mask_sparse"] = batch.mask_sparse;
    set["pdf_instance_masks"] = batch.instance_masks;
    auto cfg = canonical_ranking_config();
    pdf::DepthLossWeights w;
    auto report = pdf::total_depth_loss(batch, bins, cfg, w, sigma, 1.0, SplitMix64(cfg.rng_seed));
    scalars["l_prob"] = report.l_prob;
    scalars["l_abs"] = report.l_abs;
    scalars["l_dense"] = report.l_dense;
    scalars["l_edge"] = report.l_edge;
    scalars["l_global"] = report.l_global;
    scalars["l_relative"] = report.l_relative;
    scalars["l_depth"] = report.l_depth;
    scalars["n_edge_pairs_used"] = report.n_edge_pairs_used;
    scalars["n_global_pairs_used"] = report.n_global_pairs_used;
    set["pdf_grad_p"] =
        pdf::total_depth_loss_grad_p(batch, bins, cfg, w, sigma, 1.0, SplitMix64(cfg.rng_seed));

    // dgtf step
    SplitMix64 drng(kGoldenSeed + 1);
    dgtf::DgtfParams dp = dgtf::DgtfParams::random(2, 3, drng);
    Tensor x = random_tensor({1, 2, 8, 8}, drng);
    Tensor h_prev = random_tensor({1, 2, 8, 8}, drng);
    set["dgtf_x"] = x;
    set["dgtf_h_prev"] = h_prev;
    auto names = dgtf::DgtfParams::tensor_names();
    auto tensors = dp.all_tensors();
    for (std::size_t i = 0; i < names.size(); ++i) {
        set[std::string("dgtf_param_") + names[i]] = *tensors[i];
    }
    auto step = dgtf::dgtf_step(x, dgtf::DgtfState{h_prev, true}, dp);
    set["dgtf_f_rc"] = step.f_rc;
    set["dgtf_h_t"] = step.new_state.h;

    // igdr forward with all intermediates
    SplitMix64 irng(kGoldenSeed + 2);
    igdr::IgdrInputs in;
    in.f_rc = random_tensor({1, 2, 6, 6}, irng);
    auto inst = synth::make_instance_bev({{1, 1, 4, 4}, {3, 2, 6, 6}}, {1.0, 0.7}, 6, 6, 1,
                                         kGoldenSeed + 3);
    in.s_bev = inst.s_bev;
    in.e_features = inst.e_features;
    igdr::IgdrParams ip = igdr::IgdrParams::random(2, 4, irng);
    set["igdr_f_rc"] = in.f_rc;
    set["igdr_s_bev"] = in.s_bev;
    set["igdr_e_features"] = in.e_features;
    auto inames = igdr::IgdrParams::tensor_names();
    auto itensors = ip.all_tensors();
    for (std::size_t i = 0; i < inames.size(); ++i) {
        set[std::string("igdr_param_") + inames[i]] = *itensors[i];
    }
    auto res = igdr::igdr_forward(in, ip);
    set["igdr_f_final"] = res.f_final;
    set["igdr_a_prob"] = res.a_prob;
    set["igdr_e_bev"] = res.e_bev;
    set["igdr_gamma"] = res.gamma;
    set["igdr_beta"] = res.beta;
    set["igdr_g_bg"] = res.g_bg;
    set["igdr_f_calibrated"] = res.f_calibrated;

    // moving sequence frames
    SplitMix64 mrng(kGoldenSeed + 4);
    synth::MotionSpec ms;
    ms.base_feature = random_tensor({1, 2, 10, 10}, mrng);
    ms.dy = 1;
    ms.dx = 0;
    ms.n_frames = 3;
    ms.noise_sigma = 0.05;
    ms.seed = kGoldenSeed + 5;
    auto seq = synth::make_moving_bev(ms);
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        set["motion_frame_" + std::to_string(t)] = seq.frames[t];
    }
    return set;
}

}  // namespace detail

inline CheckReport generate(const std::string& dir_str) {
    auto t0 = std::chrono::steady_clock::now();
    CheckReport rep;
    rep.suite = "golden.generate";
    rep.seed = kGoldenSeed;
    fs::path dir(dir_str);
    fs::create_directories(dir);
    nlohmann::ordered_json scalars;
    auto set = detail::compute_all(scalars);
    for (const auto& [name, t] : set) {
        write_tensor((dir / (name + ".f64.rten")).string(), t, TensorDtype::f64);
        write_tensor((dir / (name + ".f32.rten")).string(), t, TensorDtype::f32);
    }
    std::ofstream out(dir / "pdf_losses.json");
    out << scalars.dump(2) << "\n";
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    rep.add("golden.write_" + std::to_string(set.size()) + "_tensors", true,
            static_cast<double>(set.size()), 0.0, ms);
    return rep;
}

inline CheckReport verify(const std::string& dir_str) {
    CheckReport rep;
    rep.suite = "golden.verify";
    rep.seed = kGoldenSeed;
    fs::path dir(dir_str);
    nlohmann::ordered_json scalars;
    auto set = detail::compute_all(scalars);
    for (const auto& [name, want] : set) {
        auto t0 = std::chrono::steady_clock::now();
        double worst64 = 0.0, worst32 = 0.0;
        bool ok = true;
        try {
            Tensor got = read_tensor((dir / (name + ".f64.rten")).string());
            if (got.shape() != want.shape()) throw std::runtime_error("shape mismatch");
            for (std::size_t i = 0; i < got.size(); ++i) {
                // bit-exact in f64
                if (got[i] != want[i]) {
                    worst64 = std::max(worst64, std::fabs(got[i] - want[i]));
                    ok = false;
                }
            }
            Tensor got32 = read_tensor((dir / (name + ".f32.rten")).string());
            if (got32.shape() != want.shape()) throw std::runtime_error("f32 shape mismatch");
            for (std::size_t i = 0; i < got32.size(); ++i) {
                double denom = std::max(std::fabs(want[i]), 1e-6);
                worst32 = std::max(worst32, std::fabs(got32[i] - want[i]) / denom);
            }
            if (worst32 >= 1e-6) ok = false;
        } catch (const std::exception&) {
            ok = false;
            worst64 = std::numeric_limits<double>::infinity();
        }
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count();
        rep.add(name, ok, std::max(worst64, worst32), 1e-6, ms);
    }
    // scalar losses round-trip through JSON exactly
    {
        auto t0 = std::chrono::steady_clock::now();
        bool ok = true;
        double worst = 0.0;
        try {
            std::ifstream in(dir / "pdf_losses.json");
            if (!in) throw std::runtime_error("missing pdf_losses.json");
            auto got = nlohmann::ordered_json::parse(in);
            for (auto& [k, v] : scalars.items()) {
                double a = got.at(k).get<double>();
                double b = v.get<double>();
                if (a != b) {
                    ok = false;
                    worst = std::max(worst, std::fabs(a - b));
                }
            }
        } catch (const std::exception&) {
            ok = false;
            worst = std::numeric_limits<double>::infinity();
        }
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count();
        rep.add("pdf_losses_json", ok, worst, 0.0, ms);
    }
    return rep;
}

}  // namespace bevkit::golden
