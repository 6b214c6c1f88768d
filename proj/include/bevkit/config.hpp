#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gradcheck.hpp"
#include "pdf.hpp"
#include "synthdata.hpp"
#include "tensor_io.hpp"

// JSON loading for all user-facing configuration objects.
namespace bevkit::config {

using json = nlohmann::ordered_json;

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    return json::parse(in);
}

inline pdf::RankingConfig ranking_config_from_json(const json& j) {
    pdf::RankingConfig cfg;
    cfg.tau_abs = j.value("tau_abs", cfg.tau_abs);
    cfg.tau_rel = j.value("tau_rel", cfg.tau_rel);
    cfg.w_edge = j.value("w_edge", cfg.w_edge);
    cfg.w_global = j.value("w_global", cfg.w_global);
    cfg.n_edge_pairs = j.value("n_edge_pairs", cfg.n_edge_pairs);
    cfg.n_global_pairs = j.value("n_global_pairs", cfg.n_global_pairs);
    cfg.dilation_radius = j.value("dilation_radius", cfg.dilation_radius);
    cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
    cfg.validate();
    return cfg;
}

inline pdf::DepthLossWeights loss_weights_from_json(const json& j) {
    pdf::DepthLossWeights w;
    w.lambda1 = j.value("lambda1", w.lambda1);
    w.lambda_abs = j.value("lambda_abs", w.lambda_abs);
    w.lambda_dense = j.value("lambda_dense", w.lambda_dense);
    w.lambda3 = j.value("lambda3", w.lambda3);
    if (w.lambda1 < 0 || w.lambda_abs < 0 || w.lambda_dense < 0 || w.lambda3 < 0) {
        throw std::invalid_argument("config: loss weights must be nonnegative");
    }
    return w;
}

inline gradcheck::FiniteDiffConfig finite_diff_from_json(const json& j) {
    gradcheck::FiniteDiffConfig cfg;
    cfg.h = j.value("h", cfg.h);
    cfg.tol = j.value("tol", cfg.tol);
    cfg.floor = j.value("floor", cfg.floor);
    cfg.max_probe = j.value("max_probe", cfg.max_probe);
    cfg.validate();
    return cfg;
}

inline pdf::DepthBinSpec bins_from_json(const json& j) {
    return pdf::DepthBinSpec::uniform(j.value("d_min", 1.0), j.value("d_max", 70.0),
                                      j.value("num_bins", std::size_t{70}));
}

// The umbrella config file holds optional sections with these names.
struct HarnessConfig {
    pdf::RankingConfig ranking;
    pdf::DepthLossWeights weights;
    gradcheck::FiniteDiffConfig finite_diff;
    pdf::DepthBinSpec bins = pdf::DepthBinSpec::uniform(1.0, 70.0, 70);
    double temperature = 1.0;
};

inline HarnessConfig harness_config_from_json(const json& j) {
    HarnessConfig cfg;
    if (j.contains("ranking")) cfg.ranking = ranking_config_from_json(j.at("ranking"));
    if (j.contains("weights")) cfg.weights = loss_weights_from_json(j.at("weights"));
    if (j.contains("finite_diff")) cfg.finite_diff = finite_diff_from_json(j.at("finite_diff"));
    if (j.contains("bins")) cfg.bins = bins_from_json(j.at("bins"));
    cfg.temperature = j.value("temperature", cfg.temperature);
    if (cfg.temperature <= 0.0) throw std::invalid_argument("config: temperature must be > 0");
    return cfg;
}

inline synth::Region region_from_json(const json& j) {
    synth::Region r;
    std::string kind = j.value("kind", "rect");
    if (kind == "rect") {
        r.kind = synth::Region::Kind::Rect;
    } else if (kind == "ellipse") {
        r.kind = synth::Region::Kind::Ellipse;
    } else {
        throw std::invalid_argument("config: region kind must be 'rect' or 'ellipse'");
    }
    r.y0 = j.at("y0").get<std::size_t>();
    r.x0 = j.at("x0").get<std::size_t>();
    r.y1 = j.at("y1").get<std::size_t>();
    r.x1 = j.at("x1").get<std::size_t>();
    r.depth = j.at("depth").get<double>();
    return r;
}

inline synth::SceneSpec scene_spec_from_json(const json& j) {
    synth::SceneSpec spec;
    spec.width = j.value("width", spec.width);
    spec.height = j.value("height", spec.height);
    for (const auto& rj : j.at("background_planes")) {
        spec.background_planes.push_back(region_from_json(rj));
    }
    if (j.contains("objects")) {
        for (const auto& rj : j.at("objects")) spec.objects.push_back(region_from_json(rj));
    }
    spec.sparse_fraction = j.value("sparse_fraction", spec.sparse_fraction);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.seed = j.value("seed", spec.seed);
    return spec;
}

// base feature comes from a file, or is generated from a shape plus seed
inline synth::MotionSpec motion_spec_from_json(const json& j) {
    synth::MotionSpec spec;
    if (j.contains("base_file")) {
        spec.base_feature = read_tensor(j.at("base_file").get<std::string>());
    } else {
        auto shape = j.at("base_shape").get<std::vector<std::size_t>>();
        if (shape.size() != 4) {
            throw std::invalid_argument("config: base_shape must have 4 extents [B,C,H,W]");
        }
        SplitMix64 rng(j.value("base_seed", std::uint64_t{42}));
        spec.base_feature = Tensor(shape);
        for (std::size_t i = 0; i < spec.base_feature.size(); ++i) {
            spec.base_feature[i] = rng.uniform(-2.0, 2.0);
        }
    }
    if (j.contains("shift")) {
        auto shift = j.at("shift").get<std::vector<long>>();
        if (shift.size() != 2) throw std::invalid_argument("config: shift must be [dy, dx]");
        spec.dy = shift[0];
        spec.dx = shift[1];
    }
    spec.n_frames = j.value("n_frames", spec.n_frames);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.seed = j.value("seed", spec.seed);
    spec.validate();
    return spec;
}

inline json loss_report_to_json(const pdf::DepthLossReport& r) {
    json j;
    j["l_prob"] = r.l_prob;
    j["l_abs"] = r.l_abs;
    j["l_dense"] = r.l_dense;
    j["l_edge"] = r.l_edge;
    j["l_global"] = r.l_global;
    j["l_relative"] = r.l_relative;
    j["l_depth"] = r.l_depth;
    j["n_edge_pairs_used"] = r.n_edge_pairs_used;
    j["n_global_pairs_used"] = r.n_global_pairs_used;
    return j;
}

}  // namespace bevkit::config
