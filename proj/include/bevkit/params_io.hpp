#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "dgtf.hpp"
#include "igdr.hpp"
#include "tensor_io.hpp"

// Parameter sets persist as a directory of RTEN tensor files plus a JSON
// manifest mapping each tensor name to its file.
namespace bevkit::params_io {

namespace fs = std::filesystem;

inline void write_manifest(const fs::path& dir, const nlohmann::ordered_json& manifest) {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("params_io: cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

inline nlohmann::ordered_json read_manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("params_io: cannot read " + (dir / "manifest.json").string());
    return nlohmann::ordered_json::parse(in);
}

template <typename Params>
inline void save_params(const Params& p, const fs::path& dir, nlohmann::ordered_json extra) {
    fs::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["tensors"] = nlohmann::ordered_json::object();
    auto names = Params::tensor_names();
    auto tensors = p.all_tensors();
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::string file = std::string(names[i]) + ".rten";
        write_tensor((dir / file).string(), *tensors[i], TensorDtype::f64);
        manifest["tensors"][names[i]] = file;
    }
    for (auto& [k, v] : extra.items()) manifest[k] = v;
    write_manifest(dir, manifest);
}

template <typename Params>
inline void load_tensors(Params& p, const fs::path& dir, const nlohmann::ordered_json& manifest) {
    auto names = Params::tensor_names();
    auto tensors = p.all_tensors();
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::string file = manifest.at("tensors").at(names[i]).template get<std::string>();
        *tensors[i] = read_tensor((dir / file).string());
    }
}

inline void save_dgtf_params(const dgtf::DgtfParams& p, const std::string& dir) {
    nlohmann::ordered_json extra;
    extra["k"] = p.k;
    extra["deformable_groups"] = p.deformable_groups;
    extra["channels"] = p.channels();
    save_params(p, dir, extra);
}

inline dgtf::DgtfParams load_dgtf_params(const std::string& dir) {
    auto manifest = read_manifest(dir);
    dgtf::DgtfParams p;
    p.k = manifest.at("k").get<std::size_t>();
    p.deformable_groups = manifest.at("deformable_groups").get<std::size_t>();
    load_tensors(p, dir, manifest);
    return p;
}

inline void save_igdr_params(const igdr::IgdrParams& p, const std::string& dir) {
    nlohmann::ordered_json extra;
    extra["channels"] = p.conv_gamma_w.extent(0);
    save_params(p, dir, extra);
}

inline igdr::IgdrParams load_igdr_params(const std::string& dir) {
    auto manifest = read_manifest(dir);
    igdr::IgdrParams p;
    load_tensors(p, dir, manifest);
    return p;
}

// All intermediates of one forward pass, for golden comparison.
inline void save_igdr_result(const igdr::IgdrResult& r, const std::string& dir_str) {
    fs::path dir(dir_str);
    fs::create_directories(dir);
    write_tensor((dir / "f_final.rten").string(), r.f_final, TensorDtype::f64);
    write_tensor((dir / "e_proj.rten").string(), r.e_proj, TensorDtype::f64);
    write_tensor((dir / "a_prob.rten").string(), r.a_prob, TensorDtype::f64);
    write_tensor((dir / "e_bev.rten").string(), r.e_bev, TensorDtype::f64);
    write_tensor((dir / "gamma.rten").string(), r.gamma, TensorDtype::f64);
    write_tensor((dir / "beta.rten").string(), r.beta, TensorDtype::f64);
    write_tensor((dir / "g_bg.rten").string(), r.g_bg, TensorDtype::f64);
    write_tensor((dir / "f_calibrated.rten").string(), r.f_calibrated, TensorDtype::f64);
}

}  // namespace bevkit::params_io
