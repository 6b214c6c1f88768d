// bevkit: verification harness for the depth-loss / temporal-fusion /
// instance-refinement kernels. Subcommands run gradient checks, property
// suites, golden-file regression, and the temporal-alignment demo.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bevkit/config.hpp"
#include "bevkit/demo.hpp"
#include "bevkit/golden.hpp"
#include "bevkit/gradcheck.hpp"
#include "bevkit/props.hpp"
#include "bevkit/report.hpp"

namespace {

constexpr const char* kLastReportFile = ".bevkit_last_report.json";

std::uint64_t default_seed() {
    if (const char* env = std::getenv("BEVKIT_SEED")) {
        return std::strtoull(env, nullptr, 10);
    }
    return 42;
}

void store_last(const std::vector<bevkit::CheckReport>& reports) {
    std::ofstream out(kLastReportFile);
    if (out) out << bevkit::reports_to_json(reports).dump(2) << "\n";
}

int finish(const std::vector<bevkit::CheckReport>& reports) {
    store_last(reports);
    bool all_pass = true;
    for (const auto& r : reports) {
        std::cout << r.to_text();
        all_pass = all_pass && r.pass();
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bevkit verification harness"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    grad->set_help_flag("--help", "print help");  // frees -h for the step size
    std::string target = "all";
    std::uint64_t seed = default_seed();
    double h = 0.0, tol = 0.0;
    grad->add_option("--target", target, "operation name, suite prefix, or 'all'");
    grad->add_option("--seed", seed, "RNG seed");
    grad->add_option("--h", h, "finite-difference step");
    grad->add_option("--tol", tol, "relative-error tolerance");

    // props
    auto* props = app.add_subcommand("props", "randomized property suites");
    std::string suite = "all";
    std::size_t trials = 100;
    props->add_option("--suite", suite, "tensor|pdf|dgtf|igdr|all");
    props->add_option("--trials", trials, "trials per property");
    props->add_option("--seed", seed, "RNG seed");

    // golden
    auto* golden = app.add_subcommand("golden", "golden-file regression");
    std::string golden_mode, golden_dir = "golden";
    golden->add_option("mode", golden_mode, "generate or verify")->required();
    golden->add_option("--dir", golden_dir, "golden file directory");

    // demo-temporal
    auto* demo = app.add_subcommand("demo-temporal", "temporal alignment demo");
    std::string spec_path, demo_mode = "oracle";
    std::size_t steps = 500;
    double lr = 1e-2;
    demo->add_option("--spec", spec_path, "MotionSpec JSON file")->required();
    demo->add_option("--mode", demo_mode, "oracle or trained");
    demo->add_option("--steps", steps, "gradient steps (trained mode)");
    demo->add_option("--lr", lr, "learning rate (trained mode)");

    // report
    auto* report = app.add_subcommand("report", "re-emit the last report");
    std::string format = "json", out_path;
    report->add_option("--format", format, "json or text");
    report->add_option("--out", out_path, "output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        bevkit::config::HarnessConfig cfg;
        if (!config_path.empty()) {
            cfg = bevkit::config::harness_config_from_json(
                bevkit::config::load_json_file(config_path));
        }

        if (*grad) {
            bevkit::gradcheck::FiniteDiffConfig fd = cfg.finite_diff;
            if (h > 0.0) fd.h = h;
            if (tol > 0.0) fd.tol = tol;
            auto rep = bevkit::gradcheck::run(target, fd, seed);
            rep.config["h"] = fd.h;
            rep.config["tol"] = fd.tol;
            rep.config["target"] = target;
            return finish({rep});
        }

        if (*props) {
            auto rep = bevkit::props::run_props(suite, seed, trials);
            return finish({rep});
        }

        if (*golden) {
            if (golden_mode == "generate") return finish({bevkit::golden::generate(golden_dir)});
            if (golden_mode == "verify") return finish({bevkit::golden::verify(golden_dir)});
            std::cerr << "golden: mode must be 'generate' or 'verify'\n";
            return 2;
        }

        if (*demo) {
            auto spec = bevkit::config::motion_spec_from_json(
                bevkit::config::load_json_file(spec_path));
            return finish({bevkit::demo::demo_temporal(spec, demo_mode, steps, lr)});
        }

        if (*report) {
            std::ifstream in(kLastReportFile);
            nlohmann::ordered_json arr = nlohmann::ordered_json::array();
            if (in) arr = nlohmann::ordered_json::parse(in);
            auto reports = bevkit::reports_from_json(arr);
            std::string body;
            if (format == "json") {
                body = bevkit::reports_to_json(reports).dump(2) + "\n";
            } else if (format == "text") {
                for (const auto& r : reports) body += r.to_text();
            } else {
                std::cerr << "report: format must be 'json' or 'text'\n";
                return 2;
            }
            if (out_path.empty()) {
                std::cout << body;
            } else {
                std::ofstream out(out_path);
                if (!out) {
                    std::cerr << "report: cannot write " << out_path << "\n";
                    return 2;
                }
                out << body;
            }
            bool all_pass = true;
            for (const auto& r : reports) all_pass = all_pass && r.pass();
            return all_pass ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "bevkit: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
