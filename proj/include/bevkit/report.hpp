#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace bevkit {

struct CheckRecord {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double tol = 0.0;
    double ms = 0.0;
};

struct CheckReport {
    std::string suite;
    std::vector<CheckRecord> checks;
    std::uint64_t seed = 42;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();

    bool pass() const {
        for (const auto& c : checks) {
            if (!c.pass) return false;
        }
        return true;
    }

    void add(std::string name, bool ok, double value, double tol, double ms = 0.0) {
        checks.push_back({std::move(name), ok, value, tol, ms});
    }

    // Canonical key order; dump() of this object is the wire format.
    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["suite"] = suite;
        j["checks"] = nlohmann::ordered_json::array();
        for (const auto& c : checks) {
            nlohmann::ordered_json cj;
            cj["name"] = c.name;
            cj["status"] = c.pass ? "pass" : "fail";
            cj["value"] = c.value;
            cj["tol"] = c.tol;
            cj["ms"] = c.ms;
            j["checks"].push_back(std::move(cj));
        }
        j["pass"] = pass();
        j["seed"] = seed;
        j["config"] = config;
        return j;
    }

    static CheckReport from_json(const nlohmann::ordered_json& j) {
        CheckReport r;
        r.suite = j.value("suite", "");
        r.seed = j.value("seed", std::uint64_t{42});
        if (j.contains("config")) r.config = j.at("config");
        for (const auto& cj : j.at("checks")) {
            CheckRecord c;
            c.name = cj.at("name").get<std::string>();
            c.pass = cj.at("status").get<std::string>() == "pass";
            c.value = cj.at("value").get<double>();
            c.tol = cj.at("tol").get<double>();
            c.ms = cj.at("ms").get<double>();
            r.checks.push_back(std::move(c));
        }
        return r;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "suite: " << suite << " (seed " << seed << ")\n";
        for (const auto& c : checks) {
            os << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  value=" << c.value
               << " tol=" << c.tol << " (" << c.ms << " ms)\n";
        }
        os << (pass() ? "ALL PASS" : "FAILURES PRESENT") << "\n";
        return os.str();
    }
};

// Several reports from one CLI invocation, serialized together.
inline nlohmann::ordered_json reports_to_json(const std::vector<CheckReport>& reports) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(r.to_json());
    return arr;
}

inline std::vector<CheckReport> reports_from_json(const nlohmann::ordered_json& arr) {
    std::vector<CheckReport> out;
    for (const auto& j : arr) out.push_back(CheckReport::from_json(j));
    return out;
}

}  // namespace bevkit
