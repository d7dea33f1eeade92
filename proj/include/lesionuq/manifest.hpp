// manifest.hpp - one manifest per CLI run.
//
// The manifest records everything needed to reproduce the run: subcommand,
// arguments, the effective config (after defaults), seeds, and the input
// and output paths. Re-running with the same arguments and inputs must
// produce byte-identical outputs; only the wall_time_seconds field is
// allowed to differ between such runs.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesionuq/uvol.hpp"
#include "lesionuq/version.hpp"

namespace lesionuq {

struct RunManifest {
    std::string subcommand;
    std::vector<std::string> argv;
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_time_seconds = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["tool"] = "lesionuq";
        j["version"] = kVersion;
        j["subcommand"] = subcommand;
        j["argv"] = argv;
        j["config"] = config;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["wall_time_seconds"] = wall_time_seconds;
        return j;
    }
};

inline void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    write_file_bytes_atomic(path, manifest.to_json().dump(2) + "\n");
}

} // namespace lesionuq
