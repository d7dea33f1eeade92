// scene_io.hpp - scene directory layout.
//
// A scene is a directory holding:
//   gt.uvol            ground truth mask as a probability grid of 0/1
//   sample_000.uvol..  T prediction samples (probability)
//   var_000.uvol..     T learned-variance samples (optional, all or none)
//   provenance.json    planted-lesion parameters (optional, audit only)
#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesionuq/errors.hpp"
#include "lesionuq/lesion.hpp"
#include "lesionuq/phantom.hpp"
#include "lesionuq/uvol.hpp"
#include "lesionuq/volume.hpp"

namespace lesionuq {

inline std::string sample_filename(const char* prefix, int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03d.uvol", prefix, t);
    return std::string(buf);
}

inline void save_scene(const PhantomScene& scene, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create scene dir " + dir.string() + " (" + ec.message() + ")");

    const Dims& d = scene.gt.dims();
    std::vector<float> gt_vals(d.voxel_count());
    for (std::uint64_t i = 0; i < gt_vals.size(); ++i) {
        gt_vals[i] = scene.gt.test(i) ? 1.0f : 0.0f;
    }
    save_volume(VoxelGrid(d, GridKind::probability, std::move(gt_vals)), dir / "gt.uvol");

    const auto& preds = scene.stack.predictions();
    for (std::size_t t = 0; t < preds.size(); ++t) {
        save_volume(preds[t], dir / sample_filename("sample", static_cast<int>(t)));
    }
    if (scene.stack.has_variances()) {
        const auto& vars = scene.stack.variances();
        for (std::size_t t = 0; t < vars.size(); ++t) {
            save_volume(vars[t], dir / sample_filename("var", static_cast<int>(t)));
        }
    }
    nlohmann::json prov;
    nlohmann::json lesions = nlohmann::json::array();
    for (const auto& p : scene.provenance) lesions.push_back(to_json(p));
    prov["lesions"] = std::move(lesions);
    write_file_bytes_atomic(dir / "provenance.json", prov.dump(2) + "\n");
}

struct LoadedScene {
    LabelMask gt;
    SampleStack stack;
};

inline LoadedScene load_scene(const std::filesystem::path& dir) {
    const auto gt_path = dir / "gt.uvol";
    if (!std::filesystem::exists(gt_path)) {
        throw io_error("scene dir " + dir.string() + " is missing gt.uvol");
    }
    const VoxelGrid gt_grid = load_volume(gt_path);
    LabelMask gt = binarize(gt_grid, 0.5);

    std::vector<VoxelGrid> predictions;
    for (int t = 0;; ++t) {
        const auto path = dir / sample_filename("sample", t);
        if (!std::filesystem::exists(path)) break;
        predictions.push_back(load_volume(path));
    }
    if (predictions.empty()) {
        throw io_error("scene dir " + dir.string() + " has no sample_000.uvol");
    }
    std::optional<std::vector<VoxelGrid>> variances;
    if (std::filesystem::exists(dir / sample_filename("var", 0))) {
        std::vector<VoxelGrid> vars;
        for (int t = 0; t < static_cast<int>(predictions.size()); ++t) {
            const auto path = dir / sample_filename("var", t);
            if (!std::filesystem::exists(path)) {
                throw io_error("scene dir " + dir.string() + " is missing " +
                               sample_filename("var", t) + " (variance files must cover all samples)");
            }
            vars.push_back(load_volume(path));
        }
        variances = std::move(vars);
    }
    return LoadedScene{std::move(gt), SampleStack(std::move(predictions), std::move(variances))};
}

// Expand an --in argument: either a scene dir itself or a parent whose
// scene_* children are the scenes, sorted by name for a stable order.
inline std::vector<std::filesystem::path> resolve_scene_dirs(
    const std::vector<std::string>& args) {
    std::vector<std::filesystem::path> out;
    for (const auto& arg : args) {
        const std::filesystem::path p(arg);
        if (std::filesystem::exists(p / "gt.uvol")) {
            out.push_back(p);
            continue;
        }
        std::vector<std::filesystem::path> children;
        if (std::filesystem::is_directory(p)) {
            for (const auto& entry : std::filesystem::directory_iterator(p)) {
                if (entry.is_directory() &&
                    std::filesystem::exists(entry.path() / "gt.uvol")) {
                    children.push_back(entry.path());
                }
            }
        }
        if (children.empty()) {
            throw argument_error(arg + " is neither a scene dir nor a directory of scenes");
        }
        std::sort(children.begin(), children.end());
        out.insert(out.end(), children.begin(), children.end());
    }
    return out;
}

} // namespace lesionuq
