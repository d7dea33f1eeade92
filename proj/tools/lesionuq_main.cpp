// lesionuq_main.cpp - the lesionuq command-line tool.
//
// Subcommands: generate, uncertainty, detect, evaluate, train-toy,
// predict-toy, stats. Every run writes a manifest.json next to its outputs;
// re-running with the same arguments and inputs reproduces every output
// byte for byte (wall time in the manifest aside). LESIONUQ_THREADS caps
// worker threads.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lesionuq/lesionuq.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunContext {
    lesionuq::RunManifest manifest;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
    fs::path out_dir;

    void finish() {
        const auto elapsed = std::chrono::steady_clock::now() - started;
        manifest.wall_time_seconds = std::chrono::duration<double>(elapsed).count();
        lesionuq::write_manifest(manifest, out_dir / "manifest.json");
    }
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw lesionuq::io_error("cannot create directory " + dir.string() + " (" +
                                 ec.message() + ")");
    }
}

std::string scene_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%03d", index);
    return std::string(buf);
}

lesionuq::Config load_config_or_default(const std::string& path) {
    if (path.empty()) return lesionuq::Config::parse("config_version = 1", "<defaults>");
    return lesionuq::Config::load(path);
}

std::vector<lesionuq::Measure> parse_measures(const std::vector<std::string>& names,
                                              bool default_all) {
    std::vector<lesionuq::Measure> out;
    for (const auto& n : names) out.push_back(lesionuq::parse_measure(n));
    if (out.empty() && default_all) {
        out = {lesionuq::Measure::entropy, lesionuq::Measure::mutual_info,
               lesionuq::Measure::sample_var, lesionuq::Measure::pred_var};
    }
    if (out.empty()) throw lesionuq::argument_error("no measures requested");
    return out;
}

// --- generate ---------------------------------------------------------------

int cmd_generate(const std::string& config_path, const std::string& out, int scenes_flag,
                 std::int64_t seed_flag, RunContext& ctx) {
    const lesionuq::Config cfg = load_config_or_default(config_path);
    lesionuq::PhantomConfig phantom = lesionuq::phantom_config_from(cfg);
    int n_scenes = static_cast<int>(cfg.get_int("scenes", 1));
    cfg.reject_unknown_keys();
    if (scenes_flag > 0) n_scenes = scenes_flag;
    if (seed_flag >= 0) phantom.seed = static_cast<std::uint64_t>(seed_flag);
    if (n_scenes < 1) throw lesionuq::argument_error("generate: need at least one scene");

    ctx.out_dir = out;
    ensure_dir(ctx.out_dir);
    if (!config_path.empty()) ctx.manifest.inputs.push_back(config_path);
    ctx.manifest.config = lesionuq::to_json(phantom);
    ctx.manifest.config["scenes"] = n_scenes;

    std::vector<fs::path> dirs(n_scenes);
    for (int i = 0; i < n_scenes; ++i) {
        dirs[i] = n_scenes == 1 ? ctx.out_dir : ctx.out_dir / scene_dir_name(i);
    }
    lesionuq::parallel_for(static_cast<std::size_t>(n_scenes), [&](std::size_t i) {
        lesionuq::PhantomConfig scene_cfg = phantom;
        scene_cfg.seed = phantom.seed + i;
        const lesionuq::PhantomScene scene = lesionuq::generate_scene(scene_cfg);
        lesionuq::save_scene(scene, dirs[i]);
    });
    for (const auto& d : dirs) ctx.manifest.outputs.push_back(d.string());
    return 0;
}

// --- uncertainty ------------------------------------------------------------

int cmd_uncertainty(const std::string& in, const std::string& out,
                    const std::vector<std::string>& measure_names, RunContext& ctx) {
    const fs::path scene_dir(in);
    const fs::path out_dir = out.empty() ? scene_dir : fs::path(out);
    ctx.out_dir = out_dir;
    ensure_dir(out_dir);
    ctx.manifest.inputs.push_back(in);

    const lesionuq::LoadedScene scene = lesionuq::load_scene(scene_dir);
    std::vector<lesionuq::Measure> measures;
    if (measure_names.empty()) {
        measures = {lesionuq::Measure::entropy, lesionuq::Measure::mutual_info,
                    lesionuq::Measure::sample_var};
        if (scene.stack.has_variances()) measures.push_back(lesionuq::Measure::pred_var);
    } else {
        measures = parse_measures(measure_names, false);
    }
    for (const auto m : measures) {
        if (m == lesionuq::Measure::pred_var && !scene.stack.has_variances()) {
            throw lesionuq::argument_error(
                "pred_var requested but " + in + " has no var_* sample files");
        }
    }
    ctx.manifest.config["measures"] = json::array();
    for (const auto m : measures) ctx.manifest.config["measures"].push_back(lesionuq::to_string(m));

    // The consensus probability map rides along; detect/evaluate read it.
    const lesionuq::VoxelGrid mean = lesionuq::mean_prediction(scene.stack);
    lesionuq::save_volume(mean, out_dir / "mean.uvol");
    ctx.manifest.outputs.push_back((out_dir / "mean.uvol").string());
    for (const auto m : measures) {
        lesionuq::VoxelGrid grid = [&] {
            switch (m) {
                case lesionuq::Measure::entropy: return lesionuq::predictive_entropy(scene.stack);
                case lesionuq::Measure::mutual_info:
                    return lesionuq::mutual_information(scene.stack);
                case lesionuq::Measure::sample_var:
                    return lesionuq::mc_sample_variance(scene.stack);
                default: return lesionuq::predictive_variance(scene.stack);
            }
        }();
        const fs::path path = out_dir / (std::string(lesionuq::to_string(m)) + ".uvol");
        lesionuq::save_volume(grid, path);
        ctx.manifest.outputs.push_back(path.string());
    }
    return 0;
}

// --- detect -----------------------------------------------------------------

int cmd_detect(const std::string& in, double theta, const std::string& out, RunContext& ctx) {
    const fs::path scene_dir(in);
    const fs::path out_dir = out.empty() ? scene_dir : fs::path(out);
    ctx.out_dir = out_dir;
    ensure_dir(out_dir);
    ctx.manifest.inputs.push_back(in);
    ctx.manifest.config["theta"] = theta;

    const lesionuq::LoadedScene scene = lesionuq::load_scene(scene_dir);
    const lesionuq::VoxelGrid mean = lesionuq::mean_prediction(scene.stack);
    const lesionuq::LesionSet candidates =
        lesionuq::connected_components_18(lesionuq::binarize(mean, theta));
    const lesionuq::LesionSet gt =
        lesionuq::prune_ground_truth(lesionuq::connected_components_18(scene.gt));
    const lesionuq::MatchResult match = lesionuq::match_lesions(candidates, gt);

    lesionuq::write_file_bytes_atomic(out_dir / "candidates.json",
                                      lesionuq::to_json(candidates).dump(2) + "\n");
    lesionuq::write_file_bytes_atomic(out_dir / "match.json",
                                      lesionuq::to_json(match).dump(2) + "\n");
    ctx.manifest.outputs.push_back((out_dir / "candidates.json").string());
    ctx.manifest.outputs.push_back((out_dir / "match.json").string());
    return 0;
}

// --- evaluate ---------------------------------------------------------------

int cmd_evaluate(const std::vector<std::string>& scene_args,
                 const std::vector<std::string>& measure_names, std::vector<double> etas,
                 std::vector<double> thetas, const std::string& level_name,
                 const std::vector<std::string>& bin_names, const std::string& out,
                 RunContext& ctx) {
    const std::vector<fs::path> scene_dirs = lesionuq::resolve_scene_dirs(scene_args);
    const std::vector<lesionuq::Measure> measures = parse_measures(measure_names, true);
    const lesionuq::Level level = lesionuq::parse_level(level_name);
    if (etas.empty()) {
        etas = {0.9999, 0.9995, 0.999, 0.9985, 0.998, 0.9975, 0.997, 0.996, 0.995,
                0.993,  0.99,   0.985, 0.98,   0.97,  0.95,   0.9,   0.8,   0.5};
    }
    if (thetas.empty()) thetas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    std::vector<std::string> bins = bin_names;
    if (bins.empty()) bins = {"all", "small", "medium", "large"};
    const auto bin_wanted = [&](lesionuq::BinFilter b) {
        for (const auto& name : bins) {
            if (name == lesionuq::to_string(b)) return true;
        }
        return false;
    };

    ctx.out_dir = out;
    ensure_dir(ctx.out_dir);
    ctx.manifest.config["measures"] = json::array();
    for (const auto m : measures) ctx.manifest.config["measures"].push_back(lesionuq::to_string(m));
    ctx.manifest.config["etas"] = etas;
    ctx.manifest.config["thetas"] = thetas;
    ctx.manifest.config["level"] = level_name;
    ctx.manifest.config["bins"] = bins;

    // Each scene must already carry mean.uvol and the requested measure
    // maps (the uncertainty subcommand's outputs).
    std::vector<lesionuq::ScanInput> scans;
    for (const auto& dir : scene_dirs) {
        ctx.manifest.inputs.push_back(dir.string());
        const fs::path mean_path = dir / "mean.uvol";
        if (!fs::exists(mean_path)) {
            throw lesionuq::io_error("missing " + mean_path.string() +
                                     "; run `lesionuq uncertainty` over the scene first");
        }
        lesionuq::VoxelGrid mean = lesionuq::load_volume(mean_path);
        const lesionuq::LoadedScene scene = lesionuq::load_scene(dir);
        auto load_map = [&](lesionuq::Measure m) {
            const fs::path path = dir / (std::string(lesionuq::to_string(m)) + ".uvol");
            if (!fs::exists(path)) {
                throw lesionuq::io_error("missing " + path.string() +
                                         "; run `lesionuq uncertainty` over the scene first");
            }
            return lesionuq::load_volume(path);
        };
        const auto wanted = [&](lesionuq::Measure m) {
            for (const auto mm : measures) {
                if (mm == m) return true;
            }
            return false;
        };
        lesionuq::UncertaintyMaps maps{
            wanted(lesionuq::Measure::entropy) ? load_map(lesionuq::Measure::entropy)
                                               : lesionuq::VoxelGrid(mean.dims(),
                                                                     lesionuq::GridKind::uncertainty),
            wanted(lesionuq::Measure::mutual_info) ? load_map(lesionuq::Measure::mutual_info)
                                                   : lesionuq::VoxelGrid(mean.dims(),
                                                                         lesionuq::GridKind::uncertainty),
            wanted(lesionuq::Measure::sample_var) ? load_map(lesionuq::Measure::sample_var)
                                                  : lesionuq::VoxelGrid(mean.dims(),
                                                                        lesionuq::GridKind::uncertainty),
            std::nullopt};
        if (wanted(lesionuq::Measure::pred_var)) maps.pred_var = load_map(lesionuq::Measure::pred_var);
        scans.push_back(lesionuq::ScanInput{std::move(mean), scene.gt, std::move(maps)});
    }

    lesionuq::RocTable table;
    for (const auto m : measures) {
        const lesionuq::RocTable part = lesionuq::roc_sweep(scans, m, level, etas, thetas);
        for (const auto& row : part.rows) {
            if (bin_wanted(row.bin)) table.rows.push_back(row);
        }
    }
    lesionuq::write_file_bytes_atomic(ctx.out_dir / "roc.csv", lesionuq::to_csv(table));
    lesionuq::write_file_bytes_atomic(ctx.out_dir / "roc.json",
                                      lesionuq::to_json(table).dump(2) + "\n");
    ctx.manifest.outputs.push_back((ctx.out_dir / "roc.csv").string());
    ctx.manifest.outputs.push_back((ctx.out_dir / "roc.json").string());
    return 0;
}

// --- train-toy / predict-toy ------------------------------------------------

int cmd_train_toy(const std::string& config_path, const std::string& out, RunContext& ctx) {
    const lesionuq::Config cfg = load_config_or_default(config_path);
    const lesionuq::ToyRunConfig toy = lesionuq::toy_config_from(cfg);
    cfg.reject_unknown_keys();
    ctx.out_dir = out;
    ensure_dir(ctx.out_dir);
    if (!config_path.empty()) ctx.manifest.inputs.push_back(config_path);
    ctx.manifest.config = lesionuq::to_json(toy);

    const lesionuq::ToyDataset data =
        lesionuq::make_toy_dataset(toy.grid_n, toy.patch_dim, toy.flip_rate, toy.data_seed);
    lesionuq::ToyNet net = lesionuq::ToyNet::init(toy.patch_dim * toy.patch_dim, toy.hidden_dim,
                                                  toy.dropout_p, toy.train.seed);
    const std::vector<double> trace = lesionuq::train(net, data, toy.train);

    lesionuq::save_toynet(net, ctx.out_dir / "weights.tnet");
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        csv += std::to_string(i);
        csv.push_back(',');
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof(buf), trace[i]);
        csv.append(buf, res.ptr);
        csv.push_back('\n');
    }
    lesionuq::write_file_bytes_atomic(ctx.out_dir / "loss.csv", csv);
    ctx.manifest.outputs.push_back((ctx.out_dir / "weights.tnet").string());
    ctx.manifest.outputs.push_back((ctx.out_dir / "loss.csv").string());
    return 0;
}

int cmd_predict_toy(const std::string& weights_path, const std::string& config_path,
                    const std::string& out, RunContext& ctx) {
    const lesionuq::Config cfg = load_config_or_default(config_path);
    const lesionuq::ToyRunConfig toy = lesionuq::toy_config_from(cfg);
    cfg.reject_unknown_keys();
    ctx.out_dir = out;
    ensure_dir(ctx.out_dir);
    ctx.manifest.inputs.push_back(weights_path);
    if (!config_path.empty()) ctx.manifest.inputs.push_back(config_path);
    ctx.manifest.config = lesionuq::to_json(toy);

    const lesionuq::ToyNet net = lesionuq::load_toynet(weights_path);
    const lesionuq::ToyDataset data =
        lesionuq::make_toy_dataset(toy.grid_n, toy.patch_dim, toy.flip_rate, toy.data_seed);
    if (net.input_dim != toy.patch_dim * toy.patch_dim) {
        throw lesionuq::argument_error("weights expect input_dim " +
                                       std::to_string(net.input_dim) + " but patch_dim " +
                                       std::to_string(toy.patch_dim) + " gives " +
                                       std::to_string(toy.patch_dim * toy.patch_dim));
    }
    const lesionuq::SampleStack stack =
        lesionuq::mc_predict(net, data, toy.t_predict, toy.predict_seed);

    const lesionuq::Dims dims = stack.dims();
    std::vector<float> gt_vals(dims.voxel_count());
    std::vector<float> region_vals(dims.voxel_count());
    for (std::size_t i = 0; i < data.cells(); ++i) {
        gt_vals[i] = data.true_labels[i] ? 1.0f : 0.0f;
        region_vals[i] = data.noisy[i] ? 1.0f : 0.0f;
    }
    lesionuq::save_volume(lesionuq::VoxelGrid(dims, lesionuq::GridKind::probability,
                                              std::move(gt_vals)),
                          ctx.out_dir / "gt.uvol");
    lesionuq::save_volume(lesionuq::VoxelGrid(dims, lesionuq::GridKind::raw,
                                              std::move(region_vals)),
                          ctx.out_dir / "region.uvol");
    ctx.manifest.outputs.push_back((ctx.out_dir / "gt.uvol").string());
    ctx.manifest.outputs.push_back((ctx.out_dir / "region.uvol").string());
    for (std::size_t t = 0; t < stack.predictions().size(); ++t) {
        const auto name = lesionuq::sample_filename("sample", static_cast<int>(t));
        lesionuq::save_volume(stack.predictions()[t], ctx.out_dir / name);
        ctx.manifest.outputs.push_back((ctx.out_dir / name).string());
    }
    for (std::size_t t = 0; t < stack.variances().size(); ++t) {
        const auto name = lesionuq::sample_filename("var", static_cast<int>(t));
        lesionuq::save_volume(stack.variances()[t], ctx.out_dir / name);
        ctx.manifest.outputs.push_back((ctx.out_dir / name).string());
    }
    return 0;
}

// --- stats ------------------------------------------------------------------

int cmd_stats(const std::vector<std::string>& scene_args, const std::string& out,
              RunContext& ctx) {
    const std::vector<fs::path> scene_dirs = lesionuq::resolve_scene_dirs(scene_args);
    ctx.out_dir = out;
    ensure_dir(ctx.out_dir);

    std::vector<lesionuq::PhantomScene> scenes;
    for (const auto& dir : scene_dirs) {
        ctx.manifest.inputs.push_back(dir.string());
        lesionuq::LoadedScene s = lesionuq::load_scene(dir);
        scenes.push_back(
            lesionuq::PhantomScene{std::move(s.gt), std::move(s.stack), {}});
    }
    const lesionuq::SceneStatistics st = lesionuq::scene_statistics(scenes);
    lesionuq::write_file_bytes_atomic(ctx.out_dir / "stats.json",
                                      lesionuq::to_json(st).dump(2) + "\n");
    ctx.manifest.outputs.push_back((ctx.out_dir / "stats.json").string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"lesionuq: MC dropout uncertainty for lesion segmentation and detection"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate phantom scenes");
    std::string gen_config, gen_out;
    int gen_scenes = 0;
    std::int64_t gen_seed = -1;
    gen->add_option("--config", gen_config, "Phantom config file");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--scenes", gen_scenes, "Scene count (overrides config)");
    gen->add_option("--seed", gen_seed, "Base seed (overrides config)");

    // uncertainty
    auto* unc = app.add_subcommand("uncertainty", "Compute voxel uncertainty maps for a scene");
    std::string unc_in, unc_out;
    std::vector<std::string> unc_measures;
    unc->add_option("--in", unc_in, "Scene directory")->required();
    unc->add_option("--out", unc_out, "Output directory (default: the scene dir)");
    unc->add_option("--measures", unc_measures,
                    "Measures (entropy, mutual_info, sample_var, pred_var)")
        ->delimiter(',');

    // detect
    auto* det = app.add_subcommand("detect", "Extract candidates and match against ground truth");
    std::string det_in, det_out;
    double det_theta = 0.5;
    det->add_option("--in", det_in, "Scene directory")->required();
    det->add_option("--theta", det_theta, "Sigmoid threshold (default 0.5)");
    det->add_option("--out", det_out, "Output directory (default: the scene dir)");

    // evaluate
    auto* eva = app.add_subcommand("evaluate", "Sweep eta/theta and emit the ROC table");
    std::vector<std::string> eva_scenes, eva_measures, eva_bins;
    std::vector<double> eva_etas, eva_thetas;
    std::string eva_level = "lesion", eva_out;
    eva->add_option("scenes", eva_scenes, "Scene directories (or one parent directory)")
        ->required();
    eva->add_option("--measures", eva_measures, "Measures to sweep (default: all four)")
        ->delimiter(',');
    eva->add_option("--etas", eva_etas, "Uncertainty thresholds in [0,1]")->delimiter(',');
    eva->add_option("--thetas", eva_thetas, "Sigmoid thresholds in [0,1]")->delimiter(',');
    eva->add_option("--level", eva_level, "voxel or lesion (default lesion)");
    eva->add_option("--bins", eva_bins, "Size bins to emit (default all,small,medium,large)")
        ->delimiter(',');
    eva->add_option("--out", eva_out, "Output directory")->required();

    // train-toy
    auto* trn = app.add_subcommand("train-toy", "Train the toy dropout net");
    std::string trn_config, trn_out;
    trn->add_option("--config", trn_config, "Training config file");
    trn->add_option("--out", trn_out, "Output directory")->required();

    // predict-toy
    auto* prd = app.add_subcommand("predict-toy", "MC-predict with a trained toy net");
    std::string prd_weights, prd_config, prd_out;
    prd->add_option("--weights", prd_weights, "weights.tnet path")->required();
    prd->add_option("--config", prd_config, "Dataset config file (must match training)");
    prd->add_option("--out", prd_out, "Output scene directory")->required();

    // stats
    auto* sta = app.add_subcommand("stats", "Summarise scenes");
    std::vector<std::string> sta_scenes;
    std::string sta_out;
    sta->add_option("scenes", sta_scenes, "Scene directories (or one parent directory)")
        ->required();
    sta->add_option("--out", sta_out, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    RunContext ctx;
    for (int i = 0; i < argc; ++i) ctx.manifest.argv.emplace_back(argv[i]);

    try {
        int rc = 1;
        if (gen->parsed()) {
            ctx.manifest.subcommand = "generate";
            rc = cmd_generate(gen_config, gen_out, gen_scenes, gen_seed, ctx);
        } else if (unc->parsed()) {
            ctx.manifest.subcommand = "uncertainty";
            rc = cmd_uncertainty(unc_in, unc_out, unc_measures, ctx);
        } else if (det->parsed()) {
            ctx.manifest.subcommand = "detect";
            rc = cmd_detect(det_in, det_theta, det_out, ctx);
        } else if (eva->parsed()) {
            ctx.manifest.subcommand = "evaluate";
            rc = cmd_evaluate(eva_scenes, eva_measures, eva_etas, eva_thetas, eva_level, eva_bins,
                              eva_out, ctx);
        } else if (trn->parsed()) {
            ctx.manifest.subcommand = "train-toy";
            rc = cmd_train_toy(trn_config, trn_out, ctx);
        } else if (prd->parsed()) {
            ctx.manifest.subcommand = "predict-toy";
            rc = cmd_predict_toy(prd_weights, prd_config, prd_out, ctx);
        } else if (sta->parsed()) {
            ctx.manifest.subcommand = "stats";
            rc = cmd_stats(sta_scenes, sta_out, ctx);
        }
        if (rc == 0) ctx.finish();
        return rc;
    } catch (const lesionuq::error& e) {
        std::cerr << "lesionuq: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "lesionuq: unexpected error: " << e.what() << "\n";
        return 1;
    }
}
