// uncertainty.hpp - voxel-wise uncertainty measures over an MC sample stack.
//
// Four measures, each a map over the same grid:
//   entropy     H(p_bar) of the mean prediction, natural log, 0*ln 0 == 0.
//   mutual_info H(p_bar) minus the mean per-sample entropy. Nonnegative in
//               exact arithmetic; tiny negative float residue in [-1e-9, 0)
//               is clamped to zero, anything more negative is a bug and is
//               allowed to trip the grid invariant.
//   sample_var  population variance (divide by T) of the per-sample
//               probabilities.
//   pred_var    mean over samples of the model's own learned variance grids;
//               only defined when the stack carries them.
//
// Accumulation is double throughout; results round to float32 once per
// voxel. Sample order is t = 0..T-1 everywhere so results are reproducible
// to the bit.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lesionuq/errors.hpp"
#include "lesionuq/volume.hpp"

namespace lesionuq {

enum class Measure { entropy, mutual_info, sample_var, pred_var };

inline const char* to_string(Measure m) {
    switch (m) {
        case Measure::entropy: return "entropy";
        case Measure::mutual_info: return "mutual_info";
        case Measure::sample_var: return "sample_var";
        case Measure::pred_var: return "pred_var";
    }
    return "unknown";
}

// Accepts the canonical names plus the short forms people actually type.
inline Measure parse_measure(const std::string& name) {
    if (name == "entropy") return Measure::entropy;
    if (name == "mutual_info" || name == "mi") return Measure::mutual_info;
    if (name == "sample_var" || name == "mcvar") return Measure::sample_var;
    if (name == "pred_var" || name == "predvar") return Measure::pred_var;
    throw argument_error("unknown measure \"" + name +
                         "\" (expected entropy, mutual_info, sample_var or pred_var)");
}

// Binary entropy in nats with the 0*ln 0 == 0 convention.
inline double binary_entropy(double p) {
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    const double q = 1.0 - p;
    if (q > 0.0) h -= q * std::log(q);
    return h;
}

inline VoxelGrid predictive_entropy(const SampleStack& stack) {
    const auto& preds = stack.predictions();
    const std::uint64_t n = preds.front().voxel_count();
    const double inv_t = 1.0 / static_cast<double>(preds.size());
    std::vector<float> out(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (const auto& g : preds) mean += g[i];
        out[i] = static_cast<float>(binary_entropy(mean * inv_t));
    }
    return VoxelGrid(preds.front().dims(), GridKind::uncertainty, std::move(out));
}

inline VoxelGrid mutual_information(const SampleStack& stack) {
    const auto& preds = stack.predictions();
    const std::uint64_t n = preds.front().voxel_count();
    const double inv_t = 1.0 / static_cast<double>(preds.size());
    std::vector<float> out(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        double mean = 0.0;
        double mean_h = 0.0;
        for (const auto& g : preds) {
            const double p = g[i];
            mean += p;
            mean_h += binary_entropy(p);
        }
        double mi = binary_entropy(mean * inv_t) - mean_h * inv_t;
        if (mi < 0.0 && mi >= -1e-9) mi = 0.0;
        out[i] = static_cast<float>(mi);
    }
    return VoxelGrid(preds.front().dims(), GridKind::uncertainty, std::move(out));
}

inline VoxelGrid mc_sample_variance(const SampleStack& stack) {
    const auto& preds = stack.predictions();
    const std::uint64_t n = preds.front().voxel_count();
    const double inv_t = 1.0 / static_cast<double>(preds.size());
    std::vector<float> out(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (const auto& g : preds) mean += g[i];
        mean *= inv_t;
        double acc = 0.0;
        for (const auto& g : preds) {
            const double d = g[i] - mean;
            acc += d * d;
        }
        out[i] = static_cast<float>(acc * inv_t);
    }
    return VoxelGrid(preds.front().dims(), GridKind::uncertainty, std::move(out));
}

inline VoxelGrid predictive_variance(const SampleStack& stack) {
    if (!stack.has_variances()) {
        throw argument_error("predictive_variance: sample stack has no learned "
                             "variance grids");
    }
    const auto& vars = stack.variances();
    const std::uint64_t n = vars.front().voxel_count();
    const double inv_t = 1.0 / static_cast<double>(vars.size());
    std::vector<float> out(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (const auto& g : vars) acc += g[i];
        out[i] = static_cast<float>(acc * inv_t);
    }
    return VoxelGrid(vars.front().dims(), GridKind::uncertainty, std::move(out));
}

struct UncertaintyMaps {
    VoxelGrid entropy;
    VoxelGrid mutual_info;
    VoxelGrid sample_var;
    std::optional<VoxelGrid> pred_var;

    const VoxelGrid& by_measure(Measure m) const {
        switch (m) {
            case Measure::entropy: return entropy;
            case Measure::mutual_info: return mutual_info;
            case Measure::sample_var: return sample_var;
            case Measure::pred_var:
                if (!pred_var) {
                    throw argument_error("pred_var map not available for this stack");
                }
                return *pred_var;
        }
        throw argument_error("unknown measure");
    }
};

inline UncertaintyMaps compute_uncertainty_maps(const SampleStack& stack) {
    UncertaintyMaps maps{predictive_entropy(stack), mutual_information(stack),
                         mc_sample_variance(stack), std::nullopt};
    if (stack.has_variances()) maps.pred_var = predictive_variance(stack);
    return maps;
}

} // namespace lesionuq
