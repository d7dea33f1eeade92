// aggregate.hpp - lesion-level uncertainty, dual-threshold filtering, and
// the ROC sweep table.
//
// A lesion's uncertainty under a measure is the log-sum of its voxel
// uncertainties, floored at 1e-12 inside the log so a zero-uncertainty
// voxel stays finite. Raw log-sums are min-max rescaled to [0,1] over the
// whole evaluation cohort per measure: all candidate lesions from all scans
// and all sigmoid thresholds of one sweep share one scale, so a single eta
// means the same thing everywhere on a curve.
//
// Filtering convention: eta lives in [0,1]. An item survives when its
// scaled uncertainty is strictly below eta, except that eta == 1 retains
// everything (the top of the scale must be reachable, and the most
// uncertain item always sits at exactly 1.0). Baseline rows bypass
// filtering entirely and are tagged eta = +inf.
//
// Voxel-level counts treat filtered-out voxels as excluded from evaluation
// altogether: they appear in neither numerator nor denominator.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesionuq/errors.hpp"
#include "lesionuq/lesion.hpp"
#include "lesionuq/matching.hpp"
#include "lesionuq/parallel.hpp"
#include "lesionuq/uncertainty.hpp"
#include "lesionuq/volume.hpp"

namespace lesionuq {

inline constexpr double kLogFloor = 1e-12;

// Sum over lesion voxels of ln(max(U_i, 1e-12)).
inline double lesion_uncertainty(const Lesion& lesion, const VoxelGrid& map) {
    double acc = 0.0;
    for (const auto& v : lesion.voxels) {
        const double u = map.at(v.x, v.y, v.z);
        acc += std::log(u > kLogFloor ? u : kLogFloor);
    }
    return acc;
}

struct RescaleParams {
    double min = 0.0;
    double max = 0.0;

    double apply(double raw) const {
        if (!(max > min)) return 0.0; // degenerate cohort: everything is "certain"
        double s = (raw - min) / (max - min);
        if (s < 0.0) s = 0.0;
        if (s > 1.0) s = 1.0;
        return s;
    }
};

inline RescaleParams rescale_params(const std::vector<double>& raws) {
    if (raws.empty()) throw argument_error("rescale_params: empty cohort");
    RescaleParams p{raws.front(), raws.front()};
    for (const double r : raws) {
        p.min = std::min(p.min, r);
        p.max = std::max(p.max, r);
    }
    return p;
}

// (x - min) / (max - min) over the given cohort; a degenerate range maps
// everything to 0.
inline std::vector<double> rescale_cohort(const std::vector<double>& raws) {
    const RescaleParams p = rescale_params(raws);
    std::vector<double> out(raws.size());
    for (std::size_t i = 0; i < raws.size(); ++i) out[i] = p.apply(raws[i]);
    return out;
}

inline void check_eta(double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw argument_error("eta must lie in [0,1], got " + std::to_string(eta));
    }
}

// Scaled value survives the uncertainty cut?
inline bool retained_at(double scaled, double eta) {
    return eta >= 1.0 || scaled < eta;
}

struct VoxelFilterResult {
    LabelMask retained;  // evaluable voxels (uncertainty below eta)
    LabelMask predicted; // prob >= theta, over the whole grid
};

// Single-grid form: the cohort for rescaling is the map itself.
inline VoxelFilterResult filter_voxels(const VoxelGrid& prob, const VoxelGrid& map,
                                       double theta, double eta) {
    require_same_dims(prob.dims(), map.dims(), "filter_voxels");
    check_eta(eta);
    const auto& u = map.values();
    RescaleParams p{u.front(), u.front()};
    for (const float v : u) {
        p.min = std::min(p.min, static_cast<double>(v));
        p.max = std::max(p.max, static_cast<double>(v));
    }
    VoxelFilterResult r{LabelMask(prob.dims()), binarize(prob, theta)};
    for (std::uint64_t i = 0; i < u.size(); ++i) {
        if (retained_at(p.apply(u[i]), eta)) r.retained.set(i);
    }
    return r;
}

struct VoxelCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;
};

// Counts over evaluable voxels only.
inline VoxelCounts voxel_counts(const LabelMask& predicted, const LabelMask& gt,
                                const LabelMask& retained) {
    require_same_dims(predicted.dims(), gt.dims(), "voxel_counts");
    require_same_dims(predicted.dims(), retained.dims(), "voxel_counts");
    VoxelCounts c;
    const std::uint64_t n = predicted.dims().voxel_count();
    for (std::uint64_t i = 0; i < n; ++i) {
        if (!retained.test(i)) continue;
        const bool p = predicted.test(i);
        const bool g = gt.test(i);
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// Drop candidates whose scaled uncertainty fails the eta cut, recompact ids,
// and match the survivors. Ground truth is never filtered.
inline MatchResult filter_lesions(const LesionSet& candidates,
                                  const std::vector<double>& scaled, const LesionSet& gt,
                                  double eta) {
    check_eta(eta);
    if (scaled.size() != candidates.lesions.size()) {
        throw argument_error("filter_lesions: " + std::to_string(scaled.size()) +
                             " uncertainties for " + std::to_string(candidates.lesions.size()) +
                             " candidates");
    }
    LesionSet kept{candidates.dims, {}};
    for (std::size_t i = 0; i < candidates.lesions.size(); ++i) {
        if (!retained_at(scaled[i], eta)) continue;
        Lesion l = candidates.lesions[i];
        l.id = static_cast<int>(kept.lesions.size());
        kept.lesions.push_back(std::move(l));
    }
    return match_lesions(kept, gt);
}

enum class Level { voxel, lesion };

inline const char* to_string(Level l) { return l == Level::voxel ? "voxel" : "lesion"; }

inline Level parse_level(const std::string& name) {
    if (name == "voxel") return Level::voxel;
    if (name == "lesion") return Level::lesion;
    throw argument_error("unknown level \"" + name + "\" (expected voxel or lesion)");
}

enum class BinFilter { all, small, medium, large };

inline const char* to_string(BinFilter b) {
    switch (b) {
        case BinFilter::all: return "all";
        case BinFilter::small: return "small";
        case BinFilter::medium: return "medium";
        case BinFilter::large: return "large";
    }
    return "unknown";
}

struct RocRow {
    Measure measure = Measure::entropy;
    Level level = Level::lesion;
    BinFilter bin = BinFilter::all;
    double eta = 0.0; // +inf on baseline rows
    double theta = 0.0;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::optional<double> tpr;
    std::optional<double> fdr;
    double retention = 1.0;
};

struct RocTable {
    std::vector<RocRow> rows;
};

// One scan's worth of immutable sweep input.
struct ScanInput {
    VoxelGrid mean_prob;   // kind probability
    LabelMask gt;          // same dims
    UncertaintyMaps maps;  // at least the swept measure must be present
};

namespace detail {

struct LesionSweepScan {
    LesionSet gt;                             // pruned
    std::vector<LesionSet> candidates;        // per theta
    std::vector<std::vector<double>> raw;     // per theta, per candidate
    std::vector<std::vector<double>> scaled;  // filled after pooling
};

} // namespace detail

// Full cross-product sweep for one measure. Counts aggregate over scans.
// Rows appear theta-major, baseline (eta = +inf) before the given etas, and
// at lesion level bins in the order all, small, medium, large. Retention on
// a bin row is the retained fraction of candidates belonging to that bin.
inline RocTable roc_sweep(const std::vector<ScanInput>& scans, Measure measure, Level level,
                          const std::vector<double>& etas, const std::vector<double>& thetas) {
    if (scans.empty()) throw argument_error("roc_sweep: no scans");
    if (etas.empty() || thetas.empty()) {
        throw argument_error("roc_sweep: threshold lists must be non-empty");
    }
    for (const double e : etas) check_eta(e);
    for (const double t : thetas) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw argument_error("roc_sweep: theta must lie in [0,1], got " + std::to_string(t));
        }
    }
    for (const auto& s : scans) {
        require_same_dims(s.mean_prob.dims(), s.gt.dims(), "roc_sweep scan");
        (void)s.maps.by_measure(measure); // throws if the measure is unavailable
    }
    const double kBaseline = std::numeric_limits<double>::infinity();

    RocTable table;
    if (level == Level::voxel) {
        // Pool the rescale range over every scan's map for this measure.
        RescaleParams p{scans.front().maps.by_measure(measure)[0],
                        scans.front().maps.by_measure(measure)[0]};
        for (const auto& s : scans) {
            for (const float v : s.maps.by_measure(measure).values()) {
                p.min = std::min(p.min, static_cast<double>(v));
                p.max = std::max(p.max, static_cast<double>(v));
            }
        }
        for (const double theta : thetas) {
            std::vector<LabelMask> predicted;
            predicted.reserve(scans.size());
            for (const auto& s : scans) predicted.push_back(binarize(s.mean_prob, theta));
            for (std::size_t ei = 0; ei <= etas.size(); ++ei) {
                const bool baseline = ei == 0;
                const double eta = baseline ? kBaseline : etas[ei - 1];
                std::int64_t tp = 0, fp = 0, fn = 0;
                std::uint64_t kept = 0, total = 0;
                for (std::size_t si = 0; si < scans.size(); ++si) {
                    const auto& u = scans[si].maps.by_measure(measure).values();
                    LabelMask retained(scans[si].mean_prob.dims());
                    for (std::uint64_t i = 0; i < u.size(); ++i) {
                        if (baseline || retained_at(p.apply(u[i]), eta)) retained.set(i);
                    }
                    const VoxelCounts c = voxel_counts(predicted[si], scans[si].gt, retained);
                    tp += c.tp;
                    fp += c.fp;
                    fn += c.fn;
                    kept += retained.count_set();
                    total += u.size();
                }
                RocRow row;
                row.measure = measure;
                row.level = Level::voxel;
                row.bin = BinFilter::all;
                row.eta = eta;
                row.theta = theta;
                row.tp = tp;
                row.fp = fp;
                row.fn = fn;
                const DetectionRates r = rates_from_counts(tp, fp, fn);
                row.tpr = r.tpr;
                row.fdr = r.fdr;
                row.retention =
                    total == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(total);
                table.rows.push_back(row);
            }
        }
        return table;
    }

    // Lesion level. Candidate extraction and raw uncertainties are
    // independent per scan; do that in parallel, then pool the rescale
    // cohort over every (scan, theta) candidate.
    std::vector<detail::LesionSweepScan> prep(scans.size());
    parallel_for(scans.size(), [&](std::size_t si) {
        const auto& s = scans[si];
        detail::LesionSweepScan& out = prep[si];
        out.gt = prune_ground_truth(connected_components_18(s.gt));
        const VoxelGrid& umap = s.maps.by_measure(measure);
        for (const double theta : thetas) {
            LesionSet cands = connected_components_18(binarize(s.mean_prob, theta));
            std::vector<double> raw(cands.lesions.size());
            for (std::size_t i = 0; i < cands.lesions.size(); ++i) {
                raw[i] = lesion_uncertainty(cands.lesions[i], umap);
            }
            out.candidates.push_back(std::move(cands));
            out.raw.push_back(std::move(raw));
        }
    });

    std::vector<double> cohort;
    for (const auto& sc : prep) {
        for (const auto& raws : sc.raw) cohort.insert(cohort.end(), raws.begin(), raws.end());
    }
    RescaleParams p = cohort.empty() ? RescaleParams{0.0, 0.0} : rescale_params(cohort);
    for (auto& sc : prep) {
        for (const auto& raws : sc.raw) {
            std::vector<double> s(raws.size());
            for (std::size_t i = 0; i < raws.size(); ++i) s[i] = p.apply(raws[i]);
            sc.scaled.push_back(std::move(s));
        }
    }

    for (std::size_t ti = 0; ti < thetas.size(); ++ti) {
        for (std::size_t ei = 0; ei <= etas.size(); ++ei) {
            const bool baseline = ei == 0;
            const double eta = baseline ? kBaseline : etas[ei - 1];
            MatchResult total;
            std::uint64_t kept_all = 0, n_all = 0;
            std::uint64_t kept_bin[3] = {0, 0, 0}, n_bin[3] = {0, 0, 0};
            for (auto& sc : prep) {
                const LesionSet& cands = sc.candidates[ti];
                const std::vector<double>& scaled = sc.scaled[ti];
                LesionSet kept{cands.dims, {}};
                for (std::size_t i = 0; i < cands.lesions.size(); ++i) {
                    const SizeBin b = cands.lesions[i].bin();
                    const bool keep = baseline || retained_at(scaled[i], eta);
                    ++n_all;
                    if (b != SizeBin::subthreshold) ++n_bin[static_cast<int>(b) - 1];
                    if (!keep) continue;
                    ++kept_all;
                    if (b != SizeBin::subthreshold) ++kept_bin[static_cast<int>(b) - 1];
                    Lesion l = cands.lesions[i];
                    l.id = static_cast<int>(kept.lesions.size());
                    kept.lesions.push_back(std::move(l));
                }
                const MatchResult m = match_lesions(kept, sc.gt);
                total.tp += m.tp;
                total.fp += m.fp;
                total.fn += m.fn;
                for (const SizeBin b : {SizeBin::small, SizeBin::medium, SizeBin::large}) {
                    total.bin(b).tp += m.bin(b).tp;
                    total.bin(b).fp += m.bin(b).fp;
                    total.bin(b).fn += m.bin(b).fn;
                }
            }
            const auto make_row = [&](BinFilter bf, std::int64_t tp, std::int64_t fp,
                                      std::int64_t fn, double retention) {
                RocRow row;
                row.measure = measure;
                row.level = Level::lesion;
                row.bin = bf;
                row.eta = eta;
                row.theta = thetas[ti];
                row.tp = tp;
                row.fp = fp;
                row.fn = fn;
                const DetectionRates r = rates_from_counts(tp, fp, fn);
                row.tpr = r.tpr;
                row.fdr = r.fdr;
                row.retention = retention;
                table.rows.push_back(row);
            };
            make_row(BinFilter::all, total.tp, total.fp, total.fn,
                     n_all == 0 ? 1.0
                                : static_cast<double>(kept_all) / static_cast<double>(n_all));
            const BinFilter bfs[3] = {BinFilter::small, BinFilter::medium, BinFilter::large};
            const SizeBin sbs[3] = {SizeBin::small, SizeBin::medium, SizeBin::large};
            for (int b = 0; b < 3; ++b) {
                const BinCounts& c = total.bin(sbs[b]);
                make_row(bfs[b], c.tp, c.fp, c.fn,
                         n_bin[b] == 0
                             ? 1.0
                             : static_cast<double>(kept_bin[b]) / static_cast<double>(n_bin[b]));
            }
        }
    }
    return table;
}

namespace detail {

// Shortest round-trip decimal form; infinities print as "inf".
inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace detail

inline constexpr const char* kRocCsvHeader = "measure,level,bin,eta,theta,tp,fp,fn,tpr,fdr,retention";

// Undefined rates are left as empty fields.
inline std::string to_csv(const RocTable& table) {
    std::string out(kRocCsvHeader);
    out.push_back('\n');
    for (const auto& r : table.rows) {
        out += to_string(r.measure);
        out.push_back(',');
        out += to_string(r.level);
        out.push_back(',');
        out += to_string(r.bin);
        out.push_back(',');
        out += detail::format_double(r.eta);
        out.push_back(',');
        out += detail::format_double(r.theta);
        out.push_back(',');
        out += std::to_string(r.tp);
        out.push_back(',');
        out += std::to_string(r.fp);
        out.push_back(',');
        out += std::to_string(r.fn);
        out.push_back(',');
        if (r.tpr) out += detail::format_double(*r.tpr);
        out.push_back(',');
        if (r.fdr) out += detail::format_double(*r.fdr);
        out.push_back(',');
        out += detail::format_double(r.retention);
        out.push_back('\n');
    }
    return out;
}

// JSON mirror of the CSV. eta is the string "inf" on baseline rows (JSON
// has no infinity); undefined rates are null.
inline nlohmann::json to_json(const RocTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json j;
        j["measure"] = to_string(r.measure);
        j["level"] = to_string(r.level);
        j["bin"] = to_string(r.bin);
        j["eta"] = std::isinf(r.eta) ? nlohmann::json("inf") : nlohmann::json(r.eta);
        j["theta"] = r.theta;
        j["tp"] = r.tp;
        j["fp"] = r.fp;
        j["fn"] = r.fn;
        j["tpr"] = r.tpr ? nlohmann::json(*r.tpr) : nlohmann::json(nullptr);
        j["fdr"] = r.fdr ? nlohmann::json(*r.fdr) : nlohmann::json(nullptr);
        j["retention"] = r.retention;
        rows.push_back(std::move(j));
    }
    return nlohmann::json{{"rows", std::move(rows)}};
}

} // namespace lesionuq
