// matching.hpp - lesion-level correspondence between candidates and truth.
//
// The rule, applied per evaluation:
//   * Every candidate lesion is dilated by one 18-connected shell. D is the
//     union of all dilated candidates.
//   * A ground-truth lesion g is detected iff |D inter g| >= 3 or
//     |D inter g| > |g| / 2 (strictly).
//   * A candidate is matched iff its own dilated shell touches any
//     ground-truth voxel. An unmatched candidate of 3+ voxels is a false
//     positive; an unmatched candidate of 1-2 voxels is ignored: too small
//     to be penalised, though it still contributes to D and can help detect.
//   * tp and fn count ground-truth lesions, binned by the truth lesion's
//     size; fp counts candidates, binned by the candidate's size.
//
// Ground truth must already be pruned (no lesion under 3 voxels); passing
// an unpruned set is a pipeline bug and throws.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesionuq/errors.hpp"
#include "lesionuq/lesion.hpp"
#include "lesionuq/volume.hpp"

namespace lesionuq {

enum class GtOutcome : std::uint8_t { detected, missed };
enum class CandidateOutcome : std::uint8_t { matched, false_positive, ignored };

inline const char* to_string(GtOutcome o) {
    return o == GtOutcome::detected ? "detected" : "missed";
}

inline const char* to_string(CandidateOutcome o) {
    switch (o) {
        case CandidateOutcome::matched: return "matched";
        case CandidateOutcome::false_positive: return "false_positive";
        case CandidateOutcome::ignored: return "ignored";
    }
    return "unknown";
}

struct BinCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    bool operator==(const BinCounts&) const = default;
};

struct MatchResult {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    BinCounts small;
    BinCounts medium;
    BinCounts large;
    std::vector<GtOutcome> gt_outcomes;               // indexed by truth lesion id
    std::vector<CandidateOutcome> candidate_outcomes; // indexed by candidate id

    BinCounts& bin(SizeBin b) {
        switch (b) {
            case SizeBin::small: return small;
            case SizeBin::medium: return medium;
            case SizeBin::large: return large;
            case SizeBin::subthreshold: break;
        }
        throw argument_error("MatchResult: no counts bucket for subthreshold lesions");
    }

    const BinCounts& bin(SizeBin b) const {
        return const_cast<MatchResult*>(this)->bin(b);
    }
};

inline MatchResult match_lesions(const LesionSet& candidates, const LesionSet& gt) {
    if (!(candidates.dims == gt.dims)) {
        throw argument_error("match_lesions: candidate dims " + candidates.dims.describe() +
                             " do not match ground truth dims " + gt.dims.describe());
    }
    const Dims& d = gt.dims;
    const std::uint64_t n = d.voxel_count();

    // Stamp truth ids (+1 so 0 stays background) for O(1) overlap lookups.
    std::vector<std::int32_t> gt_label(n, 0);
    for (const auto& g : gt.lesions) {
        if (g.size() < 3) {
            throw argument_error("match_lesions: ground truth lesion " + std::to_string(g.id) +
                                 " has " + std::to_string(g.size()) +
                                 " voxels; run prune_ground_truth first");
        }
        for (const auto& v : g.voxels) {
            auto& slot = gt_label[d.index(v.x, v.y, v.z)];
            if (slot != 0) {
                throw validation_error("match_lesions: ground truth lesions overlap at voxel (" +
                                       std::to_string(v.x) + "," + std::to_string(v.y) + "," +
                                       std::to_string(v.z) + ")");
            }
            slot = g.id + 1;
        }
    }

    MatchResult result;
    result.gt_outcomes.assign(gt.lesions.size(), GtOutcome::missed);
    result.candidate_outcomes.assign(candidates.lesions.size(), CandidateOutcome::ignored);

    // One pass per candidate over its dilated shell: record whether it
    // touches truth at all, and grow |D inter g| per truth lesion with the
    // union deduplicated through in_union.
    std::vector<std::uint8_t> in_union(n, 0);
    std::vector<std::int64_t> overlap(gt.lesions.size(), 0);
    for (const auto& c : candidates.lesions) {
        bool touches_truth = false;
        for (const std::uint64_t idx : dilate_18(c, d)) {
            const std::int32_t label = gt_label[idx];
            if (label != 0) touches_truth = true;
            if (!in_union[idx]) {
                in_union[idx] = 1;
                if (label != 0) ++overlap[static_cast<std::size_t>(label - 1)];
            }
        }
        const auto cid = static_cast<std::size_t>(c.id);
        if (touches_truth) {
            result.candidate_outcomes[cid] = CandidateOutcome::matched;
        } else if (c.size() >= 3) {
            result.candidate_outcomes[cid] = CandidateOutcome::false_positive;
            ++result.fp;
            ++result.bin(c.bin()).fp;
        } // else stays ignored
    }

    for (const auto& g : gt.lesions) {
        const std::int64_t ov = overlap[static_cast<std::size_t>(g.id)];
        const auto size = static_cast<std::int64_t>(g.size());
        // ov > size/2 done in integers: 2*ov > size keeps the comparison
        // exact and strict.
        const bool detected = ov >= 3 || 2 * ov > size;
        if (detected) {
            result.gt_outcomes[static_cast<std::size_t>(g.id)] = GtOutcome::detected;
            ++result.tp;
            ++result.bin(g.bin()).tp;
        } else {
            ++result.fn;
            ++result.bin(g.bin()).fn;
        }
    }
    return result;
}

// tpr = tp / (tp + fn), fdr = fp / (tp + fp). Either is absent when its
// denominator is zero; nobody downstream should invent a number there.
struct DetectionRates {
    std::optional<double> tpr;
    std::optional<double> fdr;
};

inline DetectionRates rates_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    DetectionRates r;
    if (tp + fn > 0) r.tpr = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tp + fp > 0) r.fdr = static_cast<double>(fp) / static_cast<double>(tp + fp);
    return r;
}

inline DetectionRates detection_rates(const MatchResult& m) {
    return rates_from_counts(m.tp, m.fp, m.fn);
}

inline nlohmann::json to_json(const MatchResult& m) {
    nlohmann::json j;
    j["tp"] = m.tp;
    j["fp"] = m.fp;
    j["fn"] = m.fn;
    for (const SizeBin b : {SizeBin::small, SizeBin::medium, SizeBin::large}) {
        const BinCounts& c = m.bin(b);
        j["bins"][to_string(b)] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
    }
    nlohmann::json gt = nlohmann::json::object();
    for (std::size_t i = 0; i < m.gt_outcomes.size(); ++i) {
        gt[std::to_string(i)] = to_string(m.gt_outcomes[i]);
    }
    j["gt_outcomes"] = std::move(gt);
    nlohmann::json cand = nlohmann::json::object();
    for (std::size_t i = 0; i < m.candidate_outcomes.size(); ++i) {
        cand[std::to_string(i)] = to_string(m.candidate_outcomes[i]);
    }
    j["candidate_outcomes"] = std::move(cand);
    const DetectionRates r = detection_rates(m);
    j["tpr"] = r.tpr ? nlohmann::json(*r.tpr) : nlohmann::json(nullptr);
    j["fdr"] = r.fdr ? nlohmann::json(*r.fdr) : nlohmann::json(nullptr);
    return j;
}

} // namespace lesionuq
