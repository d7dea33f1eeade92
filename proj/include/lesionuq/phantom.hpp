// phantom.hpp - synthetic scenes: planted ellipsoidal lesions plus a
// simulated stochastic segmenter emitting MC sample stacks.
//
// The error model is deliberately size-dependent so the downstream
// filtering experiment has signal:
//   * small lesions are missed outright more often, and roughly half of the
//     seen ones are only marginally confident (mid-range probability), so
//     the baseline small-bin TPR is low and spreads across theta;
//   * spurious blobs (false positives) appear mostly in the small bin and
//     flicker across samples (k of T samples say "lesion", the rest say
//     "background"), which makes them the most uncertain items in the scene
//     under every measure;
//   * genuine lesions answer coherently across samples: a per-sample offset
//     shifts the whole lesion at once, so regions never fragment into
//     sub-blobs at any threshold;
//   * medium/large lesions with a solid interior carry an
//     intermediate-probability boundary ring whose disagreement scales with
//     the bin's boundary_jitter; lesions that are nearly all boundary are
//     painted as solid plateaus instead, so no lesion dissolves into a
//     one-voxel remnant above the ring probability.
//
// Learned-variance grids mirror the same story: tiny values inside genuine
// lesions and background, large values on spurious blobs, intermediate on
// rings.
//
// Determinism: all draws go through one Xoshiro256** stream in the fixed
// order written out in generate_scene (counts, then per-lesion placement
// and appearance in order large, medium, small, spurious; then background;
// then per-sample grids). Normals use the Irwin-Hall 12-sum, which needs no
// libm, so scenes are bit-identical across platforms for a given seed.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesionuq/errors.hpp"
#include "lesionuq/lesion.hpp"
#include "lesionuq/rng.hpp"
#include "lesionuq/uncertainty.hpp"
#include "lesionuq/volume.hpp"

namespace lesionuq {

struct BinNoiseProfile {
    double miss_rate = 0.0;           // chance a planted lesion is invisible to the model
    double fp_rate = 0.0;             // expected spurious blobs per scene in this bin
    double boundary_jitter = 0.0;     // ring disagreement scale, in [0,1]
    double sample_disagreement = 0.0; // core disagreement scale, in [0,1]
};

struct CountRange {
    int lo = 0;
    int hi = 0;
};

struct PhantomConfig {
    Dims dims{48, 48, 16};
    int t_samples = 10;
    bool with_variance = true;
    std::uint64_t seed = 0x5eed;
    // Small count follows the target share by default; a non-negative range
    // here overrides it.
    double small_fraction = 0.40;
    CountRange small_count{-1, -1};
    CountRange medium_count{3, 4};
    CountRange large_count{2, 3};
    BinNoiseProfile small{0.35, 3.5, 0.0, 0.30};
    BinNoiseProfile medium{0.10, 0.6, 0.20, 0.18};
    BinNoiseProfile large{0.0, 0.0, 0.05, 0.08};

    void validate() const {
        if (dims.nx < 8 || dims.ny < 8 || dims.nz < 8) {
            throw validation_error("PhantomConfig: each dimension must be >= 8, got " +
                                   dims.describe());
        }
        if (t_samples < 1) throw validation_error("PhantomConfig: t_samples must be >= 1");
        if (!(small_fraction >= 0.0 && small_fraction < 1.0)) {
            throw validation_error("PhantomConfig: small_fraction must lie in [0,1)");
        }
        const auto check_range = [](const CountRange& r, const char* name, bool allow_auto) {
            if (allow_auto && r.lo < 0 && r.hi < 0) return;
            if (r.lo < 0 || r.hi < r.lo) {
                throw validation_error(std::string("PhantomConfig: bad count range for ") + name);
            }
        };
        check_range(small_count, "small", true);
        check_range(medium_count, "medium", false);
        check_range(large_count, "large", false);
        for (const auto* p : {&small, &medium, &large}) {
            if (!(p->miss_rate >= 0.0 && p->miss_rate <= 1.0) ||
                !(p->boundary_jitter >= 0.0 && p->boundary_jitter <= 1.0) ||
                !(p->sample_disagreement >= 0.0 && p->sample_disagreement <= 1.0) ||
                !(p->fp_rate >= 0.0)) {
                throw validation_error("PhantomConfig: noise profile out of range");
            }
        }
    }
};

// What was actually planted, for debugging and experiment audits.
struct PlantedLesion {
    int id = 0;
    bool spurious = false;
    bool missed = false;
    bool marginal = false;
    SizeBin target_bin = SizeBin::small;
    std::uint64_t size = 0;
    std::array<double, 3> center{0, 0, 0};
    std::array<double, 3> axes{0, 0, 0};
    double mu_core = 0.0;
    double mu_ring = 0.0;  // 0 when the lesion has no ring
    double var_core = 0.0; // learned-variance plateau painted inside
    double var_ring = 0.0;
    int hi_samples = 0;    // spurious only: how many of T say "lesion"
    double lo = 0.0, hi = 0.0;
};

struct PhantomScene {
    LabelMask gt;
    SampleStack stack;
    std::vector<PlantedLesion> provenance;
};

namespace detail {

struct PlacedBlob {
    std::vector<Voxel> voxels;       // row-major order
    std::vector<std::uint8_t> ring;  // parallel: 1 when on the boundary shell
    std::array<double, 3> center{0, 0, 0};
    std::array<double, 3> axes{0, 0, 0};
};

// Voxelize an axis-aligned ellipsoid; returns voxels in row-major order.
inline std::vector<Voxel> voxelize_ellipsoid(const Dims& dims, const std::array<double, 3>& c,
                                             const std::array<double, 3>& ax) {
    std::vector<Voxel> out;
    const auto lo = [&](double v, double a) {
        const auto b = static_cast<std::int64_t>(std::floor(v - a));
        return b < 0 ? std::int64_t{0} : b;
    };
    const auto hi = [&](double v, double a, std::uint32_t n) {
        auto b = static_cast<std::int64_t>(std::ceil(v + a));
        if (b > static_cast<std::int64_t>(n) - 1) b = static_cast<std::int64_t>(n) - 1;
        return b;
    };
    for (std::int64_t z = lo(c[2], ax[2]); z <= hi(c[2], ax[2], dims.nz); ++z) {
        for (std::int64_t y = lo(c[1], ax[1]); y <= hi(c[1], ax[1], dims.ny); ++y) {
            for (std::int64_t x = lo(c[0], ax[0]); x <= hi(c[0], ax[0], dims.nx); ++x) {
                const double dx = (x - c[0]) / ax[0];
                const double dy = (y - c[1]) / ax[1];
                const double dz = (z - c[2]) / ax[2];
                if (dx * dx + dy * dy + dz * dz <= 1.0) {
                    out.push_back(Voxel{static_cast<std::uint32_t>(x),
                                        static_cast<std::uint32_t>(y),
                                        static_cast<std::uint32_t>(z)});
                }
            }
        }
    }
    return out;
}

// Any voxel within Chebyshev distance 1 of an occupied voxel is off limits,
// so distinct lesions never touch even corner-wise and stay separate
// components at every threshold.
inline bool clear_of_occupancy(const std::vector<Voxel>& voxels,
                               const std::vector<std::uint8_t>& occupied, const Dims& d) {
    for (const auto& v : voxels) {
        for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const std::int64_t x = static_cast<std::int64_t>(v.x) + dx;
                    const std::int64_t y = static_cast<std::int64_t>(v.y) + dy;
                    const std::int64_t z = static_cast<std::int64_t>(v.z) + dz;
                    if (!d.contains(x, y, z)) continue;
                    if (occupied[d.index(static_cast<std::uint32_t>(x),
                                         static_cast<std::uint32_t>(y),
                                         static_cast<std::uint32_t>(z))]) {
                        return false;
                    }
                }
            }
        }
    }
    return true;
}

inline bool is_connected_18(const std::vector<Voxel>& voxels, const Dims& d) {
    if (voxels.empty()) return false;
    LabelMask m(d);
    for (const auto& v : voxels) m.set(v.x, v.y, v.z);
    return connected_components_18(m).lesions.size() == 1;
}

inline void mark_occupied(const std::vector<Voxel>& voxels, std::vector<std::uint8_t>& occupied,
                          const Dims& d) {
    for (const auto& v : voxels) occupied[d.index(v.x, v.y, v.z)] = 1;
}

// Boundary shell: lesion voxels with an 18-neighbour outside the lesion.
inline std::vector<std::uint8_t> ring_flags(const std::vector<Voxel>& voxels, const Dims& d) {
    LabelMask m(d);
    for (const auto& v : voxels) m.set(v.x, v.y, v.z);
    std::vector<std::uint8_t> ring(voxels.size(), 0);
    for (std::size_t i = 0; i < voxels.size(); ++i) {
        const auto& v = voxels[i];
        for (const auto& off : kNeighbours18) {
            const std::int64_t x = static_cast<std::int64_t>(v.x) + off[0];
            const std::int64_t y = static_cast<std::int64_t>(v.y) + off[1];
            const std::int64_t z = static_cast<std::int64_t>(v.z) + off[2];
            if (!d.contains(x, y, z) ||
                !m.test(d.index(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                static_cast<std::uint32_t>(z)))) {
                ring[i] = 1;
                break;
            }
        }
    }
    return ring;
}

// Draw (center, axes) until the voxelized blob hits the size window, sits
// clear of everything already placed, and is 18-connected.
inline PlacedBlob place_blob(const Dims& d, Xoshiro256StarStar& rng, double ax_lo, double ax_hi,
                             std::uint64_t size_lo, std::uint64_t size_hi,
                             std::vector<std::uint8_t>& occupied, const char* what) {
    constexpr int kMaxTries = 500;
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
        std::array<double, 3> axes{rng.uniform(ax_lo, ax_hi), rng.uniform(ax_lo, ax_hi),
                                   rng.uniform(ax_lo, ax_hi)};
        const double margin = std::max({axes[0], axes[1], axes[2]}) + 2.0;
        std::array<double, 3> center{rng.uniform(margin, d.nx - margin),
                                     rng.uniform(margin, d.ny - margin),
                                     rng.uniform(margin, d.nz - margin)};
        std::vector<Voxel> voxels = voxelize_ellipsoid(d, center, axes);
        if (voxels.size() < size_lo || voxels.size() > size_hi) continue;
        if (!clear_of_occupancy(voxels, occupied, d)) continue;
        if (!is_connected_18(voxels, d)) continue;
        mark_occupied(voxels, occupied, d);
        PlacedBlob blob;
        blob.ring = ring_flags(voxels, d);
        blob.voxels = std::move(voxels);
        blob.center = center;
        blob.axes = axes;
        return blob;
    }
    throw generation_error(std::string("phantom: could not place a ") + what + " lesion after " +
                           std::to_string(kMaxTries) + " attempts; volume too crowded");
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

} // namespace detail

inline PhantomScene generate_scene(const PhantomConfig& cfg) {
    cfg.validate();
    const Dims d = cfg.dims;
    const int t_count = cfg.t_samples;
    Xoshiro256StarStar rng(cfg.seed);

    // --- counts ---
    const int n_large = static_cast<int>(rng.uniform_int(cfg.large_count.lo, cfg.large_count.hi));
    const int n_medium =
        static_cast<int>(rng.uniform_int(cfg.medium_count.lo, cfg.medium_count.hi));
    int n_small;
    if (cfg.small_count.lo >= 0) {
        n_small = static_cast<int>(rng.uniform_int(cfg.small_count.lo, cfg.small_count.hi));
    } else {
        // Hit the target share in expectation: s / (s + m + l) ~ fraction.
        const double f = cfg.small_fraction;
        n_small = static_cast<int>(
            std::llround(f / (1.0 - f) * static_cast<double>(n_medium + n_large)));
    }

    // --- placement and appearance, in a fixed order ---
    struct RealLesion {
        detail::PlacedBlob blob;
        SizeBin bin;
        bool missed = false;
        bool marginal = false;
        double mu_core = 0.0, mu_ring = 0.0;
        double var_core = 0.0, var_ring = 0.0;
        std::vector<double> core_shift; // per sample
        std::vector<double> ring_shift; // per sample, rings only
    };
    struct SpuriousBlob {
        detail::PlacedBlob blob;
        SizeBin bin;
        std::vector<std::uint8_t> says_lesion; // per sample
        int hi_samples = 0;
        double lo = 0.0, hi = 0.0;
        double var_level = 0.0;
    };

    std::vector<std::uint8_t> occupied(d.voxel_count(), 0);
    std::vector<RealLesion> reals;
    const auto plant_real = [&](SizeBin bin) {
        RealLesion l;
        l.bin = bin;
        const BinNoiseProfile& prof =
            bin == SizeBin::large ? cfg.large : (bin == SizeBin::medium ? cfg.medium : cfg.small);
        switch (bin) {
            case SizeBin::large:
                l.blob = detail::place_blob(d, rng, 2.3, 3.6, 51, 150, occupied, "large");
                break;
            case SizeBin::medium:
                l.blob = detail::place_blob(d, rng, 1.3, 2.4, 11, 50, occupied, "medium");
                break;
            default:
                l.blob = detail::place_blob(d, rng, 0.62, 1.42, 3, 10, occupied, "small");
                break;
        }
        l.missed = rng.bernoulli(prof.miss_rate);
        // Marginally confident lesions give the small-bin TPR its spread
        // across theta. Restricted to 5+ voxels so that even at mid
        // probability their log-sum uncertainty stays clearly below any
        // 3-voxel spurious blob's.
        double sigma = 0.10 * prof.sample_disagreement;
        if (bin == SizeBin::small && l.blob.voxels.size() >= 5 && !l.missed &&
            rng.bernoulli(0.5)) {
            l.marginal = true;
            l.mu_core = rng.uniform(0.15, 0.75);
            sigma = std::max(0.2 * prof.sample_disagreement, 0.05);
        } else if (bin == SizeBin::large) {
            // Large lesions sit above any sensible sigmoid threshold so
            // their detection curve is flat: they are found at every theta
            // and contribute no false positives, which pins the large-bin
            // behaviour while the small bin carries the interesting spread.
            l.mu_core = rng.uniform(0.92, 0.97);
        } else {
            l.mu_core = rng.uniform(0.82, 0.95);
        }
        l.core_shift.resize(t_count);
        for (int t = 0; t < t_count; ++t) l.core_shift[t] = sigma * rng.normal_ih12();
        // A boundary ring only makes sense around a solid core. Compact
        // blobs are almost all boundary shell; giving them a ring would
        // leave a one- or two-voxel "core" as the only region above the
        // ring probability, and a speck like that is an artifact, not a
        // lesion. Such blobs are painted as solid plateaus instead.
        std::size_t interior = 0;
        for (const auto flag : l.blob.ring) {
            if (!flag) ++interior;
        }
        if (l.blob.voxels.size() > 10 && interior >= 4) {
            l.mu_ring = l.mu_core * rng.uniform(0.42, 0.58);
            const double ring_sigma = 0.15 * prof.boundary_jitter + 0.005;
            l.ring_shift.resize(t_count);
            for (int t = 0; t < t_count; ++t) l.ring_shift[t] = ring_sigma * rng.normal_ih12();
        }
        l.var_core = rng.uniform(0.004, 0.012);
        l.var_ring = rng.uniform(0.02, 0.05);
        reals.push_back(std::move(l));
    };
    for (int i = 0; i < n_large; ++i) plant_real(SizeBin::large);
    for (int i = 0; i < n_medium; ++i) plant_real(SizeBin::medium);
    for (int i = 0; i < n_small; ++i) plant_real(SizeBin::small);

    // Spurious blobs. Small-bin ones are exactly 3 voxels: the log-sum
    // lesion uncertainty grows with voxel count, and these must outrank
    // every genuine lesion, so they get the minimum countable size.
    std::vector<SpuriousBlob> spurious;
    const auto plant_spurious = [&](SizeBin bin) {
        SpuriousBlob s;
        s.bin = bin;
        if (bin == SizeBin::small) {
            s.blob = detail::place_blob(d, rng, 0.62, 1.1, 3, 3, occupied, "spurious small");
        } else if (bin == SizeBin::medium) {
            s.blob = detail::place_blob(d, rng, 1.3, 1.9, 11, 16, occupied, "spurious medium");
        } else {
            s.blob = detail::place_blob(d, rng, 2.3, 2.9, 51, 80, occupied, "spurious large");
        }
        const int k_max = std::max(1, std::min(t_count - 1, (7 * t_count) / 10));
        const int k_min = std::min(k_max, std::max(1, (3 * t_count) / 10));
        s.hi_samples = static_cast<int>(rng.uniform_int(k_min, k_max));
        // Which samples say "lesion": partial Fisher-Yates over 0..T-1.
        std::vector<int> order(t_count);
        for (int t = 0; t < t_count; ++t) order[t] = t;
        for (int i = 0; i < s.hi_samples; ++i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(i, t_count - 1));
            std::swap(order[static_cast<std::size_t>(i)], order[j]);
        }
        s.says_lesion.assign(t_count, 0);
        for (int i = 0; i < s.hi_samples; ++i) s.says_lesion[static_cast<std::size_t>(order[i])] = 1;
        s.lo = rng.uniform(0.03, 0.05);
        s.hi = rng.uniform(0.94, 0.99);
        s.var_level = rng.uniform(0.23, 0.27);
        spurious.push_back(std::move(s));
    };
    const auto spurious_count = [&](double rate) {
        const double whole = std::floor(rate);
        int n = static_cast<int>(whole);
        if (rng.uniform() < rate - whole) ++n;
        return n;
    };
    const int n_sp_small = spurious_count(cfg.small.fp_rate);
    const int n_sp_medium = spurious_count(cfg.medium.fp_rate);
    const int n_sp_large = spurious_count(cfg.large.fp_rate);
    for (int i = 0; i < n_sp_small; ++i) plant_spurious(SizeBin::small);
    for (int i = 0; i < n_sp_medium; ++i) plant_spurious(SizeBin::medium);
    for (int i = 0; i < n_sp_large; ++i) plant_spurious(SizeBin::large);

    // --- ground truth ---
    LabelMask gt(d);
    for (const auto& l : reals) {
        for (const auto& v : l.blob.voxels) gt.set(v.x, v.y, v.z);
    }

    // --- background base level, one draw per voxel ---
    const std::uint64_t n = d.voxel_count();
    std::vector<double> base(n);
    for (std::uint64_t i = 0; i < n; ++i) base[i] = rng.uniform(0.01, 0.05);

    // --- prediction samples ---
    // Background gets small per-voxel flicker; every lesion region moves as
    // one block per sample, so thresholding never fragments a region.
    std::vector<VoxelGrid> predictions;
    predictions.reserve(t_count);
    for (int t = 0; t < t_count; ++t) {
        std::vector<float> vals(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            double v = base[i] + 0.006 * rng.normal_ih12();
            if (v < 0.0005) v = 0.0005;
            if (v > 0.08) v = 0.08;
            vals[i] = static_cast<float>(v);
        }
        for (const auto& l : reals) {
            if (l.missed) continue;
            const double core_p = detail::clamp01(l.mu_core + l.core_shift[t]);
            const bool has_ring = !l.ring_shift.empty();
            const double ring_p =
                has_ring ? detail::clamp01(l.mu_ring + l.ring_shift[t]) : 0.0;
            for (std::size_t i = 0; i < l.blob.voxels.size(); ++i) {
                const auto& v = l.blob.voxels[i];
                const double p = (has_ring && l.blob.ring[i]) ? ring_p : core_p;
                vals[d.index(v.x, v.y, v.z)] = static_cast<float>(p);
            }
        }
        for (const auto& s : spurious) {
            const double p = s.says_lesion[t] ? s.hi : s.lo;
            for (const auto& v : s.blob.voxels) {
                vals[d.index(v.x, v.y, v.z)] = static_cast<float>(p);
            }
        }
        predictions.emplace_back(d, GridKind::probability, std::move(vals));
    }

    // --- learned-variance samples ---
    std::optional<std::vector<VoxelGrid>> variances;
    if (cfg.with_variance) {
        std::vector<VoxelGrid> vgrids;
        vgrids.reserve(t_count);
        for (int t = 0; t < t_count; ++t) {
            std::vector<float> vals(n);
            for (std::uint64_t i = 0; i < n; ++i) {
                double v = 0.002 + 0.0005 * rng.normal_ih12();
                if (v < 0.0005) v = 0.0005;
                vals[i] = static_cast<float>(v);
            }
            const auto paint = [&](const Voxel& v, double level) {
                double val = level + 0.0008 * rng.normal_ih12();
                if (val < 0.0001) val = 0.0001;
                vals[d.index(v.x, v.y, v.z)] = static_cast<float>(val);
            };
            for (const auto& l : reals) {
                if (l.missed) continue;
                const bool has_ring = !l.ring_shift.empty();
                for (std::size_t i = 0; i < l.blob.voxels.size(); ++i) {
                    paint(l.blob.voxels[i],
                          (has_ring && l.blob.ring[i]) ? l.var_ring : l.var_core);
                }
            }
            for (const auto& s : spurious) {
                for (const auto& v : s.blob.voxels) paint(v, s.var_level);
            }
            vgrids.emplace_back(d, GridKind::variance, std::move(vals));
        }
        variances = std::move(vgrids);
    }

    // --- provenance ---
    std::vector<PlantedLesion> provenance;
    int next_id = 0;
    for (const auto& l : reals) {
        PlantedLesion p;
        p.id = next_id++;
        p.spurious = false;
        p.missed = l.missed;
        p.marginal = l.marginal;
        p.target_bin = l.bin;
        p.size = l.blob.voxels.size();
        p.center = l.blob.center;
        p.axes = l.blob.axes;
        p.mu_core = l.mu_core;
        p.mu_ring = l.mu_ring;
        p.var_core = l.var_core;
        p.var_ring = l.ring_shift.empty() ? 0.0 : l.var_ring;
        provenance.push_back(p);
    }
    for (const auto& s : spurious) {
        PlantedLesion p;
        p.id = next_id++;
        p.spurious = true;
        p.target_bin = s.bin;
        p.size = s.blob.voxels.size();
        p.center = s.blob.center;
        p.axes = s.blob.axes;
        p.mu_core = s.hi;
        p.var_core = s.var_level;
        p.hi_samples = s.hi_samples;
        p.lo = s.lo;
        p.hi = s.hi;
        provenance.push_back(p);
    }

    return PhantomScene{std::move(gt), SampleStack(std::move(predictions), std::move(variances)),
                        std::move(provenance)};
}

inline nlohmann::json to_json(const PhantomConfig& cfg) {
    nlohmann::json j;
    j["dims"] = {cfg.dims.nx, cfg.dims.ny, cfg.dims.nz};
    j["t_samples"] = cfg.t_samples;
    j["with_variance"] = cfg.with_variance;
    j["seed"] = cfg.seed;
    j["small_fraction"] = cfg.small_fraction;
    const auto range = [](const CountRange& r) { return nlohmann::json{r.lo, r.hi}; };
    j["small_count"] = range(cfg.small_count);
    j["medium_count"] = range(cfg.medium_count);
    j["large_count"] = range(cfg.large_count);
    const auto noise = [](const BinNoiseProfile& p) {
        return nlohmann::json{{"miss_rate", p.miss_rate},
                              {"fp_rate", p.fp_rate},
                              {"boundary_jitter", p.boundary_jitter},
                              {"sample_disagreement", p.sample_disagreement}};
    };
    j["small_noise"] = noise(cfg.small);
    j["medium_noise"] = noise(cfg.medium);
    j["large_noise"] = noise(cfg.large);
    return j;
}

inline nlohmann::json to_json(const PlantedLesion& p) {
    nlohmann::json j;
    j["id"] = p.id;
    j["spurious"] = p.spurious;
    j["missed"] = p.missed;
    j["marginal"] = p.marginal;
    j["target_bin"] = to_string(p.target_bin);
    j["size"] = p.size;
    j["center"] = {p.center[0], p.center[1], p.center[2]};
    j["axes"] = {p.axes[0], p.axes[1], p.axes[2]};
    j["mu_core"] = p.mu_core;
    j["mu_ring"] = p.mu_ring;
    j["var_core"] = p.var_core;
    j["var_ring"] = p.var_ring;
    j["hi_samples"] = p.hi_samples;
    j["lo"] = p.lo;
    j["hi"] = p.hi;
    return j;
}

// Summary over a batch of scenes: true-lesion census plus how strongly the
// samples disagree inside each bin (mean MC sample variance over lesion
// voxels).
struct SceneStatistics {
    std::int64_t scenes = 0;
    std::int64_t count_small = 0;
    std::int64_t count_medium = 0;
    std::int64_t count_large = 0;
    std::map<std::uint64_t, std::int64_t> size_histogram;
    double disagreement_small = 0.0;
    double disagreement_medium = 0.0;
    double disagreement_large = 0.0;
};

inline SceneStatistics scene_statistics(const std::vector<PhantomScene>& scenes) {
    if (scenes.empty()) throw argument_error("scene_statistics: no scenes");
    SceneStatistics st;
    st.scenes = static_cast<std::int64_t>(scenes.size());
    double sum[3] = {0, 0, 0};
    std::int64_t voxels[3] = {0, 0, 0};
    for (const auto& scene : scenes) {
        const VoxelGrid var = mc_sample_variance(scene.stack);
        const LesionSet lesions = connected_components_18(scene.gt);
        for (const auto& l : lesions.lesions) {
            const SizeBin bin = l.bin();
            ++st.size_histogram[l.size()];
            int slot;
            switch (bin) {
                case SizeBin::small: ++st.count_small; slot = 0; break;
                case SizeBin::medium: ++st.count_medium; slot = 1; break;
                case SizeBin::large: ++st.count_large; slot = 2; break;
                default: continue; // planted lesions are never subthreshold
            }
            for (const auto& v : l.voxels) sum[slot] += var.at(v.x, v.y, v.z);
            voxels[slot] += static_cast<std::int64_t>(l.size());
        }
    }
    if (voxels[0] > 0) st.disagreement_small = sum[0] / static_cast<double>(voxels[0]);
    if (voxels[1] > 0) st.disagreement_medium = sum[1] / static_cast<double>(voxels[1]);
    if (voxels[2] > 0) st.disagreement_large = sum[2] / static_cast<double>(voxels[2]);
    return st;
}

inline nlohmann::json to_json(const SceneStatistics& st) {
    nlohmann::json j;
    j["scenes"] = st.scenes;
    j["counts"] = {{"small", st.count_small},
                   {"medium", st.count_medium},
                   {"large", st.count_large}};
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [size, count] : st.size_histogram) hist[std::to_string(size)] = count;
    j["size_histogram"] = std::move(hist);
    j["disagreement"] = {{"small", st.disagreement_small},
                         {"medium", st.disagreement_medium},
                         {"large", st.disagreement_large}};
    return j;
}

} // namespace lesionuq
