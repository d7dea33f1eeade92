// lesion.hpp - thresholding, 18-connected components, size bins, dilation.
//
// Connectivity is 18 throughout: two voxels are neighbours when every
// coordinate differs by at most one and at most two coordinates differ
// (faces and edges, not corners). Components are labelled with a union-find
// over a single row-major scan; ids are assigned in order of each
// component's minimum linear voxel index, so labelling is deterministic.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesionuq/errors.hpp"
#include "lesionuq/volume.hpp"

namespace lesionuq {

// The 18-neighbourhood: Chebyshev distance 1, at most two nonzero deltas.
inline constexpr std::array<std::array<int, 3>, 18> kNeighbours18 = {{
    {-1, 0, 0}, {1, 0, 0},  {0, -1, 0}, {0, 1, 0},  {0, 0, -1}, {0, 0, 1},
    {-1, -1, 0}, {1, -1, 0}, {-1, 1, 0}, {1, 1, 0},
    {-1, 0, -1}, {1, 0, -1}, {-1, 0, 1}, {1, 0, 1},
    {0, -1, -1}, {0, 1, -1}, {0, -1, 1}, {0, 1, 1},
}};

// The half of the neighbourhood that precedes a voxel in row-major order
// (z, then y, then x). Scanning with these is enough to build components.
inline constexpr std::array<std::array<int, 3>, 9> kPriorNeighbours18 = {{
    {0, 0, -1}, {-1, 0, -1}, {1, 0, -1}, {0, -1, -1}, {0, 1, -1},
    {0, -1, 0}, {-1, -1, 0}, {1, -1, 0},
    {-1, 0, 0},
}};

enum class SizeBin { subthreshold, small, medium, large };

inline SizeBin size_bin(std::uint64_t voxels) {
    if (voxels < 3) return SizeBin::subthreshold;
    if (voxels <= 10) return SizeBin::small;
    if (voxels <= 50) return SizeBin::medium;
    return SizeBin::large;
}

inline const char* to_string(SizeBin b) {
    switch (b) {
        case SizeBin::subthreshold: return "subthreshold";
        case SizeBin::small: return "small";
        case SizeBin::medium: return "medium";
        case SizeBin::large: return "large";
    }
    return "unknown";
}

inline SizeBin parse_size_bin(const std::string& name) {
    if (name == "subthreshold") return SizeBin::subthreshold;
    if (name == "small") return SizeBin::small;
    if (name == "medium") return SizeBin::medium;
    if (name == "large") return SizeBin::large;
    throw argument_error("unknown size bin \"" + name + "\"");
}

struct Voxel {
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    std::uint32_t z = 0;

    bool operator==(const Voxel&) const = default;
};

struct Lesion {
    int id = 0;
    std::vector<Voxel> voxels; // row-major order, never empty

    std::uint64_t size() const { return voxels.size(); }
    SizeBin bin() const { return size_bin(voxels.size()); }
};

struct LesionSet {
    Dims dims;
    std::vector<Lesion> lesions; // ids are 0..n-1 in storage order

    LabelMask to_mask() const {
        LabelMask mask(dims);
        for (const auto& l : lesions) {
            for (const auto& v : l.voxels) mask.set(v.x, v.y, v.z);
        }
        return mask;
    }
};

// A voxel is foreground iff p >= theta.
inline LabelMask binarize(const VoxelGrid& prob, double theta) {
    if (prob.kind() != GridKind::probability) {
        throw argument_error("binarize: expected a probability grid, got " +
                             std::string(to_string(prob.kind())));
    }
    if (!(theta >= 0.0 && theta <= 1.0)) {
        throw argument_error("binarize: theta must lie in [0,1], got " + std::to_string(theta));
    }
    LabelMask mask(prob.dims());
    const auto& vals = prob.values();
    for (std::uint64_t i = 0; i < vals.size(); ++i) {
        if (static_cast<double>(vals[i]) >= theta) mask.set(i);
    }
    return mask;
}

namespace detail {

// Plain union-find with path compression; union by attaching the larger
// root index under the smaller keeps roots at minimal indices, which is
// convenient but not load-bearing (ids come from a second ordered pass).
class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t a) {
        std::size_t root = a;
        while (parent_[root] != root) root = parent_[root];
        while (parent_[a] != root) {
            const std::size_t next = parent_[a];
            parent_[a] = root;
            a = next;
        }
        return root;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent_[b] = a; else parent_[a] = b;
    }

private:
    std::vector<std::size_t> parent_;
};

} // namespace detail

inline LesionSet connected_components_18(const LabelMask& mask) {
    const Dims& d = mask.dims();
    const std::uint64_t n = d.voxel_count();

    // Pass 1: union each set voxel with its already-scanned neighbours.
    detail::UnionFind uf(n);
    for (std::uint32_t z = 0; z < d.nz; ++z) {
        for (std::uint32_t y = 0; y < d.ny; ++y) {
            for (std::uint32_t x = 0; x < d.nx; ++x) {
                const std::uint64_t i = d.index(x, y, z);
                if (!mask.test(i)) continue;
                for (const auto& off : kPriorNeighbours18) {
                    const std::int64_t px = static_cast<std::int64_t>(x) + off[0];
                    const std::int64_t py = static_cast<std::int64_t>(y) + off[1];
                    const std::int64_t pz = static_cast<std::int64_t>(z) + off[2];
                    if (!d.contains(px, py, pz)) continue;
                    const std::uint64_t j = d.index(static_cast<std::uint32_t>(px),
                                                    static_cast<std::uint32_t>(py),
                                                    static_cast<std::uint32_t>(pz));
                    if (mask.test(j)) uf.unite(i, j);
                }
            }
        }
    }

    // Pass 2: assign ids by first (= minimum) linear index per root and
    // collect voxels in row-major order.
    std::vector<int> root_to_id(n, -1);
    LesionSet out{d, {}};
    for (std::uint32_t z = 0; z < d.nz; ++z) {
        for (std::uint32_t y = 0; y < d.ny; ++y) {
            for (std::uint32_t x = 0; x < d.nx; ++x) {
                const std::uint64_t i = d.index(x, y, z);
                if (!mask.test(i)) continue;
                const std::size_t root = uf.find(i);
                int id = root_to_id[root];
                if (id < 0) {
                    id = static_cast<int>(out.lesions.size());
                    root_to_id[root] = id;
                    out.lesions.push_back(Lesion{id, {}});
                }
                out.lesions[static_cast<std::size_t>(id)].voxels.push_back(Voxel{x, y, z});
            }
        }
    }
    return out;
}

// Reference lesions below three voxels are too small to stand behind; drop
// them before any matching. Ids are re-assigned contiguously, order kept.
inline LesionSet prune_ground_truth(const LesionSet& gt) {
    LesionSet out{gt.dims, {}};
    for (const auto& l : gt.lesions) {
        if (l.size() < 3) continue;
        Lesion kept = l;
        kept.id = static_cast<int>(out.lesions.size());
        out.lesions.push_back(std::move(kept));
    }
    return out;
}

// Union of the lesion's voxels and all their in-bounds 18-neighbours, as
// sorted unique linear indices.
inline std::vector<std::uint64_t> dilate_18(const Lesion& lesion, const Dims& dims) {
    std::vector<std::uint64_t> out;
    out.reserve(lesion.voxels.size() * 19);
    for (const auto& v : lesion.voxels) {
        out.push_back(dims.index(v.x, v.y, v.z));
        for (const auto& off : kNeighbours18) {
            const std::int64_t nx = static_cast<std::int64_t>(v.x) + off[0];
            const std::int64_t ny = static_cast<std::int64_t>(v.y) + off[1];
            const std::int64_t nz = static_cast<std::int64_t>(v.z) + off[2];
            if (!dims.contains(nx, ny, nz)) continue;
            out.push_back(dims.index(static_cast<std::uint32_t>(nx),
                                     static_cast<std::uint32_t>(ny),
                                     static_cast<std::uint32_t>(nz)));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline nlohmann::json to_json(const LesionSet& set) {
    nlohmann::json j;
    j["dims"] = {set.dims.nx, set.dims.ny, set.dims.nz};
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : set.lesions) {
        nlohmann::json lj;
        lj["id"] = l.id;
        lj["size"] = l.size();
        lj["bin"] = to_string(l.bin());
        nlohmann::json voxels = nlohmann::json::array();
        for (const auto& v : l.voxels) voxels.push_back({v.x, v.y, v.z});
        lj["voxels"] = std::move(voxels);
        arr.push_back(std::move(lj));
    }
    j["lesions"] = std::move(arr);
    return j;
}

inline LesionSet lesion_set_from_json(const nlohmann::json& j) {
    try {
        Dims d{j.at("dims").at(0).get<std::uint32_t>(),
               j.at("dims").at(1).get<std::uint32_t>(),
               j.at("dims").at(2).get<std::uint32_t>()};
        LesionSet out{d, {}};
        for (const auto& lj : j.at("lesions")) {
            Lesion l;
            l.id = lj.at("id").get<int>();
            for (const auto& vj : lj.at("voxels")) {
                Voxel v{vj.at(0).get<std::uint32_t>(), vj.at(1).get<std::uint32_t>(),
                        vj.at(2).get<std::uint32_t>()};
                if (!d.contains(v.x, v.y, v.z)) {
                    throw format_error("lesion set json: voxel out of bounds");
                }
                l.voxels.push_back(v);
            }
            if (l.voxels.empty()) {
                throw format_error("lesion set json: empty lesion " + std::to_string(l.id));
            }
            out.lesions.push_back(std::move(l));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("lesion set json: ") + e.what());
    }
}

} // namespace lesionuq
