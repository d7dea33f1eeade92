// volume.hpp - dense 3D grids, binary masks, and the MC sample stack.
//
// Layout is plain row-major with x fastest: index = x + nx*(y + ny*z).
// Grids store float32 (that is what goes to disk) but every reduction over
// voxels or samples elsewhere in the toolkit accumulates in double.
//
// VoxelGrid is immutable after construction and construction validates the
// per-kind invariants, so any VoxelGrid you can get your hands on is valid.
// That is the concurrency story too: readers never lock.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lesionuq/errors.hpp"

namespace lesionuq {

struct Dims {
    std::uint32_t nx = 0;
    std::uint32_t ny = 0;
    std::uint32_t nz = 0;

    bool operator==(const Dims&) const = default;

    std::uint64_t voxel_count() const {
        return static_cast<std::uint64_t>(nx) * ny * nz;
    }

    std::uint64_t index(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return static_cast<std::uint64_t>(x) +
               static_cast<std::uint64_t>(nx) *
                   (static_cast<std::uint64_t>(y) + static_cast<std::uint64_t>(ny) * z);
    }

    bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return x >= 0 && y >= 0 && z >= 0 &&
               x < static_cast<std::int64_t>(nx) &&
               y < static_cast<std::int64_t>(ny) &&
               z < static_cast<std::int64_t>(nz);
    }

    std::string describe() const {
        return std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz);
    }
};

inline void require_same_dims(const Dims& a, const Dims& b, const char* what) {
    if (!(a == b)) {
        throw validation_error(std::string(what) + ": dimension mismatch, " +
                               a.describe() + " vs " + b.describe());
    }
}

// What the numbers in a grid mean. The byte values are the on-disk encoding.
enum class GridKind : std::uint8_t {
    probability = 0, // in [0,1]
    variance = 1,    // >= 0
    uncertainty = 2, // >= 0
    raw = 3,         // any finite value
};

inline const char* to_string(GridKind k) {
    switch (k) {
        case GridKind::probability: return "probability";
        case GridKind::variance: return "variance";
        case GridKind::uncertainty: return "uncertainty";
        case GridKind::raw: return "raw";
    }
    return "unknown";
}

class VoxelGrid {
public:
    // Zero-filled grid. Zero satisfies the invariants of every kind.
    VoxelGrid(Dims dims, GridKind kind)
        : dims_(dims), kind_(kind), values_(checked_count(dims), 0.0f) {}

    VoxelGrid(Dims dims, GridKind kind, std::vector<float> values)
        : dims_(dims), kind_(kind), values_(std::move(values)) {
        if (values_.size() != checked_count(dims_)) {
            throw validation_error("VoxelGrid: got " + std::to_string(values_.size()) +
                                   " values for dims " + dims_.describe());
        }
        validate_values();
    }

    const Dims& dims() const { return dims_; }
    GridKind kind() const { return kind_; }
    const std::vector<float>& values() const { return values_; }
    std::uint64_t voxel_count() const { return values_.size(); }

    float operator[](std::uint64_t i) const { return values_[i]; }

    float at(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return values_[dims_.index(x, y, z)];
    }

private:
    static std::uint64_t checked_count(const Dims& d) {
        if (d.nx == 0 || d.ny == 0 || d.nz == 0) {
            throw validation_error("VoxelGrid: all dimensions must be positive, got " +
                                   d.describe());
        }
        return d.voxel_count();
    }

    void validate_values() const {
        for (std::uint64_t i = 0; i < values_.size(); ++i) {
            const float v = values_[i];
            if (!std::isfinite(v)) {
                throw validation_error(std::string("VoxelGrid(") + to_string(kind_) +
                                       "): non-finite value at linear index " +
                                       std::to_string(i));
            }
            if (kind_ == GridKind::probability && (v < 0.0f || v > 1.0f)) {
                throw validation_error("VoxelGrid(probability): value " + std::to_string(v) +
                                       " outside [0,1] at linear index " + std::to_string(i));
            }
            if ((kind_ == GridKind::variance || kind_ == GridKind::uncertainty) && v < 0.0f) {
                throw validation_error(std::string("VoxelGrid(") + to_string(kind_) +
                                       "): negative value at linear index " + std::to_string(i));
            }
        }
    }

    Dims dims_;
    GridKind kind_;
    std::vector<float> values_;
};

// Binary mask over the same layout. Stored as one byte per voxel; anything
// nonzero on input is normalised to 1.
class LabelMask {
public:
    explicit LabelMask(Dims dims)
        : dims_(dims), bits_(checked_count(dims), std::uint8_t{0}) {}

    LabelMask(Dims dims, std::vector<std::uint8_t> bits)
        : dims_(dims), bits_(std::move(bits)) {
        if (bits_.size() != checked_count(dims_)) {
            throw validation_error("LabelMask: got " + std::to_string(bits_.size()) +
                                   " values for dims " + dims_.describe());
        }
        for (auto& b : bits_) b = (b != 0) ? 1 : 0;
    }

    const Dims& dims() const { return dims_; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }

    bool test(std::uint64_t i) const { return bits_[i] != 0; }
    bool test(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return bits_[dims_.index(x, y, z)] != 0;
    }

    void set(std::uint64_t i, bool on = true) { bits_[i] = on ? 1 : 0; }
    void set(std::uint32_t x, std::uint32_t y, std::uint32_t z, bool on = true) {
        bits_[dims_.index(x, y, z)] = on ? 1 : 0;
    }

    std::uint64_t count_set() const {
        std::uint64_t n = 0;
        for (auto b : bits_) n += b;
        return n;
    }

private:
    static std::uint64_t checked_count(const Dims& d) {
        if (d.nx == 0 || d.ny == 0 || d.nz == 0) {
            throw validation_error("LabelMask: all dimensions must be positive, got " +
                                   d.describe());
        }
        return d.voxel_count();
    }

    Dims dims_;
    std::vector<std::uint8_t> bits_;
};

// T Monte Carlo forward passes over one scan: T probability grids, plus an
// optional matching set of learned-variance grids for models that emit one.
class SampleStack {
public:
    SampleStack(std::vector<VoxelGrid> predictions,
                std::optional<std::vector<VoxelGrid>> variances = std::nullopt)
        : predictions_(std::move(predictions)), variances_(std::move(variances)) {
        if (predictions_.empty()) {
            throw validation_error("SampleStack: needs at least one prediction sample");
        }
        const Dims& d = predictions_.front().dims();
        for (const auto& g : predictions_) {
            require_same_dims(g.dims(), d, "SampleStack predictions");
            if (g.kind() != GridKind::probability) {
                throw validation_error("SampleStack: prediction grids must have kind "
                                       "probability, got " + std::string(to_string(g.kind())));
            }
        }
        if (variances_) {
            if (variances_->size() != predictions_.size()) {
                throw validation_error("SampleStack: " + std::to_string(variances_->size()) +
                                       " variance grids for " +
                                       std::to_string(predictions_.size()) + " predictions");
            }
            for (const auto& g : *variances_) {
                require_same_dims(g.dims(), d, "SampleStack variances");
                if (g.kind() != GridKind::variance) {
                    throw validation_error("SampleStack: variance grids must have kind "
                                           "variance, got " + std::string(to_string(g.kind())));
                }
            }
        }
    }

    std::size_t sample_count() const { return predictions_.size(); }
    const Dims& dims() const { return predictions_.front().dims(); }
    const std::vector<VoxelGrid>& predictions() const { return predictions_; }
    bool has_variances() const { return variances_.has_value(); }
    const std::vector<VoxelGrid>& variances() const {
        if (!variances_) throw validation_error("SampleStack: no variance grids present");
        return *variances_;
    }

private:
    std::vector<VoxelGrid> predictions_;
    std::optional<std::vector<VoxelGrid>> variances_;
};

// Voxel-wise mean over the T samples; the model's consensus probability map.
// Accumulates in double, rounds to float32 once per voxel.
inline VoxelGrid mean_prediction(const SampleStack& stack) {
    const auto& preds = stack.predictions();
    const std::uint64_t n = preds.front().voxel_count();
    const double inv_t = 1.0 / static_cast<double>(preds.size());
    std::vector<float> mean(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (const auto& g : preds) acc += g[i];
        // Clamp: float rounding of the mean of values in [0,1] can in
        // principle land a hair outside and the invariant is strict.
        const double m = acc * inv_t;
        mean[i] = static_cast<float>(m < 0.0 ? 0.0 : (m > 1.0 ? 1.0 : m));
    }
    return VoxelGrid(preds.front().dims(), GridKind::probability, std::move(mean));
}

} // namespace lesionuq
