// uvol.hpp - the UVOL on-disk volume format.
//
// Layout, all little-endian:
//   bytes 0..3   magic "UVOL"
//   bytes 4..5   version, u16, currently 1
//   byte  6      kind, u8: 0 probability, 1 variance, 2 uncertainty, 3 raw
//   byte  7      reserved, written as 0, ignored on read
//   bytes 8..19  dims nx, ny, nz as three u32
//   then nx*ny*nz IEEE-754 binary32 values, row-major, x fastest.
//
// Reads reject wrong magic / unsupported version / unknown kind with
// format_error, and a payload shorter or longer than the header promises
// with truncation_error. Values are re-validated through VoxelGrid on load,
// so a file carrying NaN or an out-of-range probability never becomes a
// live grid. save followed by load is byte-identical for the same grid.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lesionuq/errors.hpp"
#include "lesionuq/volume.hpp"

namespace lesionuq {

inline constexpr char kUvolMagic[4] = {'U', 'V', 'O', 'L'};
inline constexpr std::uint16_t kUvolVersion = 1;
inline constexpr std::size_t kUvolHeaderSize = 20;

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace detail

// Serialise to the UVOL byte layout.
inline std::string encode_uvol(const VoxelGrid& grid) {
    const Dims& d = grid.dims();
    std::string out;
    out.reserve(kUvolHeaderSize + grid.voxel_count() * 4);
    out.append(kUvolMagic, 4);
    detail::put_u16(out, kUvolVersion);
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(grid.kind())));
    out.push_back('\0'); // reserved
    detail::put_u32(out, d.nx);
    detail::put_u32(out, d.ny);
    detail::put_u32(out, d.nz);
    for (float v : grid.values()) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        detail::put_u32(out, bits);
    }
    return out;
}

// Parse from the UVOL byte layout. Throws format_error / truncation_error /
// validation_error as described in the header comment.
inline VoxelGrid decode_uvol(const std::string& bytes, const std::string& context = "uvol") {
    if (bytes.size() < kUvolHeaderSize) {
        throw truncation_error(context + ": " + std::to_string(bytes.size()) +
                               " bytes is shorter than the 20-byte header");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (std::memcmp(p, kUvolMagic, 4) != 0) {
        throw format_error(context + ": bad magic, expected \"UVOL\"");
    }
    const std::uint16_t version = detail::get_u16(p + 4);
    if (version != kUvolVersion) {
        throw format_error(context + ": unsupported version " + std::to_string(version));
    }
    const std::uint8_t kind_byte = p[6];
    if (kind_byte > 3) {
        throw format_error(context + ": unknown kind byte " + std::to_string(kind_byte));
    }
    const Dims d{detail::get_u32(p + 8), detail::get_u32(p + 12), detail::get_u32(p + 16)};
    if (d.nx == 0 || d.ny == 0 || d.nz == 0) {
        throw format_error(context + ": zero dimension in header, " + d.describe());
    }
    const std::uint64_t n = d.voxel_count();
    const std::uint64_t expected = kUvolHeaderSize + n * 4;
    if (bytes.size() != expected) {
        throw truncation_error(context + ": header promises " + std::to_string(expected) +
                               " bytes, file has " + std::to_string(bytes.size()));
    }
    std::vector<float> values(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint32_t bits = detail::get_u32(p + kUvolHeaderSize + i * 4);
        values[i] = std::bit_cast<float>(bits);
    }
    return VoxelGrid(d, static_cast<GridKind>(kind_byte), std::move(values));
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open for reading: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw io_error("read failed: " + path.string());
    return bytes;
}

// Write-to-temp-then-rename so readers never observe a half-written file.
inline void write_file_bytes_atomic(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw io_error("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw io_error("rename failed: " + tmp.string() + " -> " + path.string() +
                           " (" + ec.message() + ")");
}

inline void save_volume(const VoxelGrid& grid, const std::filesystem::path& path) {
    write_file_bytes_atomic(path, encode_uvol(grid));
}

inline VoxelGrid load_volume(const std::filesystem::path& path) {
    return decode_uvol(read_file_bytes(path), path.string());
}

} // namespace lesionuq
