#pragma once

// Single-file NIfTI-1 (.nii) reader/writer.
//
// Supported on read: either byte order, datatypes uint8/int16/float32,
// 1 to 3 spatial dimensions (higher dims must be 1). Written files are always
// little-endian with the image data starting at byte 352.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mrtumor {

enum class Datatype : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kFloat32 = 16,
};

inline constexpr std::size_t kNiftiHeaderSize = 348;
inline constexpr std::size_t kNiftiDataOffset = 352;

struct NiftiHeader {
  std::array<std::int64_t, 3> dims{1, 1, 1};
  Datatype datatype = Datatype::kFloat32;
  std::array<float, 3> pixdim{1.0f, 1.0f, 1.0f};
  float vox_offset = static_cast<float>(kNiftiDataOffset);
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::array<char, 4> magic{'n', '+', '1', '\0'};

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  }
};

/// A 3-D scalar volume. `data` is x-fastest (x + nx*(y + ny*z)) and holds
/// intensities with scl_slope/scl_inter already applied.
struct Volume {
  NiftiHeader header;
  std::vector<float> data;

  Volume() = default;
  Volume(std::int64_t nx, std::int64_t ny, std::int64_t nz,
         std::array<float, 3> pixdim = {1.0f, 1.0f, 1.0f});

  std::int64_t nx() const { return header.dims[0]; }
  std::int64_t ny() const { return header.dims[1]; }
  std::int64_t nz() const { return header.dims[2]; }

  std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return static_cast<std::size_t>(x + nx() * (y + ny() * z));
  }
  float& at(std::int64_t x, std::int64_t y, std::int64_t z) { return data[index(x, y, z)]; }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const { return data[index(x, y, z)]; }
};

/// Parses a complete .nii image held in memory. Throws Error with
/// kBadMagic, kUnsupportedDatatype, kTruncatedFile, kBadHeader or kNonFinite.
Volume parse_volume(std::span<const std::uint8_t> bytes);

/// Serializes `v` as little-endian NIfTI-1 using v.header.datatype.
/// Integer datatypes store rounded values with unit scaling.
std::vector<std::uint8_t> serialize_volume(const Volume& v);

Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& v, const std::filesystem::path& path);

}  // namespace mrtumor
