#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace vxseg {

enum class VolumeKind : std::uint8_t { image = 0, label = 1 };

// A scalar volume on a regular grid. Axis order is (z, y, x) everywhere;
// values are row-major with x fastest.
struct VolumeGrid {
  VolumeKind kind = VolumeKind::image;
  std::array<std::int64_t, 3> extents{0, 0, 0};
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};  // mm
  std::array<float, 3> origin{0.0f, 0.0f, 0.0f};   // mm
  std::vector<float> values;

  VolumeGrid() = default;
  VolumeGrid(VolumeKind kind, std::array<std::int64_t, 3> extents,
             std::array<float, 3> spacing, float fill = 0.0f);

  std::int64_t voxel_count() const { return extents[0] * extents[1] * extents[2]; }
  std::size_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>((z * extents[1] + y) * extents[2] + x);
  }
  float& at(std::int64_t z, std::int64_t y, std::int64_t x) { return values[index(z, y, x)]; }
  float at(std::int64_t z, std::int64_t y, std::int64_t x) const { return values[index(z, y, x)]; }

  // Throws ContractViolation on non-positive spacing, a size mismatch, or a
  // label grid holding anything other than 0 and 1.
  void validate() const;
};

inline constexpr char kVolumeMagic[4] = {'V', 'X', 'S', 'G'};
inline constexpr std::uint16_t kVolumeVersion = 1;

// "VXSG" | u16 version | u8 kind | 3 x u32 extents | 3 x f32 spacing |
// 3 x f32 origin | f32 payload, all little-endian.
void write_volume(const VolumeGrid& volume, const std::filesystem::path& path);
VolumeGrid read_volume(const std::filesystem::path& path);

}  // namespace vxseg
