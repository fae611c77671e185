#include "vxseg/volume.hpp"

#include <cmath>
#include <limits>

#include "../common/binary_io.hpp"
#include "vxseg/errors.hpp"

namespace vxseg {

VolumeGrid::VolumeGrid(VolumeKind kind_, std::array<std::int64_t, 3> extents_,
                       std::array<float, 3> spacing_, float fill)
    : kind(kind_), extents(extents_), spacing(spacing_) {
  for (auto e : extents) VXSEG_REQUIRE(e >= 0, "volume extents must be nonnegative");
  values.assign(static_cast<std::size_t>(voxel_count()), fill);
}

void VolumeGrid::validate() const {
  for (int a = 0; a < 3; ++a) {
    VXSEG_REQUIRE(extents[a] >= 0, "volume extent ", a, " is negative");
    VXSEG_REQUIRE(spacing[a] > 0.0f && std::isfinite(spacing[a]), "volume spacing ", a,
                  " must be positive, got ", spacing[a]);
  }
  VXSEG_REQUIRE(values.size() == static_cast<std::size_t>(voxel_count()), "volume holds ",
                values.size(), " values for ", voxel_count(), " voxels");
  if (kind == VolumeKind::label) {
    for (float v : values)
      VXSEG_REQUIRE(v == 0.0f || v == 1.0f, "label volume contains ", v, "; labels must be 0 or 1");
  }
}

void write_volume(const VolumeGrid& volume, const std::filesystem::path& path) {
  volume.validate();
  detail::ByteWriter w;
  w.bytes(std::string_view(kVolumeMagic, 4));
  w.u16(kVolumeVersion);
  w.u8(static_cast<std::uint8_t>(volume.kind));
  for (auto e : volume.extents) {
    VXSEG_REQUIRE(e <= std::numeric_limits<std::uint32_t>::max(), "volume extent too large");
    w.u32(static_cast<std::uint32_t>(e));
  }
  for (float s : volume.spacing) w.f32(s);
  for (float o : volume.origin) w.f32(o);
  w.f32s(volume.values.data(), volume.values.size());
  w.save(path);
}

VolumeGrid read_volume(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  const std::string magic = r.bytes(4, "magic");
  if (magic != std::string_view(kVolumeMagic, 4))
    throw FormatError(detail::concat(path.string(), ": bad magic, expected \"VXSG\""));
  const auto version = r.u16();
  if (version != kVolumeVersion)
    throw FormatError(detail::concat(path.string(), ": unsupported volume format version ",
                                     version, " (expected ", kVolumeVersion, ")"));
  const auto kind = r.u8();
  if (kind > 1)
    throw FormatError(detail::concat(path.string(), ": unknown volume kind ", int(kind)));
  VolumeGrid v;
  v.kind = static_cast<VolumeKind>(kind);
  for (auto& e : v.extents) e = r.u32();
  for (auto& s : v.spacing) s = r.f32();
  for (auto& o : v.origin) o = r.f32();
  v.values.resize(static_cast<std::size_t>(v.voxel_count()));
  r.f32s(v.values.data(), v.values.size(), "payload");
  if (r.remaining() != 0)
    throw FormatError(detail::concat(path.string(), ": ", r.remaining(),
                                     " trailing bytes after payload"));
  try {
    v.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(detail::concat(path.string(), ": ", e.what()));
  }
  return v;
}

}  // namespace vxseg
