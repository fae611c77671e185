#include <cmath>

#include "vxseg/errors.hpp"
#include "vxseg/phantom.hpp"

namespace vxseg {
namespace {

// One axis of a separable resample: `in` has extents `ext`; the result has
// `n_out` samples along `axis`, sample i taken at source coordinate i * ratio.
std::vector<double> resample_axis(const std::vector<double>& in, std::array<std::int64_t, 3>& ext,
                                  int axis, std::int64_t n_out, double ratio, bool nearest) {
  const std::int64_t n_in = ext[axis];
  std::vector<std::int64_t> lo(static_cast<std::size_t>(n_out)), hi(lo.size());
  std::vector<double> frac(lo.size());
  for (std::int64_t i = 0; i < n_out; ++i) {
    const double c = std::min(static_cast<double>(i) * ratio, static_cast<double>(n_in - 1));
    auto& l = lo[static_cast<std::size_t>(i)];
    if (nearest) {
      l = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(c + 0.5)), n_in - 1);
      hi[static_cast<std::size_t>(i)] = l;
      frac[static_cast<std::size_t>(i)] = 0.0;
    } else {
      l = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(c)), n_in - 1);
      hi[static_cast<std::size_t>(i)] = std::min<std::int64_t>(l + 1, n_in - 1);
      frac[static_cast<std::size_t>(i)] = c - static_cast<double>(l);
    }
  }
  auto out_ext = ext;
  out_ext[axis] = n_out;
  std::vector<double> out(static_cast<std::size_t>(out_ext[0] * out_ext[1] * out_ext[2]));
  const std::int64_t inner = axis == 2 ? 1 : (axis == 1 ? ext[2] : ext[1] * ext[2]);
  const std::int64_t outer = axis == 0 ? 1 : (axis == 1 ? ext[0] : ext[0] * ext[1]);
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* src = in.data() + o * n_in * inner;
    double* dst = out.data() + o * n_out * inner;
    for (std::int64_t i = 0; i < n_out; ++i) {
      const auto l = lo[static_cast<std::size_t>(i)], h = hi[static_cast<std::size_t>(i)];
      const double f = frac[static_cast<std::size_t>(i)];
      for (std::int64_t k = 0; k < inner; ++k) {
        const double a = src[l * inner + k], b = src[h * inner + k];
        dst[i * inner + k] = a + f * (b - a);  // exact for a == b
      }
    }
  }
  ext = out_ext;
  return out;
}

}  // namespace

VolumeGrid resample_isotropic(const VolumeGrid& volume, float target_spacing_mm) {
  VXSEG_REQUIRE(target_spacing_mm > 0.0f && std::isfinite(target_spacing_mm),
                "target spacing must be positive, got ", target_spacing_mm);
  volume.validate();
  for (auto e : volume.extents) VXSEG_REQUIRE(e > 0, "cannot resample an empty volume");
  const bool nearest = volume.kind == VolumeKind::label;
  std::vector<double> buf(volume.values.begin(), volume.values.end());
  auto ext = volume.extents;
  for (int a = 0; a < 3; ++a) {
    const double ratio = static_cast<double>(target_spacing_mm) / volume.spacing[a];
    const auto n_out = static_cast<std::int64_t>(
        std::floor(static_cast<double>(ext[a] - 1) / ratio + 1e-9)) + 1;
    buf = resample_axis(buf, ext, a, n_out, ratio, nearest);
  }
  VolumeGrid out(volume.kind, ext, {target_spacing_mm, target_spacing_mm, target_spacing_mm});
  out.origin = volume.origin;
  for (std::size_t i = 0; i < buf.size(); ++i) out.values[i] = static_cast<float>(buf[i]);
  return out;
}

VolumeGrid center_crop_pad(const VolumeGrid& volume, std::array<std::int64_t, 3> extents) {
  for (auto e : extents) VXSEG_REQUIRE(e > 0, "crop extents must be positive");
  VolumeGrid out(volume.kind, extents, volume.spacing, 0.0f);
  std::array<std::int64_t, 3> shift{};  // source index of output index 0
  for (int a = 0; a < 3; ++a) {
    shift[a] = (volume.extents[a] - extents[a]) / 2;
    out.origin[a] = volume.origin[a] + static_cast<float>(shift[a]) * volume.spacing[a];
  }
  for (std::int64_t z = 0; z < extents[0]; ++z) {
    const std::int64_t sz = z + shift[0];
    if (sz < 0 || sz >= volume.extents[0]) continue;
    for (std::int64_t y = 0; y < extents[1]; ++y) {
      const std::int64_t sy = y + shift[1];
      if (sy < 0 || sy >= volume.extents[1]) continue;
      for (std::int64_t x = 0; x < extents[2]; ++x) {
        const std::int64_t sx = x + shift[2];
        if (sx < 0 || sx >= volume.extents[2]) continue;
        out.at(z, y, x) = volume.at(sz, sy, sx);
      }
    }
  }
  return out;
}

}  // namespace vxseg
