#pragma once

#include "vxseg/di2in.hpp"
#include "vxseg/volume.hpp"

namespace vxseg {

// Inference-mode probability map of one image volume. Extents that are not
// multiples of the generator's divisor are zero-padded at the high end of
// each axis and the output is cropped back, so the map always matches the
// input grid (extents, spacing, origin).
VolumeGrid predict_volume(Di2in& g, const VolumeGrid& image);

// Input extents after padding.
std::array<std::int64_t, 3> padded_extents(const Di2inSpec& spec,
                                           const std::array<std::int64_t, 3>& extents);

}  // namespace vxseg
