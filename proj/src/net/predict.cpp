#include "vxseg/predict.hpp"

#include "vxseg/errors.hpp"

namespace vxseg {

std::array<std::int64_t, 3> padded_extents(const Di2inSpec& spec,
                                           const std::array<std::int64_t, 3>& extents) {
  const std::int64_t m = spec.divisor();
  std::array<std::int64_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    VXSEG_REQUIRE(extents[a] >= 1, "volume extent ", extents[a], " is not positive");
    out[a] = (extents[a] + m - 1) / m * m;
  }
  return out;
}

VolumeGrid predict_volume(Di2in& g, const VolumeGrid& image) {
  VXSEG_REQUIRE(image.kind == VolumeKind::image, "prediction input must be an image volume");
  image.validate();
  const auto& e = image.extents;
  const auto p = padded_extents(g.spec(), e);

  Tensor input({1, 1, p[0], p[1], p[2]}, 0.0f);
  for (std::int64_t z = 0; z < e[0]; ++z)
    for (std::int64_t y = 0; y < e[1]; ++y)
      for (std::int64_t x = 0; x < e[2]; ++x)
        input[static_cast<std::size_t>((z * p[1] + y) * p[2] + x)] = image.at(z, y, x);

  Tape tape;
  const Tensor prob = g.forward(tape, tape.constant(input), NormMode::infer).final_prob.value();

  VolumeGrid out(VolumeKind::image, e, image.spacing);
  out.origin = image.origin;
  for (std::int64_t z = 0; z < e[0]; ++z)
    for (std::int64_t y = 0; y < e[1]; ++y)
      for (std::int64_t x = 0; x < e[2]; ++x)
        out.at(z, y, x) = prob[static_cast<std::size_t>((z * p[1] + y) * p[2] + x)];
  return out;
}

}  // namespace vxseg
