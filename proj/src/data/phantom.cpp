#include "vxseg/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "vxseg/errors.hpp"
#include "vxseg/rng.hpp"

namespace vxseg {
namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

struct Ellipsoid {
  Vec3 center;
  Mat3 rot;  // columns are the principal axes
  Vec3 semi;

  // Squared normalized radius of p; <= 1 inside.
  double level(const Vec3& p) const {
    const Vec3 d{p[0] - center[0], p[1] - center[1], p[2] - center[2]};
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double u = (rot[0][k] * d[0] + rot[1][k] * d[1] + rot[2][k] * d[2]) / semi[k];
      s += u * u;
    }
    return s;
  }
};

// Uniformly distributed rotation from a random unit quaternion.
Mat3 random_rotation(Rng& rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double two_pi = 2.0 * 3.14159265358979323846;
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double w = a * std::sin(two_pi * u2), x = a * std::cos(two_pi * u2);
  const double y = b * std::sin(two_pi * u3), z = b * std::cos(two_pi * u3);
  return Mat3{Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
              Vec3{2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
              Vec3{2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

std::array<float, 3> centred_origin(const std::array<std::int64_t, 3>& ext,
                                    const std::array<float, 3>& spacing) {
  std::array<float, 3> o{};
  for (int a = 0; a < 3; ++a) o[a] = -0.5f * static_cast<float>(ext[a] - 1) * spacing[a];
  return o;
}

// In-place separable Gaussian along one axis, replicate boundary.
void blur_axis(VolumeGrid& v, int axis, double sigma_vox) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_vox));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma_vox * sigma_vox));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& w : k) w /= total;

  const auto& e = v.extents;
  const std::int64_t n = e[axis];
  const std::int64_t stride = axis == 0 ? e[1] * e[2] : axis == 1 ? e[2] : 1;
  std::vector<float> line(static_cast<std::size_t>(n));
  const std::int64_t outer = v.voxel_count() / n;
  for (std::int64_t o = 0; o < outer; ++o) {
    // Decompose the line index into the start offset.
    std::int64_t start;
    if (axis == 0) start = o;
    else if (axis == 1) start = (o / e[2]) * e[1] * e[2] + o % e[2];
    else start = o * e[2];
    for (std::int64_t i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = v.values[static_cast<std::size_t>(start + i * stride)];
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = -radius; j <= radius; ++j) {
        const std::int64_t src = std::clamp<std::int64_t>(i + j, 0, n - 1);
        s += k[static_cast<std::size_t>(j + radius)] * line[static_cast<std::size_t>(src)];
      }
      v.values[static_cast<std::size_t>(start + i * stride)] = static_cast<float>(s);
    }
  }
}

}  // namespace

void PhantomParams::validate() const {
  for (int a = 0; a < 3; ++a) {
    VXSEG_REQUIRE(extents[a] >= kMinPhantomExtent, "phantom extent ", a, " is ", extents[a],
                  "; at least ", kMinPhantomExtent, " voxels are required per axis");
    VXSEG_REQUIRE(spacing[a] > 0.0f, "phantom spacing must be positive");
  }
  VXSEG_REQUIRE(n_lobes >= 1, "phantom needs at least one lobe");
  VXSEG_REQUIRE(intensity_contrast >= 0.0f && intensity_contrast <= 1.0f,
                "intensity_contrast must lie in [0, 1], got ", intensity_contrast);
  VXSEG_REQUIRE(boundary_fuzz_mm >= 0.0f, "boundary_fuzz_mm must be nonnegative");
  VXSEG_REQUIRE(noise_sigma >= 0.0f, "noise_sigma must be nonnegative");
  VXSEG_REQUIRE(distractor_count >= 0, "distractor_count must be nonnegative");
}

PhantomParams sample_phantom_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  PhantomParams p;
  p.seed = seed;
  p.n_lobes = static_cast<int>(rng.between(1, 3));
  p.intensity_contrast = static_cast<float>(rng.uniform(0.4, 1.0));
  p.boundary_fuzz_mm = static_cast<float>(rng.uniform(0.0, 4.0));
  p.noise_sigma = static_cast<float>(rng.uniform(0.02, 0.12));
  p.distractor_count = static_cast<int>(rng.between(0, 3));
  return p;
}

std::pair<VolumeGrid, VolumeGrid> generate_phantom(const PhantomParams& params) {
  params.validate();
  Rng rng(derive_seed(params.seed, 2));

  const auto& ext = params.extents;
  const auto& sp = params.spacing;
  // Shapes scale with the smallest physical side of the field of view.
  double fov = 1e300;
  for (int a = 0; a < 3; ++a) fov = std::min(fov, static_cast<double>(ext[a]) * sp[a]);

  std::vector<Ellipsoid> lobes;
  {
    Ellipsoid first;
    for (int a = 0; a < 3; ++a) first.center[a] = rng.uniform(-0.08, 0.08) * fov;
    first.rot = random_rotation(rng);
    for (int a = 0; a < 3; ++a) first.semi[a] = rng.uniform(0.18, 0.32) * fov;
    lobes.push_back(first);
  }
  for (int l = 1; l < params.n_lobes; ++l) {
    // Centre inside the first lobe keeps the union connected.
    const Ellipsoid& f = lobes.front();
    Vec3 u{rng.normal(), rng.normal(), rng.normal()};
    const double norm = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]) + 1e-12;
    const double r = rng.uniform(0.3, 0.7);
    Ellipsoid e;
    for (int a = 0; a < 3; ++a) {
      e.center[a] = f.center[a];
      for (int k = 0; k < 3; ++k) e.center[a] += f.rot[a][k] * (u[k] / norm) * r * f.semi[k];
    }
    e.rot = random_rotation(rng);
    for (int a = 0; a < 3; ++a) e.semi[a] = rng.uniform(0.12, 0.24) * fov;
    lobes.push_back(e);
  }

  struct Sphere {
    Vec3 center;
    double radius;
  };
  std::vector<Sphere> distractors;
  for (int d = 0; d < params.distractor_count; ++d) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      Sphere s;
      for (int a = 0; a < 3; ++a)
        s.center[a] = rng.uniform(-0.4, 0.4) * static_cast<double>(ext[a]) * sp[a];
      s.radius = rng.uniform(0.03, 0.06) * fov;
      // Keep clear of the organ: reject centres inside any lobe grown by
      // the radius plus the blur width.
      bool clear = true;
      for (const auto& e : lobes) {
        Ellipsoid grown = e;
        for (int a = 0; a < 3; ++a) grown.semi[a] += s.radius + 2.0 * params.boundary_fuzz_mm;
        if (grown.level(s.center) <= 1.0) clear = false;
      }
      if (clear) {
        distractors.push_back(s);
        break;
      }
    }
  }

  VolumeGrid image(VolumeKind::image, ext, sp, params.base_intensity);
  VolumeGrid label(VolumeKind::label, ext, sp, 0.0f);
  image.origin = label.origin = centred_origin(ext, sp);
  for (std::int64_t z = 0; z < ext[0]; ++z)
    for (std::int64_t y = 0; y < ext[1]; ++y)
      for (std::int64_t x = 0; x < ext[2]; ++x) {
        const Vec3 p{image.origin[0] + static_cast<double>(z) * sp[0],
                     image.origin[1] + static_cast<double>(y) * sp[1],
                     image.origin[2] + static_cast<double>(x) * sp[2]};
        bool inside = false;
        for (const auto& e : lobes)
          if (e.level(p) <= 1.0) {
            inside = true;
            break;
          }
        float v = params.base_intensity;
        if (inside) {
          label.at(z, y, x) = 1.0f;
          v += params.intensity_contrast;
        } else {
          for (const auto& s : distractors) {
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) d2 += (p[a] - s.center[a]) * (p[a] - s.center[a]);
            if (d2 <= s.radius * s.radius) {
              v = params.base_intensity + params.distractor_intensity;
              break;
            }
          }
        }
        image.at(z, y, x) = v;
      }

  if (params.boundary_fuzz_mm > 0.0f) {
    for (int a = 0; a < 3; ++a) {
      const double sigma = params.boundary_fuzz_mm / sp[a];
      if (sigma >= 0.05) blur_axis(image, a, sigma);
    }
  }
  if (params.noise_sigma > 0.0f) {
    Rng noise(derive_seed(params.seed, 3));
    for (auto& v : image.values) v += static_cast<float>(noise.normal(0.0, params.noise_sigma));
  }
  return {std::move(image), std::move(label)};
}

}  // namespace vxseg
