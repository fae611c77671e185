#pragma once

// Brute-force references for the segmentation metrics: neighbour scans and
// all-pairs distances, no distance transform.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "vxseg/metrics.hpp"
#include "vxseg/volume.hpp"

namespace oracle {

using vxseg::SurfaceDistance;
using vxseg::VolumeGrid;
using vxseg::VolumeKind;
using vxseg::Voxel;

inline VolumeGrid mask(std::array<std::int64_t, 3> e, std::array<float, 3> sp = {1, 1, 1}) {
  return VolumeGrid(VolumeKind::label, e, sp, 0.0f);
}

inline VolumeGrid random_mask(std::array<std::int64_t, 3> e, std::uint64_t seed, double p,
                       std::array<float, 3> sp = {1, 1, 1}) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  VolumeGrid m = mask(e, sp);
  for (auto& v : m.values) v = b(rng) ? 1.0f : 0.0f;
  return m;
}

// Random blob: union of a few balls, so surfaces look like segmentations.
inline VolumeGrid blob_mask(std::array<std::int64_t, 3> e, std::uint64_t seed, std::array<float, 3> sp = {1, 1, 1}) {
  std::mt19937_64 rng(seed);
  VolumeGrid m = mask(e, sp);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int b = 0; b < 3; ++b) {
    const double cz = u(rng) * e[0], cy = u(rng) * e[1], cx = u(rng) * e[2];
    const double r = 1.5 + u(rng) * e[2] / 4.0;
    for (std::int64_t z = 0; z < e[0]; ++z)
      for (std::int64_t y = 0; y < e[1]; ++y)
        for (std::int64_t x = 0; x < e[2]; ++x)
          if ((z - cz) * (z - cz) + (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.at(z, y, x) = 1.0f;
  }
  return m;
}

// Surface by scanning all six neighbours with explicit bounds handling.
inline std::vector<Voxel> surface_oracle(const VolumeGrid& m) {
  std::vector<Voxel> out;
  const auto& e = m.extents;
  const int dz[6] = {-1, 1, 0, 0, 0, 0}, dy[6] = {0, 0, -1, 1, 0, 0}, dx[6] = {0, 0, 0, 0, -1, 1};
  for (std::int64_t z = 0; z < e[0]; ++z)
    for (std::int64_t y = 0; y < e[1]; ++y)
      for (std::int64_t x = 0; x < e[2]; ++x) {
        if (m.at(z, y, x) == 0.0f) continue;
        bool surface = false;
        for (int k = 0; k < 6; ++k) {
          const std::int64_t a = z + dz[k], b = y + dy[k], c = x + dx[k];
          if (a < 0 || b < 0 || c < 0 || a >= e[0] || b >= e[1] || c >= e[2] || m.at(a, b, c) == 0.0f)
            surface = true;
        }
        if (surface) out.push_back({z, y, x});
      }
  return out;
}

// All-pairs point-to-set distances.
inline SurfaceDistance asd_oracle(const VolumeGrid& a, const VolumeGrid& b) {
  const auto sa = surface_oracle(a), sb = surface_oracle(b);
  auto dist = [&](const Voxel& p, const Voxel& q) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = static_cast<double>(p[k] - q[k]) * a.spacing[k];
      s += d * d;
    }
    return std::sqrt(s);
  };
  double sum = 0.0, mx = 0.0;
  for (const auto* pair : {&sa, &sb}) {
    const auto& from = *pair;
    const auto& to = pair == &sa ? sb : sa;
    for (const Voxel& p : from) {
      double best = INFINITY;
      for (const Voxel& q : to) best = std::min(best, dist(p, q));
      sum += best;
      mx = std::max(mx, best);
    }
  }
  return {sum / static_cast<double>(sa.size() + sb.size()), mx};
}

// 2|P & G| / (|P| + |G|) by counting; 1 for two empty masks.
inline double dice_oracle(const VolumeGrid& p, const VolumeGrid& g) {
  long long a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    a += p.values[i] == 1.0f;
    b += g.values[i] == 1.0f;
    both += p.values[i] == 1.0f && g.values[i] == 1.0f;
  }
  return a + b == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

}  // namespace oracle
