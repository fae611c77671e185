#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vxseg/volume.hpp"

namespace vxseg {

// Procedural organ phantom: a connected union of rotated ellipsoids on a
// uniform background, with blur, noise and bright non-organ structures.
struct PhantomParams {
  std::uint64_t seed = 0;
  std::array<std::int64_t, 3> extents{32, 32, 32};
  std::array<float, 3> spacing{3.0f, 3.0f, 3.0f};  // mm
  int n_lobes = 1;
  float intensity_contrast = 1.0f;  // organ minus background, in [0, 1]
  float boundary_fuzz_mm = 0.0f;    // Gaussian blur sigma
  float noise_sigma = 0.0f;
  int distractor_count = 0;
  float base_intensity = 0.0f;
  float distractor_intensity = 1.5f;

  void validate() const;
};

// Minimum extent per axis accepted by generate_phantom.
inline constexpr std::int64_t kMinPhantomExtent = 16;

// Draws the randomized axes (lobes, contrast, blur, noise, distractors) from
// their default ranges; geometry fields are left at the defaults.
PhantomParams sample_phantom_params(std::uint64_t seed);

// Image and binary label on the same grid, centred on the physical origin.
// A pure function of params.
std::pair<VolumeGrid, VolumeGrid> generate_phantom(const PhantomParams& params);

// Resamples to spacing (t, t, t) keeping the origin. Each axis gets
// floor((n - 1) * s / t) + 1 samples. Images are interpolated trilinearly,
// labels take the nearest source voxel.
VolumeGrid resample_isotropic(const VolumeGrid& volume, float target_spacing_mm);

// Crops or zero-pads symmetrically to `extents`, shifting the origin so the
// retained voxels keep their physical positions.
VolumeGrid center_crop_pad(const VolumeGrid& volume, std::array<std::int64_t, 3> extents);

// Endless stream of mini-batches of indices into a dataset of `dataset_size`
// cases. Each epoch is a seeded permutation cut into disjoint batches; a
// remainder smaller than batch_size is dropped.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const { return size_ / batch_; }

 private:
  void shuffle();

  std::size_t size_, batch_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t epoch_ = 0, cursor_ = 0;
};

// On-disk synthetic dataset: <dir>/manifest.tsv plus one image and one label
// volume per case.
struct CaseEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path label;
  std::uint64_t seed = 0;
  float source_spacing_z = 0.0f;
};

struct SynthOptions {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::int64_t size = 32;       // output voxels per axis
  float spacing_mm = 3.0f;      // output isotropic spacing
  float min_slice_mm = 0.5f;    // source inter-slice distance range
  float max_slice_mm = 7.0f;
};

inline constexpr const char* kManifestName = "manifest.tsv";

// One case: phantom on an anisotropic source grid (in-plane spacing equal to
// the target, slice distance drawn uniformly from the configured range),
// resampled to isotropic spacing and cropped or padded to size^3.
std::pair<VolumeGrid, VolumeGrid> synthesize_case(const SynthOptions& options,
                                                  std::uint64_t case_seed,
                                                  float* source_spacing_z = nullptr);

std::vector<CaseEntry> synthesize_dataset(const std::filesystem::path& dir,
                                          const SynthOptions& options);

// Reads manifest.tsv; paths in the result are absolute or relative to the
// working directory.
std::vector<CaseEntry> read_manifest(const std::filesystem::path& dir);

}  // namespace vxseg
