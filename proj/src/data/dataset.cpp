#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "vxseg/errors.hpp"
#include "vxseg/phantom.hpp"
#include "vxseg/rng.hpp"

namespace vxseg {

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_(batch_size), seed_(seed) {
  VXSEG_REQUIRE(dataset_size > 0, "batch sampler needs a non-empty dataset");
  VXSEG_REQUIRE(batch_size > 0 && batch_size <= dataset_size, "batch size ", batch_size,
                " must lie in [1, ", dataset_size, "]");
  order_.resize(size_);
  shuffle();
}

void BatchSampler::shuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng(derive_seed(seed_, epoch_));
  for (std::size_t i = size_; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  if (cursor_ + batch_ > size_) {
    ++epoch_;
    shuffle();
  }
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
  cursor_ += batch_;
  return batch;
}

std::pair<VolumeGrid, VolumeGrid> synthesize_case(const SynthOptions& options,
                                                  std::uint64_t case_seed,
                                                  float* source_spacing_z) {
  VXSEG_REQUIRE(options.size >= kMinPhantomExtent, "synthetic volume size must be at least ",
                kMinPhantomExtent);
  VXSEG_REQUIRE(options.spacing_mm > 0.0f, "synthetic spacing must be positive");
  VXSEG_REQUIRE(options.min_slice_mm > 0.0f && options.min_slice_mm <= options.max_slice_mm,
                "invalid slice distance range");
  Rng rng(derive_seed(case_seed, 0));
  const auto sz = static_cast<float>(rng.uniform(options.min_slice_mm, options.max_slice_mm));
  if (source_spacing_z) *source_spacing_z = sz;

  PhantomParams p = sample_phantom_params(case_seed);
  const double fov = static_cast<double>(options.size) * options.spacing_mm;
  const auto slices = std::max<std::int64_t>(
      kMinPhantomExtent, static_cast<std::int64_t>(std::ceil(fov / sz)) + 1);
  p.extents = {slices, options.size, options.size};
  p.spacing = {sz, options.spacing_mm, options.spacing_mm};
  auto [image, label] = generate_phantom(p);

  const std::array<std::int64_t, 3> target{options.size, options.size, options.size};
  return {center_crop_pad(resample_isotropic(image, options.spacing_mm), target),
          center_crop_pad(resample_isotropic(label, options.spacing_mm), target)};
}

std::vector<CaseEntry> synthesize_dataset(const std::filesystem::path& dir,
                                          const SynthOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(detail::concat("cannot create ", dir.string(), ": ", ec.message()));

  std::vector<CaseEntry> cases;
  std::ostringstream manifest;
  manifest << "case\timage\tlabel\tseed\tsource_spacing_z_mm\n";
  for (std::size_t i = 0; i < options.count; ++i) {
    std::ostringstream id;
    id << "case_" << std::setw(4) << std::setfill('0') << i;
    CaseEntry c;
    c.id = id.str();
    c.seed = derive_seed(options.seed, i);
    auto [image, label] = synthesize_case(options, c.seed, &c.source_spacing_z);
    c.image = dir / (c.id + "_image.vxsg");
    c.label = dir / (c.id + "_label.vxsg");
    write_volume(image, c.image);
    write_volume(label, c.label);
    manifest << c.id << '\t' << c.image.filename().string() << '\t'
             << c.label.filename().string() << '\t' << c.seed << '\t'
             << std::setprecision(9) << c.source_spacing_z << '\n';
    cases.push_back(std::move(c));
  }
  std::ofstream out(dir / kManifestName, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(detail::concat("cannot write ", (dir / kManifestName).string()));
  out << manifest.str();
  if (!out) throw IoError(detail::concat("write to ", (dir / kManifestName).string(), " failed"));
  return cases;
}

std::vector<CaseEntry> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw IoError(detail::concat("cannot open ", path.string()));
  std::string line;
  std::getline(in, line);
  if (line.rfind("case\timage\tlabel", 0) != 0)
    throw FormatError(detail::concat(path.string(), ": missing manifest header"));
  std::vector<CaseEntry> cases;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    CaseEntry c;
    std::string image, label;
    if (!std::getline(fields, c.id, '\t') || !std::getline(fields, image, '\t') ||
        !std::getline(fields, label, '\t') || !(fields >> c.seed >> c.source_spacing_z))
      throw FormatError(detail::concat(path.string(), ": malformed row ", row));
    c.image = dir / image;
    c.label = dir / label;
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace vxseg
