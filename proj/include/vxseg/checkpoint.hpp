#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vxseg/autograd.hpp"

namespace vxseg {

class Di2in;

inline constexpr char kCheckpointMagic[4] = {'V', 'X', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

// "VXCK" | u16 version | u32-length spec text | u32 count | records
// {u32-length name, u32 rank, rank x u32 extents, f32 payload} | u32 count |
// running-stat records (<norm>.running_mean, <norm>.running_var) in the same
// shape. Little-endian throughout.
struct Checkpoint {
  std::string spec_text;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> stats;

  // Value of the "kind" key in the spec text, empty if absent.
  std::string kind() const;
};

Checkpoint make_checkpoint(std::string spec_text, const ParameterSet& params);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies values into `params`; names and shapes must match one-to-one.
void apply_checkpoint(const Checkpoint& ckpt, ParameterSet& params);

void save_generator(const Di2in& net, const std::filesystem::path& path);
Di2in load_generator(const std::filesystem::path& path);

}  // namespace vxseg
