#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vxseg/autograd.hpp"
#include "vxseg/ops.hpp"

namespace vxseg {

// Architecture of the deep image-to-image generator. Encoder level l
// (0 <= l < encoder_levels) has width base_filters * 2^l; the bottleneck at
// level encoder_levels has twice the last encoder width. Supervision
// branches attach to decoder levels and are upscaled by 2^level.
struct Di2inSpec {
  int base_filters = 16;
  int encoder_levels = 4;
  float leaky_alpha = 0.01f;
  std::vector<int> branch_levels{4, 2, 0};
  std::vector<int> branch_factors{16, 4, 1};
  std::vector<double> branch_weights{1.0, 1.0, 1.0};
  double final_weight = 1.0;
  int fuse_filters = 8;  // width of the conv that combines the branch maps

  void validate() const;
  int width(int level) const { return base_filters << level; }
  std::int64_t divisor() const { return std::int64_t{1} << encoder_levels; }

  // Canonical key-sorted `key = value` text; from_text rejects unknown keys.
  std::string to_text() const;
  static Di2inSpec from_text(const std::string& text);
};

struct GeneratorOutput {
  Var final_prob;                 // [N,1,D,H,W]
  std::vector<Var> branch_probs;  // one per branch, same shape
};

class Di2in {
 public:
  // Parameters drawn from N(0, 2 / fan_in), biases 0, BN gamma 1 / beta 0.
  // Convolutions followed by batch norm carry no bias (beta takes its role).
  Di2in(Di2inSpec spec, std::uint64_t seed);

  // input [N,1,D,H,W] with each spatial extent divisible by 2^encoder_levels.
  // Train mode uses batch statistics in every BN layer (and updates the
  // running stats when norm.update_running_stats); infer mode uses the
  // running stats.
  GeneratorOutput forward(Tape& tape, Var input, NormMode mode,
                          const BatchNormOptions& norm = {});

  // Throws ContractViolation unless `shape` is a valid input shape.
  void check_input(const Shape& shape) const;

  const Di2inSpec& spec() const { return spec_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  struct Conv {
    std::size_t weight;
    std::size_t bias;  // == kNoBias for convolutions followed by batch norm
    int stride;
    std::string name;
  };
  struct Norm {
    std::size_t gamma, beta;
    std::string name;
  };
  struct Block {  // conv -> leaky ReLU -> batch norm
    Conv conv;
    Norm norm;
  };

  static constexpr std::size_t kNoBias = static_cast<std::size_t>(-1);

  Conv add_conv(const std::string& name, int in, int out, int stride, std::uint64_t seed,
                bool bias);
  Norm add_norm(const std::string& name, int channels);
  Block add_block(const std::string& name, int in, int out, int stride, std::uint64_t seed);

  Var conv(Tape& tape, const Conv& c, Var x);
  Var block(Tape& tape, const Block& b, Var x, NormMode mode, const BatchNormOptions& norm);

  Di2inSpec spec_;
  ParameterSet params_;
  std::vector<Block> enc1_, enc2_;  // per encoder level: full-res conv, stride-2 conv
  Block bott1_, bott2_;
  std::vector<Block> dec1_, dec2_;  // per decoder level below the bottleneck
  std::vector<Conv> heads_;         // per branch
  Conv fuse_, out_;
};

// sum_i w_i * bce(branch_i, label) + w_final * bce(final, label).
Var total_loss(const GeneratorOutput& out, const Tensor& label, const Di2inSpec& spec);

}  // namespace vxseg
