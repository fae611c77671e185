#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vxseg/autograd.hpp"
#include "vxseg/ops.hpp"

namespace vxseg {

// Discriminator D: conv_levels stages of [3x3x3 conv stride 2 -> leaky ReLU
// -> batch norm] with widths base_filters * 2^l, then global average pooling,
// a linear map to one logit and a sigmoid. The input is the label or
// probability map alone; condition_on_image adds the image as a second
// channel.
struct DiscriminatorSpec {
  int base_filters = 8;
  int conv_levels = 4;
  float leaky_alpha = 0.01f;
  bool condition_on_image = false;

  void validate() const;
  int width(int level) const { return base_filters << level; }
  int input_channels() const { return condition_on_image ? 2 : 1; }
  std::int64_t min_extent() const { return std::int64_t{1} << conv_levels; }

  std::string to_text() const;
  static DiscriminatorSpec from_text(const std::string& text);
};

class Discriminator {
 public:
  Discriminator(DiscriminatorSpec spec, std::uint64_t seed);

  // maps [N, input_channels, D, H, W] -> D(Y) in (0, 1), shape [N].
  Var forward(Tape& tape, Var maps, NormMode mode, const BatchNormOptions& norm = {});
  void check_input(const Shape& shape) const;

  const DiscriminatorSpec& spec() const { return spec_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  DiscriminatorSpec spec_;
  ParameterSet params_;
};

// l_D = -mean(log D(Y_gt)) - mean(log(1 - D(Y_pred))), probabilities clamped
// as in bce_loss. Pass predictions as constants to keep the generator out of
// this graph.
Var discriminator_loss(Var d_on_gt, Var d_on_pred);

// Non-saturating generator objective: seg_loss - lambda * mean(log D(G(x))).
// Minimizing it pushes D(G(x)) toward 1. Freeze the discriminator parameters
// (ParameterSet::set_trainable(false)) so this loss only updates G.
Var generator_adversarial_loss(Var seg_loss, Var d_on_pred, double lambda);

void save_discriminator(const Discriminator& net, const std::filesystem::path& path);
Discriminator load_discriminator(const std::filesystem::path& path);

}  // namespace vxseg
