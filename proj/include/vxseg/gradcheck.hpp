#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vxseg/adversary.hpp"
#include "vxseg/di2in.hpp"

namespace vxseg {

// Finite-difference verification of the autograd engine.
//
// Primitive ops are checked in float32 with a central step of 1e-3 on every
// input coordinate; the scalar under test is a fixed random projection
// sum_i r_i y_i of the op output. Composed networks are checked against a
// double-precision reference forward pass: float32 differences cannot
// resolve a deep leaky-ReLU network (a 1e-3 step crosses dozens of kinks, a
// smaller one drowns in rounding), so the reference evaluates the loss with
// a tiny step and shrinks it further whenever a perturbation flips the sign
// of any leaky-ReLU input.
//
// Error measure per tensor: ||analytic - numeric||_2 / max(||analytic||_2,
// ||numeric||_2) over the checked coordinates.
struct GradcheckOptions {
  std::uint64_t seed = 20170708;
  double primitive_tolerance = 1e-3;
  double composed_tolerance = 1e-2;
  int composed_coordinates = 10;  // sampled coordinates per parameter tensor
  bool include_composed = true;
};

struct GradcheckEntry {
  std::string name;
  bool composed = false;
  double max_error = 0.0;  // worst tensor error
  double tolerance = 0.0;
  std::string worst;  // tensor that produced max_error
  bool passed() const { return max_error <= tolerance; }
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool passed() const;
  // Entry with the largest error-to-tolerance ratio; null when empty.
  const GradcheckEntry* worst() const;
};

GradcheckReport run_gradcheck(const GradcheckOptions& options);

// Composed check of one generator: every parameter tensor, `coordinates`
// sampled entries each, loss = total_loss on a [1,1,16,16,16] random input
// (extent raised to the spec's divisor when needed).
GradcheckEntry check_di2in_gradients(const Di2inSpec& spec, std::uint64_t seed, int coordinates,
                                     double tolerance);

// Composed check of one discriminator under l_D: a batch of two binary
// maps (ground truth) and two soft maps (predictions), 16^3 each.
GradcheckEntry check_discriminator_gradients(const DiscriminatorSpec& spec, std::uint64_t seed,
                                             int coordinates, double tolerance);

// The tiny generator of the composed check: base 2, two encoder levels,
// branches at levels 2, 1, 0.
Di2inSpec gradcheck_tiny_spec();
// Tiny discriminator: base 2, three stride-2 stages.
DiscriminatorSpec gradcheck_tiny_discriminator_spec();

}  // namespace vxseg
