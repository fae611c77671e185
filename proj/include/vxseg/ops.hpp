#pragma once

#include <span>

#include "vxseg/autograd.hpp"

namespace vxseg {

// Probability clamp applied before every logarithm.
inline constexpr double kProbEps = 1e-7;

// 3x3x3 convolution, padding 1. input [N,C,D,H,W], weight [F,C,3,3,3],
// bias [F]; stride 1 or 2.
Var conv3d(Var input, Var weight, Var bias, int stride);

// True for the upscale factors the network uses: powers of two up to 32.
bool is_supported_upscale_factor(int factor);

// Separable linear interpolation along the three spatial axes with
// align-corners semantics: [N,C,D,H,W] -> [N,C,fD,fH,fW].
Var trilinear_upscale(Var input, int factor);

// x if x >= 0 else alpha * x; derivative at 0 is 1.
Var leaky_relu(Var input, float alpha);

enum class NormMode { train, infer };

struct BatchNormOptions {
  float momentum = 0.9f;  // running = momentum * running + (1 - momentum) * batch
  float epsilon = 1e-5f;
  bool update_running_stats = true;
};

// Per-channel normalization of [N,C,...]. Train mode normalizes by batch
// statistics (biased variance) and folds them into the running stats; infer
// mode uses the running stats.
Var batch_norm(Var input, Var gamma, Var beta, NormState& state, NormMode mode,
               const BatchNormOptions& options = {});

// Channel concatenation of [N,Ci,D,H,W] tensors with equal N and spatial extents.
Var concat_channels(std::span<const Var> parts);
Var concat_channels(Var a, Var b);

Var sigmoid(Var input);

// Mean over all elements of -[t log p + (1 - t) log(1 - p)] with p clamped to
// [kProbEps, 1 - kProbEps]. Targets must be exactly 0 or 1.
Var bce_loss(Var pred_prob, const Tensor& target);

// sum_i weights[i] * terms[i] over one-element tensors.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

// [N,C,...] -> [N,C], mean over the spatial axes.
Var global_avg_pool(Var input);

// [N,C] x [O,C]^T + [O] -> [N,O].
Var linear(Var input, Var weight, Var bias);

// Batch items [begin, end) along axis 0.
Var slice_batch(Var input, std::int64_t begin, std::int64_t end);

// Same data, new shape.
Var reshape(Var input, Shape shape);

}  // namespace vxseg
