#pragma once

#include <cstdint>

namespace vxseg::kernels {

// Geometry of a 3x3x3, padding-1 convolution over NCDHW data.
struct ConvGeometry {
  std::int64_t batch = 0;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t depth = 0, height = 0, width = 0;          // input extents
  std::int64_t out_depth = 0, out_height = 0, out_width = 0;
  int stride = 1;
};

ConvGeometry make_conv_geometry(std::int64_t batch, std::int64_t in_channels,
                                std::int64_t out_channels, std::int64_t depth,
                                std::int64_t height, std::int64_t width, int stride);

// y[n,f] = bias[f] + sum_c w[f,c] * x[n,c]   (w is [F, C, 3, 3, 3])
void conv3d_forward(const ConvGeometry& g, const float* x, const float* w, const float* bias,
                    float* y);

// Accumulates input / weight / bias gradients. Any of grad_x, grad_w,
// grad_bias may be null to skip that term.
void conv3d_backward(const ConvGeometry& g, const float* x, const float* w, const float* grad_y,
                     float* grad_x, float* grad_w, float* grad_bias);

}  // namespace vxseg::kernels
