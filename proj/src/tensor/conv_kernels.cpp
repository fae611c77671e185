// Direct 3x3x3 convolution over zero-padded volumes flattened into a single
// index space. With the padding baked into the source buffer every kernel tap
// becomes a constant offset, so each output row block is a sum of shifted
// contiguous slices. Stride-2 inputs are split into eight parity phases, which
// turns the strided reads back into constant-offset contiguous reads.
//
// Accumulation: each run of up to 9 taps (one kernel plane) of one input
// channel is summed in float; those partial sums and the bias are accumulated
// in double and rounded once on store.
// Loop order is fixed, so results do not depend on anything but the inputs.

#include "conv_kernels.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <vector>

#include "vxseg/errors.hpp"

namespace vxseg::kernels {
namespace {

constexpr std::int64_t kTile = 64;
constexpr int kTaps = 27;

std::int64_t round_up(std::int64_t v, std::int64_t m) { return (v + m - 1) / m * m; }

// Flattened source arrangement of one sample for one conv geometry.
struct Layout {
  int phases = 1;
  std::int64_t gd = 0, gh = 0, gw = 0;  // grid extents (per phase)
  std::int64_t zs = 0, ys = 0;          // grid strides
  std::int64_t q_count = 0;             // output index range [0, q_count)
  std::int64_t q_padded = 0;
  std::int64_t plane = 0;               // floats per phase array
  std::int64_t chan_stride = 0;
  std::array<std::int64_t, kTaps> off{};
};

Layout make_layout(const ConvGeometry& g) {
  Layout l;
  if (g.stride == 1) {
    l.phases = 1;
    l.gd = g.depth + 2;
    l.gh = g.height + 2;
    l.gw = g.width + 2;
  } else {
    l.phases = 8;
    l.gd = (g.depth + 3) / 2;
    l.gh = (g.height + 3) / 2;
    l.gw = (g.width + 3) / 2;
  }
  l.ys = l.gw;
  l.zs = l.gh * l.gw;
  l.q_count = (g.out_depth - 1) * l.zs + (g.out_height - 1) * l.ys + g.out_width;
  l.q_padded = round_up(l.q_count, kTile);
  const std::int64_t reach = g.stride == 1 ? 2 * l.zs + 2 * l.ys + 2 : l.zs + l.ys + 1;
  l.plane = round_up(std::max(l.gd * l.gh * l.gw, l.q_padded + reach), 16);
  l.chan_stride = l.plane * l.phases;
  for (int kd = 0; kd < 3; ++kd) {
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) {
        const int t = (kd * 3 + kh) * 3 + kw;
        if (g.stride == 1) {
          l.off[t] = kd * l.zs + kh * l.ys + kw;
        } else {
          const int phase = (kd & 1) * 4 + (kh & 1) * 2 + (kw & 1);
          l.off[t] = phase * l.plane + (kd >> 1) * l.zs + (kh >> 1) * l.ys + (kw >> 1);
        }
      }
    }
  }
  return l;
}

// Scatters one sample [C, D, H, W] into the padded (or phase-split) layout.
void pack_source(const ConvGeometry& g, const Layout& l, const float* x, std::int64_t channels,
                 std::vector<float>& buf) {
  buf.assign(static_cast<std::size_t>(channels * l.chan_stride), 0.0f);
  const std::int64_t vol = g.depth * g.height * g.width;
  for (std::int64_t c = 0; c < channels; ++c) {
    const float* xc = x + c * vol;
    float* bc = buf.data() + c * l.chan_stride;
    for (std::int64_t z = 0; z < g.depth; ++z) {
      for (std::int64_t y = 0; y < g.height; ++y) {
        const float* row = xc + (z * g.height + y) * g.width;
        if (g.stride == 1) {
          std::memcpy(bc + (z + 1) * l.zs + (y + 1) * l.ys + 1, row,
                      static_cast<std::size_t>(g.width) * sizeof(float));
        } else {
          const std::int64_t pz = (z + 1) & 1, py = (y + 1) & 1;
          const std::int64_t base = ((z + 1) >> 1) * l.zs + ((y + 1) >> 1) * l.ys;
          for (std::int64_t xi = 0; xi < g.width; ++xi) {
            const std::int64_t px = (xi + 1) & 1;
            bc[(pz * 4 + py * 2 + px) * l.plane + base + ((xi + 1) >> 1)] = row[xi];
          }
        }
      }
    }
  }
}

// out[f, q] = bias[f] + sum_c sum_t w[f, c, t] * src[c * cs + off[t] + q] for a
// block of FB output channels starting at f0. bias may be null.
template <int FB>
void gather_block(const float* src, std::int64_t cs, std::int64_t channels,
                  const std::int64_t* off, int taps, const float* w, const float* bias,
                  std::int64_t f0, float* out, std::int64_t q_padded) {
  constexpr int kRun = 9;
  for (std::int64_t q0 = 0; q0 < q_padded; q0 += kTile) {
    double accd[FB][kTile];
    for (int j = 0; j < FB; ++j) {
      const double b = bias ? bias[f0 + j] : 0.0;
      for (int i = 0; i < kTile; ++i) accd[j][i] = b;
    }
    for (std::int64_t c = 0; c < channels; ++c) {
      const float* sc = src + c * cs + q0;
      const float* wc[FB];
      for (int j = 0; j < FB; ++j) wc[j] = w + ((f0 + j) * channels + c) * taps;
      for (int t0 = 0; t0 < taps; t0 += kRun) {
        float accf[FB][kTile] = {};
        const int t1 = std::min(taps, t0 + kRun);
        for (int t = t0; t < t1; ++t) {
          const float* s = sc + off[t];
          for (int j = 0; j < FB; ++j) {
            const float wv = wc[j][t];
#pragma GCC ivdep
            for (int i = 0; i < kTile; ++i) accf[j][i] += wv * s[i];
          }
        }
        for (int j = 0; j < FB; ++j) {
          for (int i = 0; i < kTile; ++i) accd[j][i] += accf[j][i];
        }
      }
    }
    for (int j = 0; j < FB; ++j) {
      float* o = out + (f0 + j) * q_padded + q0;
      for (int i = 0; i < kTile; ++i) o[i] = static_cast<float>(accd[j][i]);
    }
  }
}

void gather(const float* src, std::int64_t cs, std::int64_t channels, const std::int64_t* off,
            int taps, const float* w, const float* bias, std::int64_t filters, float* out,
            std::int64_t q_padded) {
  std::int64_t f = 0;
  for (; f + 4 <= filters; f += 4)
    gather_block<4>(src, cs, channels, off, taps, w, bias, f, out, q_padded);
  for (; f < filters; ++f) gather_block<1>(src, cs, channels, off, taps, w, bias, f, out, q_padded);
}

// acc[j][k] += sum_q g[j][q] * s_k[q] for 4 gradient rows and 3 shifted
// source slices. q_len is a multiple of kTile.
void dot_block(const float* const g[4], const float* const s[3], std::int64_t q_len,
               double acc[4][3]) {
  constexpr std::int64_t kChunk = 256;
  constexpr int kLanes = 16;
  for (std::int64_t q0 = 0; q0 < q_len; q0 += kChunk) {
    const std::int64_t len = std::min(kChunk, q_len - q0);
    float part[4][3][kLanes] = {};
    for (std::int64_t i = 0; i < len; i += kLanes) {
      for (int j = 0; j < 4; ++j) {
        const float* gj = g[j] + q0 + i;
        for (int k = 0; k < 3; ++k) {
          const float* sk = s[k] + q0 + i;
          for (int l = 0; l < kLanes; ++l) part[j][k][l] += gj[l] * sk[l];
        }
      }
    }
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 3; ++k) {
        double sum = 0.0;
        for (int l = 0; l < kLanes; ++l) sum += part[j][k][l];
        acc[j][k] += sum;
      }
    }
  }
}

}  // namespace

ConvGeometry make_conv_geometry(std::int64_t batch, std::int64_t in_channels,
                                std::int64_t out_channels, std::int64_t depth,
                                std::int64_t height, std::int64_t width, int stride) {
  VXSEG_REQUIRE(stride == 1 || stride == 2, "conv3d stride must be 1 or 2, got ", stride);
  VXSEG_REQUIRE(batch > 0 && in_channels > 0 && out_channels > 0 && depth > 0 && height > 0 &&
                    width > 0,
                "conv3d extents must be positive");
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = in_channels;
  g.out_channels = out_channels;
  g.depth = depth;
  g.height = height;
  g.width = width;
  g.stride = stride;
  // floor((ext + 2*pad - 3) / stride) + 1 with pad = 1
  g.out_depth = (depth - 1) / stride + 1;
  g.out_height = (height - 1) / stride + 1;
  g.out_width = (width - 1) / stride + 1;
  return g;
}

void conv3d_forward(const ConvGeometry& g, const float* x, const float* w, const float* bias,
                    float* y) {
  const Layout l = make_layout(g);
  const std::int64_t in_vol = g.depth * g.height * g.width;
  const std::int64_t out_vol = g.out_depth * g.out_height * g.out_width;
  std::vector<float> src;
  std::vector<float> outq(static_cast<std::size_t>(g.out_channels * l.q_padded));
  for (std::int64_t n = 0; n < g.batch; ++n) {
    pack_source(g, l, x + n * g.in_channels * in_vol, g.in_channels, src);
    gather(src.data(), l.chan_stride, g.in_channels, l.off.data(), kTaps, w, bias,
           g.out_channels, outq.data(), l.q_padded);
    for (std::int64_t f = 0; f < g.out_channels; ++f) {
      const float* oq = outq.data() + f * l.q_padded;
      float* yf = y + (n * g.out_channels + f) * out_vol;
      for (std::int64_t z = 0; z < g.out_depth; ++z) {
        for (std::int64_t yy = 0; yy < g.out_height; ++yy) {
          const float* row = oq + z * l.zs + yy * l.ys;
          float* dst = yf + (z * g.out_height + yy) * g.out_width;
          for (std::int64_t xi = 0; xi < g.out_width; ++xi) dst[xi] = row[xi];
        }
      }
    }
  }
}

void conv3d_backward(const ConvGeometry& g, const float* x, const float* w, const float* grad_y,
                     float* grad_x, float* grad_w, float* grad_bias) {
  const Layout l = make_layout(g);
  const std::int64_t C = g.in_channels;
  const std::int64_t F = g.out_channels;
  const std::int64_t in_vol = g.depth * g.height * g.width;
  const std::int64_t out_vol = g.out_depth * g.out_height * g.out_width;

  std::vector<double> dw;
  if (grad_w) dw.assign(static_cast<std::size_t>(F * C * kTaps), 0.0);
  std::vector<double> db;
  if (grad_bias) db.assign(static_cast<std::size_t>(F), 0.0);

  // Gradient-input weights, transposed to [C, F, taps]. For stride 1 the taps
  // are mirrored; for stride 2 they are grouped by parity phase.
  std::vector<float> wt;
  std::array<std::vector<int>, 8> phase_taps;
  std::array<std::vector<float>, 8> phase_w;
  if (grad_x) {
    if (g.stride == 1) {
      wt.resize(static_cast<std::size_t>(C * F * kTaps));
      for (std::int64_t f = 0; f < F; ++f)
        for (std::int64_t c = 0; c < C; ++c)
          for (int t = 0; t < kTaps; ++t)
            wt[static_cast<std::size_t>((c * F + f) * kTaps + t)] =
                w[(f * C + c) * kTaps + (kTaps - 1 - t)];
    } else {
      for (int t = 0; t < kTaps; ++t) {
        const int kd = t / 9, kh = (t / 3) % 3, kw = t % 3;
        phase_taps[static_cast<std::size_t>((kd & 1) * 4 + (kh & 1) * 2 + (kw & 1))].push_back(t);
      }
      for (std::size_t p = 0; p < 8; ++p) {
        const auto T = static_cast<std::int64_t>(phase_taps[p].size());
        phase_w[p].resize(static_cast<std::size_t>(C * F * T));
        for (std::int64_t f = 0; f < F; ++f)
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t j = 0; j < T; ++j)
              phase_w[p][static_cast<std::size_t>((c * F + f) * T + j)] =
                  w[(f * C + c) * kTaps + phase_taps[p][static_cast<std::size_t>(j)]];
      }
    }
  }

  std::vector<float> src;
  std::vector<float> gq;
  std::vector<float> gsrc;
  std::vector<float> outq;

  for (std::int64_t n = 0; n < g.batch; ++n) {
    const float* gy = grad_y + n * F * out_vol;

    if (grad_bias) {
      for (std::int64_t f = 0; f < F; ++f) {
        double s = 0.0;
        for (std::int64_t i = 0; i < out_vol; ++i) s += gy[f * out_vol + i];
        db[static_cast<std::size_t>(f)] += s;
      }
    }

    if (grad_w) {
      pack_source(g, l, x + n * C * in_vol, C, src);
      // Output gradient in the flattened q index space, zero off the grid.
      gq.assign(static_cast<std::size_t>(round_up(F, 4) * l.q_padded), 0.0f);
      for (std::int64_t f = 0; f < F; ++f)
        for (std::int64_t z = 0; z < g.out_depth; ++z)
          for (std::int64_t yy = 0; yy < g.out_height; ++yy)
            std::memcpy(gq.data() + f * l.q_padded + z * l.zs + yy * l.ys,
                        gy + (f * g.out_depth + z) * g.out_height * g.out_width +
                            yy * g.out_width,
                        static_cast<std::size_t>(g.out_width) * sizeof(float));
      for (std::int64_t c = 0; c < C; ++c) {
        for (int t0 = 0; t0 < kTaps; t0 += 3) {
          const float* s[3];
          for (int k = 0; k < 3; ++k) s[k] = src.data() + c * l.chan_stride + l.off[t0 + k];
          for (std::int64_t f0 = 0; f0 < F; f0 += 4) {
            const float* gr[4];
            for (int j = 0; j < 4; ++j) gr[j] = gq.data() + (f0 + j) * l.q_padded;
            double acc[4][3] = {};
            dot_block(gr, s, l.q_padded, acc);
            for (int j = 0; j < 4 && f0 + j < F; ++j)
              for (int k = 0; k < 3; ++k)
                dw[static_cast<std::size_t>(((f0 + j) * C + c) * kTaps + t0 + k)] += acc[j][k];
          }
        }
      }
    }

    if (grad_x) {
      float* gx = grad_x + n * C * in_vol;
      if (g.stride == 1) {
        // Same geometry with in/out channels swapped and mirrored taps.
        ConvGeometry gt = g;
        gt.in_channels = F;
        gt.out_channels = C;
        pack_source(gt, l, gy, F, gsrc);
        std::array<std::int64_t, kTaps> off{};
        for (int t = 0; t < kTaps; ++t) off[t] = l.off[t];
        outq.assign(static_cast<std::size_t>(C * l.q_padded), 0.0f);
        gather(gsrc.data(), l.chan_stride, F, off.data(), kTaps, wt.data(), nullptr, C,
               outq.data(), l.q_padded);
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t z = 0; z < g.depth; ++z)
            for (std::int64_t yy = 0; yy < g.height; ++yy) {
              const float* row = outq.data() + c * l.q_padded + z * l.zs + yy * l.ys;
              float* dst = gx + (c * g.depth + z) * g.height * g.width + yy * g.width;
              for (std::int64_t xi = 0; xi < g.width; ++xi) dst[xi] += row[xi];
            }
      } else {
        // Output gradient embedded at (+1,+1,+1) in a grid shaped like one
        // parity phase; each phase of the padded input gradient is a small
        // gather over it.
        const std::int64_t r_count = l.gd * l.gh * l.gw;
        const std::int64_t r_padded = round_up(r_count, kTile);
        const std::int64_t bplane = round_up(r_padded + l.zs + l.ys + 1, 16);
        gsrc.assign(static_cast<std::size_t>(F * bplane), 0.0f);
        for (std::int64_t f = 0; f < F; ++f)
          for (std::int64_t z = 0; z < g.out_depth; ++z)
            for (std::int64_t yy = 0; yy < g.out_height; ++yy)
              std::memcpy(gsrc.data() + f * bplane + (z + 1) * l.zs + (yy + 1) * l.ys + 1,
                          gy + (f * g.out_depth + z) * g.out_height * g.out_width +
                              yy * g.out_width,
                          static_cast<std::size_t>(g.out_width) * sizeof(float));
        outq.resize(static_cast<std::size_t>(C * r_padded));
        for (int p = 0; p < 8; ++p) {
          const auto& taps = phase_taps[static_cast<std::size_t>(p)];
          std::array<std::int64_t, 8> off{};
          for (std::size_t j = 0; j < taps.size(); ++j) {
            const int t = taps[j];
            const int kd = t / 9, kh = (t / 3) % 3, kw = t % 3;
            off[j] = (1 - (kd >> 1)) * l.zs + (1 - (kh >> 1)) * l.ys + (1 - (kw >> 1));
          }
          gather(gsrc.data(), bplane, F, off.data(), static_cast<int>(taps.size()),
                 phase_w[static_cast<std::size_t>(p)].data(), nullptr, C, outq.data(), r_padded);
          const int a = p >> 2, b = (p >> 1) & 1, cc = p & 1;
          for (std::int64_t c = 0; c < C; ++c) {
            const float* oc = outq.data() + c * r_padded;
            float* gxc = gx + c * in_vol;
            for (std::int64_t zz = 0; zz < l.gd; ++zz) {
              const std::int64_t z = 2 * zz + a - 1;
              if (z < 0 || z >= g.depth) continue;
              for (std::int64_t yz = 0; yz < l.gh; ++yz) {
                const std::int64_t yy = 2 * yz + b - 1;
                if (yy < 0 || yy >= g.height) continue;
                const float* row = oc + zz * l.zs + yz * l.ys;
                float* dst = gxc + (z * g.height + yy) * g.width;
                for (std::int64_t xz = 0; xz < l.gw; ++xz) {
                  const std::int64_t xi = 2 * xz + cc - 1;
                  if (xi < 0 || xi >= g.width) continue;
                  dst[xi] += row[xz];
                }
              }
            }
          }
        }
      }
    }
  }

  if (grad_w) {
    for (std::size_t i = 0; i < dw.size(); ++i) grad_w[i] += static_cast<float>(dw[i]);
  }
  if (grad_bias) {
    for (std::int64_t f = 0; f < F; ++f) grad_bias[f] += static_cast<float>(db[static_cast<std::size_t>(f)]);
  }
}

}  // namespace vxseg::kernels
