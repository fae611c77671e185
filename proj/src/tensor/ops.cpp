#include "vxseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "conv_kernels.hpp"
#include "vxseg/errors.hpp"

namespace vxseg {
namespace {

Tape& tape_of(Var v) {
  VXSEG_REQUIRE(v.valid(), "operation applied to an unbound Var");
  return *v.tape;
}

void require_same_tape(Var a, Var b) {
  VXSEG_REQUIRE(a.tape == b.tape, "operands recorded on different tapes");
}

void require_rank5(const Tensor& t, const char* what) {
  VXSEG_REQUIRE(t.rank() == 5, what, " expects a [N,C,D,H,W] tensor, got ",
                shape_str(t.shape()));
}

// Linear interpolation table for one axis, align-corners.
struct AxisTable {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;
};

AxisTable make_axis_table(std::int64_t n_in, std::int64_t n_out) {
  AxisTable t;
  t.lo.resize(static_cast<std::size_t>(n_out));
  t.hi.resize(static_cast<std::size_t>(n_out));
  t.frac.resize(static_cast<std::size_t>(n_out));
  for (std::int64_t o = 0; o < n_out; ++o) {
    const double pos =
        (n_out > 1 && n_in > 1) ? static_cast<double>(o) * static_cast<double>(n_in - 1) /
                                      static_cast<double>(n_out - 1)
                                : 0.0;
    auto lo = static_cast<std::int64_t>(std::floor(pos));
    lo = std::clamp<std::int64_t>(lo, 0, n_in - 1);
    const std::int64_t hi = std::min(lo + 1, n_in - 1);
    const auto k = static_cast<std::size_t>(o);
    t.lo[k] = lo;
    t.hi[k] = hi;
    t.frac[k] = pos - static_cast<double>(lo);
  }
  return t;
}

// [outer, n_in, inner] -> [outer, n_out, inner]
void interp_axis(const float* src, float* dst, std::int64_t outer, std::int64_t n_in,
                 std::int64_t n_out, std::int64_t inner, const AxisTable& t) {
  for (std::int64_t a = 0; a < outer; ++a) {
    const float* s = src + a * n_in * inner;
    float* d = dst + a * n_out * inner;
    for (std::int64_t o = 0; o < n_out; ++o) {
      const auto k = static_cast<std::size_t>(o);
      const float* s0 = s + t.lo[k] * inner;
      const float* s1 = s + t.hi[k] * inner;
      const double f = t.frac[k];
      float* dr = d + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) {
        const double v0 = s0[i];
        dr[i] = static_cast<float>(v0 + f * (static_cast<double>(s1[i]) - v0));
      }
    }
  }
}

// Transpose of interp_axis: scatters [outer, n_out, inner] gradients back.
void interp_axis_backward(const float* gdst, float* gsrc, std::int64_t outer, std::int64_t n_in,
                          std::int64_t n_out, std::int64_t inner, const AxisTable& t) {
  std::vector<double> acc(static_cast<std::size_t>(n_in * inner));
  for (std::int64_t a = 0; a < outer; ++a) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* g = gdst + a * n_out * inner;
    for (std::int64_t o = 0; o < n_out; ++o) {
      const auto k = static_cast<std::size_t>(o);
      const double f = t.frac[k];
      double* a0 = acc.data() + t.lo[k] * inner;
      double* a1 = acc.data() + t.hi[k] * inner;
      const float* gr = g + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) {
        a0[i] += (1.0 - f) * gr[i];
        a1[i] += f * gr[i];
      }
    }
    float* s = gsrc + a * n_in * inner;
    for (std::int64_t i = 0; i < n_in * inner; ++i) s[i] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
  }
}

// Clamped in double so both bounds sit exactly eps away from 0 and 1.
double clamp_prob(float p) { return std::clamp(static_cast<double>(p), kProbEps, 1.0 - kProbEps); }
bool prob_clamped(float p) { return p < kProbEps || p > 1.0 - kProbEps; }

}  // namespace

Var conv3d(Var input, Var weight, Var bias, int stride) {
  Tape& tape = tape_of(input);
  require_same_tape(input, weight);
  require_same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank5(x, "conv3d");
  VXSEG_REQUIRE(w.rank() == 5 && w.dim(2) == 3 && w.dim(3) == 3 && w.dim(4) == 3,
                "conv3d kernel must be [F,C,3,3,3], got ", shape_str(w.shape()));
  VXSEG_REQUIRE(w.dim(1) == x.dim(1), "conv3d input has ", x.dim(1),
                " channels but the kernel expects ", w.dim(1));
  VXSEG_REQUIRE(b.rank() == 1 && b.dim(0) == w.dim(0), "conv3d bias must be [", w.dim(0),
                "], got ", shape_str(b.shape()));
  VXSEG_REQUIRE(stride == 1 || stride == 2, "conv3d stride must be 1 or 2, got ", stride);

  const auto g = kernels::make_conv_geometry(x.dim(0), x.dim(1), w.dim(0), x.dim(2), x.dim(3),
                                             x.dim(4), stride);
  Tensor y({g.batch, g.out_channels, g.out_depth, g.out_height, g.out_width});
  kernels::conv3d_forward(g, x.data(), w.data(), b.data(), y.data());

  const bool need = tape.requires_grad(input) || tape.requires_grad(weight) ||
                    tape.requires_grad(bias);
  return tape.record(std::move(y), OpKind::conv3d, need,
                     [input, weight, bias, g](Tape& t, const Tensor& gy) {
                       float* gx = t.requires_grad(input) ? t.grad_buffer(input).data() : nullptr;
                       float* gw = t.requires_grad(weight) ? t.grad_buffer(weight).data() : nullptr;
                       float* gb = t.requires_grad(bias) ? t.grad_buffer(bias).data() : nullptr;
                       kernels::conv3d_backward(g, t.value(input).data(), t.value(weight).data(),
                                                gy.data(), gx, gw, gb);
                     });
}

bool is_supported_upscale_factor(int factor) {
  return factor >= 1 && factor <= 32 && (factor & (factor - 1)) == 0;
}

Var trilinear_upscale(Var input, int factor) {
  Tape& tape = tape_of(input);
  const Tensor& x = input.value();
  require_rank5(x, "trilinear_upscale");
  VXSEG_REQUIRE(is_supported_upscale_factor(factor),
                "trilinear_upscale factor must be a power of two in [1, 32], got ", factor);
  const std::int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::int64_t fD = D * factor, fH = H * factor, fW = W * factor;
  if (factor == 1) {
    return tape.record(x, OpKind::upscale, tape.requires_grad(input),
                       [input](Tape& t, const Tensor& gy) { t.accumulate_grad(input, gy); });
  }
  const AxisTable tw = make_axis_table(W, fW);
  const AxisTable th = make_axis_table(H, fH);
  const AxisTable td = make_axis_table(D, fD);
  std::vector<float> a(static_cast<std::size_t>(N * C * D * H * fW));
  std::vector<float> b(static_cast<std::size_t>(N * C * D * fH * fW));
  interp_axis(x.data(), a.data(), N * C * D * H, W, fW, 1, tw);
  interp_axis(a.data(), b.data(), N * C * D, H, fH, fW, th);
  Tensor y({N, C, fD, fH, fW});
  interp_axis(b.data(), y.data(), N * C, D, fD, fH * fW, td);

  return tape.record(std::move(y), OpKind::upscale, tape.requires_grad(input),
                     [input, tw, th, td, N, C, D, H, W, fD, fH, fW](Tape& t, const Tensor& gy) {
                       std::vector<float> gb(static_cast<std::size_t>(N * C * D * fH * fW));
                       std::vector<float> ga(static_cast<std::size_t>(N * C * D * H * fW));
                       Tensor gx({N, C, D, H, W});
                       interp_axis_backward(gy.data(), gb.data(), N * C, D, fD, fH * fW, td);
                       interp_axis_backward(gb.data(), ga.data(), N * C * D, H, fH, fW, th);
                       interp_axis_backward(ga.data(), gx.data(), N * C * D * H, W, fW, 1, tw);
                       t.accumulate_grad(input, gx);
                     });
}

Var leaky_relu(Var input, float alpha) {
  Tape& tape = tape_of(input);
  VXSEG_REQUIRE(alpha > 0.0f && alpha < 1.0f, "leaky_relu alpha must lie in (0,1), got ", alpha);
  const Tensor& x = input.value();
  Tensor y(x.shape());
  const float* xs = x.data();
  float* ys = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) ys[i] = xs[i] >= 0.0f ? xs[i] : alpha * xs[i];
  return tape.record(std::move(y), OpKind::leaky_relu, tape.requires_grad(input),
                     [input, alpha](Tape& t, const Tensor& gy) {
                       const Tensor& xv = t.value(input);
                       Tensor& gx = t.grad_buffer(input);
                       const float* xp = xv.data();
                       const float* gp = gy.data();
                       float* out = gx.data();
                       for (std::size_t i = 0; i < xv.size(); ++i)
                         out[i] += xp[i] >= 0.0f ? gp[i] : alpha * gp[i];
                     });
}

Var batch_norm(Var input, Var gamma, Var beta, NormState& state, NormMode mode,
               const BatchNormOptions& options) {
  Tape& tape = tape_of(input);
  require_same_tape(input, gamma);
  require_same_tape(input, beta);
  const Tensor& x = input.value();
  VXSEG_REQUIRE(x.rank() >= 2, "batch_norm expects [N,C,...], got ", shape_str(x.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1);
  const std::int64_t S = static_cast<std::int64_t>(x.size()) / std::max<std::int64_t>(N * C, 1);
  VXSEG_REQUIRE(gamma.value().size() == static_cast<std::size_t>(C) &&
                    beta.value().size() == static_cast<std::size_t>(C),
                "batch_norm gamma/beta must have ", C, " elements");
  VXSEG_REQUIRE(state.running_mean.size() == static_cast<std::size_t>(C) &&
                    state.running_var.size() == static_cast<std::size_t>(C),
                "batch_norm running stats '", state.name, "' have the wrong channel count");
  VXSEG_REQUIRE(options.epsilon > 0.0f, "batch_norm epsilon must be positive");
  const std::int64_t M = N * S;
  if (mode == NormMode::train) {
    VXSEG_REQUIRE(M >= 2, "batch_norm in train mode needs at least 2 values per channel, got ", M);
  }

  std::vector<double> mean(static_cast<std::size_t>(C)), inv_std(static_cast<std::size_t>(C));
  const float* xs = x.data();
  for (std::int64_t c = 0; c < C; ++c) {
    const auto k = static_cast<std::size_t>(c);
    if (mode == NormMode::train) {
      double s = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const float* p = xs + (n * C + c) * S;
        for (std::int64_t i = 0; i < S; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(M);
      double ss = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const float* p = xs + (n * C + c) * S;
        for (std::int64_t i = 0; i < S; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(M);
      mean[k] = mu;
      inv_std[k] = 1.0 / std::sqrt(var + options.epsilon);
      if (options.update_running_stats) {
        const double m = options.momentum;
        const double unbiased = var * static_cast<double>(M) / static_cast<double>(M - 1);
        state.running_mean[k] = static_cast<float>(m * state.running_mean[k] + (1.0 - m) * mu);
        state.running_var[k] = static_cast<float>(m * state.running_var[k] + (1.0 - m) * unbiased);
      }
    } else {
      mean[k] = state.running_mean[k];
      inv_std[k] = 1.0 / std::sqrt(static_cast<double>(state.running_var[k]) + options.epsilon);
    }
  }

  Tensor y(x.shape());
  const float* gm = gamma.value().data();
  const float* bt = beta.value().data();
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t c = 0; c < C; ++c) {
      const auto k = static_cast<std::size_t>(c);
      const double scale = gm[c] * inv_std[k];
      const double shift = bt[c] - mean[k] * scale;
      const float* p = xs + (n * C + c) * S;
      float* q = y.data() + (n * C + c) * S;
      for (std::int64_t i = 0; i < S; ++i) q[i] = static_cast<float>(p[i] * scale + shift);
    }
  }

  const bool need =
      tape.requires_grad(input) || tape.requires_grad(gamma) || tape.requires_grad(beta);
  return tape.record(
      std::move(y), OpKind::batch_norm, need,
      [input, gamma, beta, mode, mean, inv_std, N, C, S, M](Tape& t, const Tensor& gy) {
        const float* xs = t.value(input).data();
        const float* gm = t.value(gamma).data();
        const float* g = gy.data();
        std::vector<double> sum_g(static_cast<std::size_t>(C)), sum_gx(static_cast<std::size_t>(C));
        for (std::int64_t c = 0; c < C; ++c) {
          const auto k = static_cast<std::size_t>(c);
          double a = 0.0, b = 0.0;
          for (std::int64_t n = 0; n < N; ++n) {
            const float* p = xs + (n * C + c) * S;
            const float* q = g + (n * C + c) * S;
            for (std::int64_t i = 0; i < S; ++i) {
              a += q[i];
              b += q[i] * ((p[i] - mean[k]) * inv_std[k]);
            }
          }
          sum_g[k] = a;
          sum_gx[k] = b;
        }
        if (t.requires_grad(gamma)) {
          Tensor& gg = t.grad_buffer(gamma);
          for (std::int64_t c = 0; c < C; ++c) gg[static_cast<std::size_t>(c)] += static_cast<float>(sum_gx[static_cast<std::size_t>(c)]);
        }
        if (t.requires_grad(beta)) {
          Tensor& gb = t.grad_buffer(beta);
          for (std::int64_t c = 0; c < C; ++c) gb[static_cast<std::size_t>(c)] += static_cast<float>(sum_g[static_cast<std::size_t>(c)]);
        }
        if (t.requires_grad(input)) {
          Tensor& gx = t.grad_buffer(input);
          for (std::int64_t c = 0; c < C; ++c) {
            const auto k = static_cast<std::size_t>(c);
            const double scale = gm[c] * inv_std[k];
            const double mg = sum_g[k] / static_cast<double>(M);
            const double mgx = sum_gx[k] / static_cast<double>(M);
            for (std::int64_t n = 0; n < N; ++n) {
              const float* p = xs + (n * C + c) * S;
              const float* q = g + (n * C + c) * S;
              float* out = gx.data() + (n * C + c) * S;
              if (mode == NormMode::train) {
                for (std::int64_t i = 0; i < S; ++i) {
                  const double xhat = (p[i] - mean[k]) * inv_std[k];
                  out[i] += static_cast<float>(scale * (q[i] - mg - xhat * mgx));
                }
              } else {
                for (std::int64_t i = 0; i < S; ++i) out[i] += static_cast<float>(scale * q[i]);
              }
            }
          }
        }
      });
}

Var concat_channels(std::span<const Var> parts) {
  VXSEG_REQUIRE(!parts.empty(), "concat_channels of nothing");
  Tape& tape = tape_of(parts.front());
  const Tensor& first = parts.front().value();
  require_rank5(first, "concat_channels");
  std::int64_t channels = 0;
  bool need = false;
  std::vector<std::int64_t> widths;
  for (const Var& v : parts) {
    require_same_tape(parts.front(), v);
    const Tensor& t = v.value();
    require_rank5(t, "concat_channels");
    VXSEG_REQUIRE(t.dim(0) == first.dim(0) && t.dim(2) == first.dim(2) &&
                      t.dim(3) == first.dim(3) && t.dim(4) == first.dim(4),
                  "concat_channels extent mismatch: ", shape_str(first.shape()), " vs ",
                  shape_str(t.shape()));
    channels += t.dim(1);
    widths.push_back(t.dim(1));
    need = need || tape.requires_grad(v);
  }
  const std::int64_t N = first.dim(0);
  const std::int64_t S = first.dim(2) * first.dim(3) * first.dim(4);
  Tensor y({N, channels, first.dim(2), first.dim(3), first.dim(4)});
  for (std::int64_t n = 0; n < N; ++n) {
    std::int64_t c0 = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const Tensor& t = parts[p].value();
      const std::int64_t ci = widths[p];
      std::copy_n(t.data() + n * ci * S, ci * S, y.data() + (n * channels + c0) * S);
      c0 += ci;
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(y), OpKind::concat, need,
                     [inputs, widths, N, S, channels](Tape& t, const Tensor& gy) {
                       std::int64_t c0 = 0;
                       for (std::size_t p = 0; p < inputs.size(); ++p) {
                         const std::int64_t ci = widths[p];
                         if (t.requires_grad(inputs[p])) {
                           Tensor& g = t.grad_buffer(inputs[p]);
                           for (std::int64_t n = 0; n < N; ++n) {
                             const float* src = gy.data() + (n * channels + c0) * S;
                             float* dst = g.data() + n * ci * S;
                             for (std::int64_t i = 0; i < ci * S; ++i) dst[i] += src[i];
                           }
                         }
                         c0 += ci;
                       }
                     });
}

Var concat_channels(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_channels(std::span<const Var>(parts));
}

namespace {
float sigmoid_value(float x) {
  const double v = x;
  return static_cast<float>(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
}
}  // namespace

Var sigmoid(Var input) {
  Tape& tape = tape_of(input);
  const Tensor& x = input.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_value(x[i]);
  return tape.record(std::move(y), OpKind::sigmoid, tape.requires_grad(input),
                     [input](Tape& t, const Tensor& gy) {
                       const Tensor& xv = t.value(input);
                       Tensor& g = t.grad_buffer(input);
                       for (std::size_t i = 0; i < xv.size(); ++i) {
                         const double s = sigmoid_value(xv[i]);
                         g[i] += static_cast<float>(gy[i] * s * (1.0 - s));
                       }
                     });
}

Var bce_loss(Var pred_prob, const Tensor& target) {
  Tape& tape = tape_of(pred_prob);
  const Tensor& p = pred_prob.value();
  VXSEG_REQUIRE(p.size() == target.size() && p.size() > 0, "bce_loss prediction ",
                shape_str(p.shape()), " and target ", shape_str(target.shape()),
                " differ in size");
  for (float t : target.values()) {
    VXSEG_REQUIRE(t == 0.0f || t == 1.0f, "bce_loss target contains ", t,
                  "; targets must be 0 or 1");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clamp_prob(p[i]);
    s -= target[i] == 1.0f ? std::log(q) : std::log(1.0 - q);
  }
  const double inv_m = 1.0 / static_cast<double>(p.size());
  return tape.record(Tensor::scalar(static_cast<float>(s * inv_m)), OpKind::bce,
                     tape.requires_grad(pred_prob),
                     [pred_prob, target, inv_m](Tape& t, const Tensor& gy) {
                       const Tensor& pv = t.value(pred_prob);
                       Tensor& g = t.grad_buffer(pred_prob);
                       const double scale = gy[0] * inv_m;
                       for (std::size_t i = 0; i < pv.size(); ++i) {
                         const float raw = pv[i];
                         if (prob_clamped(raw)) continue;
                         const double q = raw;
                         const double d = target[i] == 1.0f ? -1.0 / q : 1.0 / (1.0 - q);
                         g[i] += static_cast<float>(scale * d);
                       }
                     });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  VXSEG_REQUIRE(!terms.empty() && terms.size() == weights.size(),
                "weighted_sum needs one weight per term");
  Tape& tape = tape_of(terms.front());
  double s = 0.0;
  bool need = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require_same_tape(terms.front(), terms[i]);
    VXSEG_REQUIRE(terms[i].value().size() == 1, "weighted_sum terms must be scalars");
    s += weights[i] * terms[i].value()[0];
    need = need || (tape.requires_grad(terms[i]) && weights[i] != 0.0);
  }
  std::vector<Var> ts(terms.begin(), terms.end());
  std::vector<double> ws(weights.begin(), weights.end());
  return tape.record(Tensor::scalar(static_cast<float>(s)), OpKind::weighted_sum, need,
                     [ts, ws](Tape& t, const Tensor& gy) {
                       for (std::size_t i = 0; i < ts.size(); ++i) {
                         if (ws[i] == 0.0 || !t.requires_grad(ts[i])) continue;
                         t.grad_buffer(ts[i])[0] += static_cast<float>(ws[i] * gy[0]);
                       }
                     });
}

Var global_avg_pool(Var input) {
  Tape& tape = tape_of(input);
  const Tensor& x = input.value();
  VXSEG_REQUIRE(x.rank() >= 3, "global_avg_pool expects [N,C,...], got ", shape_str(x.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1);
  const std::int64_t S = static_cast<std::int64_t>(x.size()) / (N * C);
  Tensor y({N, C});
  for (std::int64_t i = 0; i < N * C; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < S; ++j) s += x[static_cast<std::size_t>(i * S + j)];
    y[static_cast<std::size_t>(i)] = static_cast<float>(s / static_cast<double>(S));
  }
  return tape.record(std::move(y), OpKind::global_avg_pool, tape.requires_grad(input),
                     [input, N, C, S](Tape& t, const Tensor& gy) {
                       Tensor& g = t.grad_buffer(input);
                       const double inv = 1.0 / static_cast<double>(S);
                       for (std::int64_t i = 0; i < N * C; ++i) {
                         const auto v = static_cast<float>(gy[static_cast<std::size_t>(i)] * inv);
                         float* dst = g.data() + i * S;
                         for (std::int64_t j = 0; j < S; ++j) dst[j] += v;
                       }
                     });
}

Var linear(Var input, Var weight, Var bias) {
  Tape& tape = tape_of(input);
  require_same_tape(input, weight);
  require_same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  VXSEG_REQUIRE(x.rank() == 2 && w.rank() == 2 && w.dim(1) == x.dim(1) && b.rank() == 1 &&
                    b.dim(0) == w.dim(0),
                "linear shape mismatch: input ", shape_str(x.shape()), ", weight ",
                shape_str(w.shape()), ", bias ", shape_str(b.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), O = w.dim(0);
  Tensor y({N, O});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o) {
      double s = b[static_cast<std::size_t>(o)];
      for (std::int64_t c = 0; c < C; ++c)
        s += static_cast<double>(x[static_cast<std::size_t>(n * C + c)]) * w[static_cast<std::size_t>(o * C + c)];
      y[static_cast<std::size_t>(n * O + o)] = static_cast<float>(s);
    }
  const bool need =
      tape.requires_grad(input) || tape.requires_grad(weight) || tape.requires_grad(bias);
  return tape.record(std::move(y), OpKind::linear, need,
                     [input, weight, bias, N, C, O](Tape& t, const Tensor& gy) {
                       const Tensor& xv = t.value(input);
                       const Tensor& wv = t.value(weight);
                       auto at = [](std::int64_t i) { return static_cast<std::size_t>(i); };
                       if (t.requires_grad(input)) {
                         Tensor& gx = t.grad_buffer(input);
                         for (std::int64_t n = 0; n < N; ++n)
                           for (std::int64_t c = 0; c < C; ++c) {
                             double s = 0.0;
                             for (std::int64_t o = 0; o < O; ++o) s += static_cast<double>(gy[at(n * O + o)]) * wv[at(o * C + c)];
                             gx[at(n * C + c)] += static_cast<float>(s);
                           }
                       }
                       if (t.requires_grad(weight)) {
                         Tensor& gw = t.grad_buffer(weight);
                         for (std::int64_t o = 0; o < O; ++o)
                           for (std::int64_t c = 0; c < C; ++c) {
                             double s = 0.0;
                             for (std::int64_t n = 0; n < N; ++n) s += static_cast<double>(gy[at(n * O + o)]) * xv[at(n * C + c)];
                             gw[at(o * C + c)] += static_cast<float>(s);
                           }
                       }
                       if (t.requires_grad(bias)) {
                         Tensor& gb = t.grad_buffer(bias);
                         for (std::int64_t o = 0; o < O; ++o) {
                           double s = 0.0;
                           for (std::int64_t n = 0; n < N; ++n) s += gy[at(n * O + o)];
                           gb[at(o)] += static_cast<float>(s);
                         }
                       }
                     });
}

Var slice_batch(Var input, std::int64_t begin, std::int64_t end) {
  Tape& tape = tape_of(input);
  Tensor y = slice_batch(input.value(), begin, end);
  const std::int64_t item = input.value().dim(0) > 0
                                ? static_cast<std::int64_t>(input.value().size()) / input.value().dim(0)
                                : 0;
  return tape.record(std::move(y), OpKind::slice, tape.requires_grad(input),
                     [input, begin, item](Tape& t, const Tensor& gy) {
                       Tensor& g = t.grad_buffer(input);
                       float* dst = g.data() + begin * item;
                       for (std::size_t i = 0; i < gy.size(); ++i) dst[i] += gy[i];
                     });
}

Var reshape(Var input, Shape shape) {
  Tape& tape = tape_of(input);
  Tensor y = input.value().reshaped(std::move(shape));
  return tape.record(std::move(y), OpKind::reshape, tape.requires_grad(input),
                     [input](Tape& t, const Tensor& gy) {
                       Tensor& g = t.grad_buffer(input);
                       for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
                     });
}

}  // namespace vxseg
