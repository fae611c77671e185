#include "reference.hpp"

#include <algorithm>
#include <cmath>

#include "vxseg/errors.hpp"

namespace vxseg::reference {

Vol from_tensor(const Tensor& t) {
  VXSEG_REQUIRE(t.rank() == 5, "reference volumes are 5-D, got ", shape_str(t.shape()));
  Vol out({t.dim(0), t.dim(1), t.dim(2), t.dim(3), t.dim(4)});
  std::copy(t.values().begin(), t.values().end(), out.v.begin());
  return out;
}

Params::Params(const ParameterSet& ps) {
  for (const Parameter& p : ps.params())
    values_[p.name] = std::vector<double>(p.value.values().begin(), p.value.values().end());
}

const std::vector<double>& Params::get(const std::string& name) const {
  const auto it = values_.find(name);
  VXSEG_REQUIRE(it != values_.end(), "reference network has no parameter '", name, "'");
  return it->second;
}

std::vector<double>& Params::get(const std::string& name) {
  return const_cast<std::vector<double>&>(std::as_const(*this).get(name));
}

Vol conv3d(const Vol& x, const std::vector<double>& w, const std::vector<double>* bias,
           std::int64_t filters, int stride) {
  const auto [N, C, D, H, W] = x.shape;
  VXSEG_REQUIRE(static_cast<std::int64_t>(w.size()) == filters * C * 27,
                "reference conv weight size mismatch");
  const std::int64_t oD = (D - 1) / stride + 1, oH = (H - 1) / stride + 1, oW = (W - 1) / stride + 1;
  Vol y({N, filters, oD, oH, oW});
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t f = 0; f < filters; ++f) {
      double* out = &y.v[static_cast<std::size_t>((n * filters + f) * oD * oH * oW)];
      if (bias != nullptr) std::fill(out, out + oD * oH * oW, (*bias)[static_cast<std::size_t>(f)]);
      for (std::int64_t c = 0; c < C; ++c) {
        const double* in = &x.v[static_cast<std::size_t>((n * C + c) * D * H * W)];
        for (int kz = 0; kz < 3; ++kz)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const double k = w[static_cast<std::size_t>(((f * C + c) * 3 + kz) * 9 + ky * 3 + kx)];
              for (std::int64_t oz = 0; oz < oD; ++oz) {
                const std::int64_t iz = oz * stride + kz - 1;
                if (iz < 0 || iz >= D) continue;
                for (std::int64_t oy = 0; oy < oH; ++oy) {
                  const std::int64_t iy = oy * stride + ky - 1;
                  if (iy < 0 || iy >= H) continue;
                  double* orow = out + (oz * oH + oy) * oW;
                  const double* irow = in + (iz * H + iy) * W;
                  for (std::int64_t ox = 0; ox < oW; ++ox) {
                    const std::int64_t ix = ox * stride + kx - 1;
                    if (ix >= 0 && ix < W) orow[ox] += k * irow[ix];
                  }
                }
              }
            }
      }
    }
  }
  return y;
}

Vol leaky_relu(const Vol& x, double alpha, SignTrace* trace) {
  Vol y = x;
  for (double& v : y.v) {
    if (trace != nullptr) trace->push_back(v >= 0.0 ? 1 : 0);
    if (v < 0.0) v *= alpha;
  }
  return y;
}

Vol batch_norm_train(const Vol& x, const std::vector<double>& gamma,
                     const std::vector<double>& beta, double epsilon) {
  const auto [N, C, D, H, W] = x.shape;
  const std::int64_t S = D * H * W;
  Vol y(x.shape);
  for (std::int64_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t s = 0; s < S; ++s) mean += x.v[static_cast<std::size_t>((n * C + c) * S + s)];
    mean /= static_cast<double>(N * S);
    double var = 0.0;
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t s = 0; s < S; ++s) {
        const double d = x.v[static_cast<std::size_t>((n * C + c) * S + s)] - mean;
        var += d * d;
      }
    var /= static_cast<double>(N * S);
    const double scale = gamma[static_cast<std::size_t>(c)] / std::sqrt(var + epsilon);
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t s = 0; s < S; ++s) {
        const auto i = static_cast<std::size_t>((n * C + c) * S + s);
        y.v[i] = (x.v[i] - mean) * scale + beta[static_cast<std::size_t>(c)];
      }
  }
  return y;
}

namespace {

// Align-corners source coordinate of output index o.
double source_position(std::int64_t o, std::int64_t n_in, std::int64_t n_out) {
  if (n_in == 1 || n_out == 1) return 0.0;
  return static_cast<double>(o) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
}

}  // namespace

Vol upscale(const Vol& x, int factor) {
  const auto [N, C, D, H, W] = x.shape;
  Vol y({N, C, D * factor, H * factor, W * factor});
  const std::int64_t oD = D * factor, oH = H * factor, oW = W * factor;
  auto corner = [](double pos, std::int64_t n, std::int64_t& lo, std::int64_t& hi) {
    lo = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(pos)), n - 1);
    hi = std::min<std::int64_t>(lo + 1, n - 1);
    return pos - static_cast<double>(lo);
  };
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const double* in = &x.v[static_cast<std::size_t>(nc * D * H * W)];
    double* out = &y.v[static_cast<std::size_t>(nc * oD * oH * oW)];
    for (std::int64_t z = 0; z < oD; ++z) {
      std::int64_t z0, z1;
      const double fz = corner(source_position(z, D, oD), D, z0, z1);
      for (std::int64_t yy = 0; yy < oH; ++yy) {
        std::int64_t y0, y1;
        const double fy = corner(source_position(yy, H, oH), H, y0, y1);
        for (std::int64_t xx = 0; xx < oW; ++xx) {
          std::int64_t x0, x1;
          const double fx = corner(source_position(xx, W, oW), W, x0, x1);
          auto at = [&](std::int64_t a, std::int64_t b, std::int64_t c) { return in[(a * H + b) * W + c]; };
          double acc = 0.0;
          acc += (1 - fz) * (1 - fy) * (1 - fx) * at(z0, y0, x0);
          acc += (1 - fz) * (1 - fy) * fx * at(z0, y0, x1);
          acc += (1 - fz) * fy * (1 - fx) * at(z0, y1, x0);
          acc += (1 - fz) * fy * fx * at(z0, y1, x1);
          acc += fz * (1 - fy) * (1 - fx) * at(z1, y0, x0);
          acc += fz * (1 - fy) * fx * at(z1, y0, x1);
          acc += fz * fy * (1 - fx) * at(z1, y1, x0);
          acc += fz * fy * fx * at(z1, y1, x1);
          out[(z * oH + yy) * oW + xx] = acc;
        }
      }
    }
  }
  return y;
}

Vol concat(const std::vector<const Vol*>& parts) {
  auto shape = parts.front()->shape;
  shape[1] = 0;
  for (const Vol* p : parts) shape[1] += p->shape[1];
  Vol y(shape);
  const std::int64_t S = y.spatial();
  for (std::int64_t n = 0; n < shape[0]; ++n) {
    std::int64_t c0 = 0;
    for (const Vol* p : parts) {
      const std::int64_t Cp = p->shape[1];
      std::copy_n(&p->v[static_cast<std::size_t>(n * Cp * S)], Cp * S,
                  &y.v[static_cast<std::size_t>((n * shape[1] + c0) * S)]);
      c0 += Cp;
    }
  }
  return y;
}

Vol sigmoid(const Vol& x) {
  Vol y = x;
  for (double& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
  return y;
}

double bce(const Vol& p, const Tensor& target) {
  VXSEG_REQUIRE(p.v.size() == target.size(), "reference bce size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    const double q = std::clamp(p.v[i], kProbEps, 1.0 - kProbEps);
    s -= target[i] == 1.0f ? std::log(q) : std::log(1.0 - q);
  }
  return s / static_cast<double>(p.v.size());
}

namespace {

struct Di2inEval {
  const Di2inSpec& spec;
  const Params& p;
  double eps;
  SignTrace* trace;

  Vol conv(const std::string& name, const Vol& x, std::int64_t filters, int stride, bool bias) const {
    return conv3d(x, p.get(name + ".weight"), bias ? &p.get(name + ".bias") : nullptr, filters,
                  stride);
  }
  Vol block(const std::string& name, const Vol& x, std::int64_t filters, int stride) const {
    Vol y = leaky_relu(conv(name + ".conv", x, filters, stride, false), spec.leaky_alpha, trace);
    return batch_norm_train(y, p.get(name + ".bn.gamma"), p.get(name + ".bn.beta"), eps);
  }
};

}  // namespace

Di2inMaps di2in_forward(const Di2inSpec& spec, const Params& p, const Tensor& input,
                        double bn_epsilon, SignTrace* trace) {
  const Di2inEval e{spec, p, bn_epsilon, trace};
  const int L = spec.encoder_levels;
  std::vector<Vol> skips;
  Vol x = from_tensor(input);
  for (int l = 0; l < L; ++l) {
    const std::string n = "enc" + std::to_string(l);
    x = e.block(n + ".a", x, spec.width(l), 1);
    skips.push_back(x);
    x = e.block(n + ".b", x, spec.width(l), 2);
  }
  x = e.block("bottleneck.a", x, spec.width(L), 1);
  x = e.block("bottleneck.b", x, spec.width(L), 1);

  std::vector<Vol> levels(static_cast<std::size_t>(L + 1));
  levels[static_cast<std::size_t>(L)] = x;
  for (int l = L - 1; l >= 0; --l) {
    const std::string n = "dec" + std::to_string(l);
    const Vol up = upscale(x, 2);
    x = e.block(n + ".a", concat({&up, &skips[static_cast<std::size_t>(l)]}), spec.width(l), 1);
    x = e.block(n + ".b", x, spec.width(l), 1);
    levels[static_cast<std::size_t>(l)] = x;
  }

  Di2inMaps out;
  std::vector<const Vol*> parts;
  for (std::size_t i = 0; i < spec.branch_levels.size(); ++i) {
    const int level = spec.branch_levels[i];
    const Vol logits = e.conv("head" + std::to_string(level), levels[static_cast<std::size_t>(level)], 1, 1, true);
    out.branch_probs.push_back(sigmoid(upscale(logits, spec.branch_factors[i])));
  }
  for (const Vol& b : out.branch_probs) parts.push_back(&b);
  const Vol fused = leaky_relu(e.conv("fuse", concat(parts), spec.fuse_filters, 1, true),
                               spec.leaky_alpha, trace);
  out.final_prob = sigmoid(e.conv("out", fused, 1, 1, true));
  return out;
}

double di2in_loss(const Di2inSpec& spec, const Params& p, const Tensor& input,
                  const Tensor& label, double bn_epsilon, SignTrace* trace) {
  const Di2inMaps m = di2in_forward(spec, p, input, bn_epsilon, trace);
  double s = spec.final_weight * bce(m.final_prob, label);
  for (std::size_t i = 0; i < m.branch_probs.size(); ++i)
    s += spec.branch_weights[i] * bce(m.branch_probs[i], label);
  return s;
}

std::vector<double> discriminator_forward(const DiscriminatorSpec& spec, const Params& p,
                                          const Tensor& maps, double bn_epsilon, SignTrace* trace) {
  Vol x = from_tensor(maps);
  for (int l = 0; l < spec.conv_levels; ++l) {
    const std::string n = "stage" + std::to_string(l);
    x = leaky_relu(conv3d(x, p.get(n + ".conv.weight"), nullptr, spec.width(l), 2),
                   spec.leaky_alpha, trace);
    x = batch_norm_train(x, p.get(n + ".bn.gamma"), p.get(n + ".bn.beta"), bn_epsilon);
  }
  const auto N = x.shape[0], C = x.shape[1], S = x.spatial();
  const auto& w = p.get("fc.weight");
  const double b = p.get("fc.bias")[0];
  std::vector<double> out;
  for (std::int64_t n = 0; n < N; ++n) {
    double logit = b;
    for (std::int64_t c = 0; c < C; ++c) {
      double mean = 0.0;
      for (std::int64_t s = 0; s < S; ++s) mean += x.v[static_cast<std::size_t>((n * C + c) * S + s)];
      logit += w[static_cast<std::size_t>(c)] * mean / static_cast<double>(S);
    }
    out.push_back(1.0 / (1.0 + std::exp(-logit)));
  }
  return out;
}

double discriminator_loss(const DiscriminatorSpec& spec, const Params& p, const Tensor& maps,
                          std::int64_t n_gt, double bn_epsilon, SignTrace* trace) {
  const auto d = discriminator_forward(spec, p, maps, bn_epsilon, trace);
  const auto n = static_cast<std::int64_t>(d.size());
  double gt = 0.0, pred = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double q = std::clamp(d[static_cast<std::size_t>(i)], kProbEps, 1.0 - kProbEps);
    if (i < n_gt) gt -= std::log(q);
    else pred -= std::log(1.0 - q);
  }
  return gt / static_cast<double>(n_gt) + pred / static_cast<double>(n - n_gt);
}

}  // namespace vxseg::reference
