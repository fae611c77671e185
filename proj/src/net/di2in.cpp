#include "vxseg/di2in.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "../common/kv_text.hpp"
#include "vxseg/errors.hpp"
#include "vxseg/rng.hpp"

namespace vxseg {

void Di2inSpec::validate() const {
  VXSEG_REQUIRE(base_filters >= 1, "base_filters must be at least 1, got ", base_filters);
  VXSEG_REQUIRE(encoder_levels >= 1, "encoder_levels must be at least 1, got ", encoder_levels);
  VXSEG_REQUIRE(encoder_levels <= 5, "encoder_levels above 5 is not supported, got ",
                encoder_levels);
  VXSEG_REQUIRE(leaky_alpha > 0.0f && leaky_alpha < 1.0f, "leaky_alpha must lie in (0, 1)");
  VXSEG_REQUIRE(fuse_filters >= 1, "fuse_filters must be at least 1");
  VXSEG_REQUIRE(!branch_levels.empty(), "at least one supervision branch is required");
  VXSEG_REQUIRE(branch_factors.size() == branch_levels.size() &&
                    branch_weights.size() == branch_levels.size(),
                "branch_levels, branch_factors and branch_weights must have equal length");
  std::set<int> seen;
  bool any_positive = final_weight > 0.0;
  VXSEG_REQUIRE(final_weight >= 0.0, "final_weight must be nonnegative");
  for (std::size_t i = 0; i < branch_levels.size(); ++i) {
    const int level = branch_levels[i];
    VXSEG_REQUIRE(level >= 0 && level <= encoder_levels, "branch level ", level,
                  " outside [0, ", encoder_levels, "]");
    VXSEG_REQUIRE(seen.insert(level).second, "branch level ", level, " listed twice");
    VXSEG_REQUIRE(branch_factors[i] == (1 << level), "branch at level ", level,
                  " needs upscale factor ", (1 << level), " to restore input resolution, got ",
                  branch_factors[i]);
    VXSEG_REQUIRE(branch_weights[i] >= 0.0, "branch weights must be nonnegative");
    any_positive = any_positive || branch_weights[i] > 0.0;
  }
  VXSEG_REQUIRE(any_positive, "at least one loss weight must be positive");
}

std::string Di2inSpec::to_text() const {
  using namespace detail;
  const auto int_str = [](int v) { return std::to_string(v); };
  return render_kv({
      {"kind", "di2in"},
      {"base_filters", int_str(base_filters)},
      {"encoder_levels", int_str(encoder_levels)},
      {"leaky_alpha", format_float(leaky_alpha)},
      {"branch_levels", format_list(branch_levels, int_str)},
      {"branch_factors", format_list(branch_factors, int_str)},
      {"branch_weights", format_list(branch_weights, format_double)},
      {"final_weight", format_double(final_weight)},
      {"fuse_filters", int_str(fuse_filters)},
  });
}

Di2inSpec Di2inSpec::from_text(const std::string& text) {
  using namespace detail;
  Di2inSpec s;
  for (const auto& [key, value] : parse_kv(text, "generator spec")) {
    if (key == "kind") VXSEG_REQUIRE(value == "di2in", "spec kind is '", value, "', expected 'di2in'");
    else if (key == "base_filters") s.base_filters = static_cast<int>(parse_int(key, value));
    else if (key == "encoder_levels") s.encoder_levels = static_cast<int>(parse_int(key, value));
    else if (key == "leaky_alpha") s.leaky_alpha = static_cast<float>(parse_double(key, value));
    else if (key == "branch_levels") s.branch_levels = parse_list<int>(key, value, parse_int);
    else if (key == "branch_factors") s.branch_factors = parse_list<int>(key, value, parse_int);
    else if (key == "branch_weights") s.branch_weights = parse_list<double>(key, value, parse_double);
    else if (key == "final_weight") s.final_weight = parse_double(key, value);
    else if (key == "fuse_filters") s.fuse_filters = static_cast<int>(parse_int(key, value));
    else throw ContractViolation(concat("unknown generator spec key '", key, "'"));
  }
  s.validate();
  return s;
}

Di2in::Conv Di2in::add_conv(const std::string& name, int in, int out, int stride,
                            std::uint64_t seed, bool bias) {
  Tensor w({out, in, 3, 3, 3});
  Rng rng(seed);
  const double sd = std::sqrt(2.0 / (27.0 * in));
  for (auto& v : w.values()) v = static_cast<float>(rng.normal(0.0, sd));
  Conv c;
  c.name = name;
  c.stride = stride;
  c.weight = params_.size();
  params_.add(name + ".weight", std::move(w));
  c.bias = kNoBias;
  if (bias) {
    c.bias = params_.size();
    params_.add(name + ".bias", Tensor({out}, 0.0f));
  }
  return c;
}

Di2in::Norm Di2in::add_norm(const std::string& name, int channels) {
  Norm n;
  n.name = name;
  n.gamma = params_.size();
  params_.add(name + ".gamma", Tensor({channels}, 1.0f));
  n.beta = params_.size();
  params_.add(name + ".beta", Tensor({channels}, 0.0f));
  params_.add_norm(name, channels);
  return n;
}

Di2in::Block Di2in::add_block(const std::string& name, int in, int out, int stride,
                              std::uint64_t seed) {
  Block b;
  b.conv = add_conv(name + ".conv", in, out, stride, seed, false);
  b.norm = add_norm(name + ".bn", out);
  return b;
}

Di2in::Di2in(Di2inSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  const int L = spec_.encoder_levels;
  std::uint64_t stream = 0;
  auto next_seed = [&] { return derive_seed(seed, stream++); };

  int in = 1;
  for (int l = 0; l < L; ++l) {
    const int w = spec_.width(l);
    enc1_.push_back(add_block("enc" + std::to_string(l) + ".a", in, w, 1, next_seed()));
    enc2_.push_back(add_block("enc" + std::to_string(l) + ".b", w, w, 2, next_seed()));
    in = w;
  }
  bott1_ = add_block("bottleneck.a", in, spec_.width(L), 1, next_seed());
  bott2_ = add_block("bottleneck.b", spec_.width(L), spec_.width(L), 1, next_seed());
  dec1_.resize(static_cast<std::size_t>(L));
  dec2_.resize(static_cast<std::size_t>(L));
  for (int l = L - 1; l >= 0; --l) {
    const int w = spec_.width(l);
    dec1_[static_cast<std::size_t>(l)] =
        add_block("dec" + std::to_string(l) + ".a", spec_.width(l + 1) + w, w, 1, next_seed());
    dec2_[static_cast<std::size_t>(l)] =
        add_block("dec" + std::to_string(l) + ".b", w, w, 1, next_seed());
  }
  for (int level : spec_.branch_levels)
    heads_.push_back(add_conv("head" + std::to_string(level), spec_.width(level), 1, 1, next_seed(), true));
  const int nb = static_cast<int>(spec_.branch_levels.size());
  fuse_ = add_conv("fuse", nb, spec_.fuse_filters, 1, next_seed(), true);
  out_ = add_conv("out", spec_.fuse_filters, 1, 1, next_seed(), true);
}

void Di2in::check_input(const Shape& shape) const {
  VXSEG_REQUIRE(shape.size() == 5 && shape[0] >= 1 && shape[1] == 1,
                "generator input must be [N,1,D,H,W], got ", shape_str(shape));
  for (int a = 2; a < 5; ++a)
    VXSEG_REQUIRE(shape[a] >= 1 && shape[a] % spec_.divisor() == 0, "generator input extent ",
                  shape[a], " is not divisible by 2^encoder_levels = ", spec_.divisor());
}

Var Di2in::conv(Tape& tape, const Conv& c, Var x) {
  tape.set_scope(c.name);
  auto& ps = params_.params();
  Parameter& w = ps[c.weight];
  Var bias = c.bias == kNoBias ? tape.constant(Tensor({w.value.dim(0)}, 0.0f))
                               : tape.parameter(ps[c.bias]);
  return conv3d(x, tape.parameter(w), bias, c.stride);
}

Var Di2in::block(Tape& tape, const Block& b, Var x, NormMode mode, const BatchNormOptions& norm) {
  Var y = leaky_relu(conv(tape, b.conv, x), spec_.leaky_alpha);
  tape.set_scope(b.norm.name);
  auto& ps = params_.params();
  return batch_norm(y, tape.parameter(ps[b.norm.gamma]), tape.parameter(ps[b.norm.beta]),
                    params_.norm(b.norm.name), mode, norm);
}

GeneratorOutput Di2in::forward(Tape& tape, Var input, NormMode mode,
                               const BatchNormOptions& norm) {
  check_input(input.shape());
  const int L = spec_.encoder_levels;
  std::vector<Var> skips;
  Var x = input;
  for (int l = 0; l < L; ++l) {
    x = block(tape, enc1_[static_cast<std::size_t>(l)], x, mode, norm);
    skips.push_back(x);
    x = block(tape, enc2_[static_cast<std::size_t>(l)], x, mode, norm);
  }
  x = block(tape, bott1_, x, mode, norm);
  x = block(tape, bott2_, x, mode, norm);

  std::vector<Var> level_features(static_cast<std::size_t>(L + 1));
  level_features[static_cast<std::size_t>(L)] = x;
  for (int l = L - 1; l >= 0; --l) {
    tape.set_scope("dec" + std::to_string(l) + ".up");
    x = concat_channels(trilinear_upscale(x, 2), skips[static_cast<std::size_t>(l)]);
    x = block(tape, dec1_[static_cast<std::size_t>(l)], x, mode, norm);
    x = block(tape, dec2_[static_cast<std::size_t>(l)], x, mode, norm);
    level_features[static_cast<std::size_t>(l)] = x;
  }

  GeneratorOutput out;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    Var logits = conv(tape, heads_[i], level_features[static_cast<std::size_t>(spec_.branch_levels[i])]);
    logits = trilinear_upscale(logits, spec_.branch_factors[i]);
    out.branch_probs.push_back(sigmoid(logits));
  }
  Var fused = leaky_relu(conv(tape, fuse_, concat_channels(out.branch_probs)), spec_.leaky_alpha);
  out.final_prob = sigmoid(conv(tape, out_, fused));
  tape.set_scope("");
  return out;
}

Var total_loss(const GeneratorOutput& out, const Tensor& label, const Di2inSpec& spec) {
  VXSEG_REQUIRE(out.branch_probs.size() == spec.branch_weights.size(),
                "generator output has ", out.branch_probs.size(), " branches, spec has ",
                spec.branch_weights.size());
  VXSEG_REQUIRE(out.final_prob.shape() == label.shape(), "label shape ", shape_str(label.shape()),
                " differs from prediction shape ", shape_str(out.final_prob.shape()));
  std::vector<Var> terms;
  std::vector<double> weights;
  for (std::size_t i = 0; i < out.branch_probs.size(); ++i) {
    terms.push_back(bce_loss(out.branch_probs[i], label));
    weights.push_back(spec.branch_weights[i]);
  }
  terms.push_back(bce_loss(out.final_prob, label));
  weights.push_back(spec.final_weight);
  return weighted_sum(terms, weights);
}

}  // namespace vxseg
