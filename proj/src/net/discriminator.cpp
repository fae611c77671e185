#include <cmath>

#include "../common/kv_text.hpp"
#include "vxseg/adversary.hpp"
#include "vxseg/checkpoint.hpp"
#include "vxseg/errors.hpp"
#include "vxseg/rng.hpp"

namespace vxseg {
namespace {

Tensor he_normal(Shape shape, std::int64_t fan_in, std::uint64_t seed) {
  Tensor w(std::move(shape));
  Rng rng(seed);
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.values()) v = static_cast<float>(rng.normal(0.0, sd));
  return w;
}

std::string stage_name(int level) { return "stage" + std::to_string(level); }

}  // namespace

void DiscriminatorSpec::validate() const {
  VXSEG_REQUIRE(base_filters >= 1, "discriminator base_filters must be at least 1");
  VXSEG_REQUIRE(conv_levels >= 2, "discriminator conv_levels must be at least 2, got ", conv_levels);
  VXSEG_REQUIRE(conv_levels <= 6, "discriminator conv_levels above 6 is not supported");
  VXSEG_REQUIRE(leaky_alpha > 0.0f && leaky_alpha < 1.0f, "leaky_alpha must lie in (0, 1)");
}

std::string DiscriminatorSpec::to_text() const {
  using namespace detail;
  return render_kv({
      {"kind", "discriminator"},
      {"base_filters", std::to_string(base_filters)},
      {"conv_levels", std::to_string(conv_levels)},
      {"leaky_alpha", format_float(leaky_alpha)},
      {"condition_on_image", condition_on_image ? "1" : "0"},
  });
}

DiscriminatorSpec DiscriminatorSpec::from_text(const std::string& text) {
  using namespace detail;
  DiscriminatorSpec s;
  for (const auto& [key, value] : parse_kv(text, "discriminator spec")) {
    if (key == "kind") VXSEG_REQUIRE(value == "discriminator", "spec kind is '", value, "', expected 'discriminator'");
    else if (key == "base_filters") s.base_filters = static_cast<int>(parse_int(key, value));
    else if (key == "conv_levels") s.conv_levels = static_cast<int>(parse_int(key, value));
    else if (key == "leaky_alpha") s.leaky_alpha = static_cast<float>(parse_double(key, value));
    else if (key == "condition_on_image") s.condition_on_image = parse_int(key, value) != 0;
    else throw ContractViolation(concat("unknown discriminator spec key '", key, "'"));
  }
  s.validate();
  return s;
}

Discriminator::Discriminator(DiscriminatorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  std::uint64_t stream = 0;
  int in = spec_.input_channels();
  for (int l = 0; l < spec_.conv_levels; ++l) {
    const int w = spec_.width(l);
    const std::string n = stage_name(l);
    // Batch norm follows, so the conv carries no bias.
    params_.add(n + ".conv.weight", he_normal({w, in, 3, 3, 3}, 27 * in, derive_seed(seed, stream++)));
    params_.add(n + ".bn.gamma", Tensor({w}, 1.0f));
    params_.add(n + ".bn.beta", Tensor({w}, 0.0f));
    params_.add_norm(n + ".bn", w);
    in = w;
  }
  params_.add("fc.weight", he_normal({1, in}, in, derive_seed(seed, stream++)));
  params_.add("fc.bias", Tensor({1}, 0.0f));
}

void Discriminator::check_input(const Shape& shape) const {
  VXSEG_REQUIRE(shape.size() == 5 && shape[0] >= 1 && shape[1] == spec_.input_channels(),
                "discriminator input must be [N,", spec_.input_channels(), ",D,H,W], got ",
                shape_str(shape));
  for (int a = 2; a < 5; ++a)
    VXSEG_REQUIRE(shape[a] >= spec_.min_extent(), "discriminator input extent ", shape[a],
                  " is smaller than 2^conv_levels = ", spec_.min_extent());
}

Var Discriminator::forward(Tape& tape, Var maps, NormMode mode, const BatchNormOptions& norm) {
  check_input(maps.shape());
  Var x = maps;
  for (int l = 0; l < spec_.conv_levels; ++l) {
    const std::string n = stage_name(l);
    tape.set_scope(n + ".conv");
    Parameter& w = params_.at(n + ".conv.weight");
    x = conv3d(x, tape.parameter(w), tape.constant(Tensor({w.value.dim(0)}, 0.0f)), 2);
    x = leaky_relu(x, spec_.leaky_alpha);
    tape.set_scope(n + ".bn");
    x = batch_norm(x, tape.parameter(params_.at(n + ".bn.gamma")),
                   tape.parameter(params_.at(n + ".bn.beta")), params_.norm(n + ".bn"), mode, norm);
  }
  tape.set_scope("fc");
  Var logit = linear(global_avg_pool(x), tape.parameter(params_.at("fc.weight")),
                     tape.parameter(params_.at("fc.bias")));
  Var prob = sigmoid(reshape(logit, {maps.shape()[0]}));
  tape.set_scope("");
  return prob;
}

Var discriminator_loss(Var d_on_gt, Var d_on_pred) {
  VXSEG_REQUIRE(d_on_gt.valid() && d_on_pred.valid(), "discriminator_loss needs bound inputs");
  const Tensor ones(d_on_gt.shape(), 1.0f);
  const Tensor zeros(d_on_pred.shape(), 0.0f);
  const Var terms[] = {bce_loss(d_on_gt, ones), bce_loss(d_on_pred, zeros)};
  const double weights[] = {1.0, 1.0};
  return weighted_sum(terms, weights);
}

Var generator_adversarial_loss(Var seg_loss, Var d_on_pred, double lambda) {
  VXSEG_REQUIRE(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and nonnegative, got ",
                lambda);
  // -mean(log d) is the BCE of d against all-ones targets.
  const Var terms[] = {seg_loss, bce_loss(d_on_pred, Tensor(d_on_pred.shape(), 1.0f))};
  const double weights[] = {1.0, lambda};
  return weighted_sum(terms, weights);
}

void save_discriminator(const Discriminator& net, const std::filesystem::path& path) {
  write_checkpoint(make_checkpoint(net.spec().to_text(), net.params()), path);
}

Discriminator load_discriminator(const std::filesystem::path& path) {
  const Checkpoint c = read_checkpoint(path);
  if (c.kind() != "discriminator")
    throw FormatError(detail::concat(path.string(), ": checkpoint kind is '", c.kind(),
                                     "', expected a discriminator"));
  Discriminator net(DiscriminatorSpec::from_text(c.spec_text), 0);
  apply_checkpoint(c, net.params());
  return net;
}

}  // namespace vxseg
