#include "vxseg/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "../common/kv_text.hpp"
#include "vxseg/checkpoint.hpp"
#include "vxseg/errors.hpp"
#include "vxseg/phantom.hpp"
#include "vxseg/rng.hpp"
#include "vxseg/volume.hpp"

namespace vxseg {
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  VXSEG_REQUIRE(pretrain_iterations >= 0, "pretrain_iterations must be nonnegative");
  VXSEG_REQUIRE(adv_iterations >= 0, "adv_iterations must be nonnegative");
  VXSEG_REQUIRE(pretrain_batch >= 1 && d_batch >= 1 && g_batch >= 1, "batch sizes must be positive");
  VXSEG_REQUIRE(k_D >= 1 && k_G >= 1, "k_D and k_G must be positive");
  VXSEG_REQUIRE(lr_initial >= 0.0 && adv_lr_g >= 0.0 && adv_lr_d >= 0.0,
                "learning rates must be nonnegative");
  VXSEG_REQUIRE(lr_drop_factor > 0.0, "lr_drop_factor must be positive");
  VXSEG_REQUIRE(lr_drop_at >= 0, "lr_drop_at must be nonnegative");
  // With no pretraining there is no schedule to constrain.
  VXSEG_REQUIRE(pretrain_iterations == 0 || lr_drop_at <= pretrain_iterations, "lr_drop_at (",
                lr_drop_at, ") exceeds pretrain_iterations (", pretrain_iterations, ")");
  VXSEG_REQUIRE(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and nonnegative");
  VXSEG_REQUIRE(checkpoint_every >= 0, "checkpoint_every must be nonnegative");
  VXSEG_REQUIRE(loss_weights.size() == g_branch_levels.size(), "loss_weights has ",
                loss_weights.size(), " entries for ", g_branch_levels.size(), " branches");
  generator_spec().validate();
  discriminator_spec().validate();
}

Di2inSpec TrainConfig::generator_spec() const {
  Di2inSpec s;
  s.base_filters = g_base_filters;
  s.encoder_levels = g_encoder_levels;
  s.leaky_alpha = leaky_alpha;
  s.branch_levels = g_branch_levels;
  s.branch_factors.clear();
  for (int l : g_branch_levels) s.branch_factors.push_back(l >= 0 && l < 31 ? 1 << l : 0);
  s.branch_weights = loss_weights;
  s.final_weight = final_weight;
  s.fuse_filters = g_fuse_filters;
  return s;
}

DiscriminatorSpec TrainConfig::discriminator_spec() const {
  DiscriminatorSpec s;
  s.base_filters = d_base_filters;
  s.conv_levels = d_conv_levels;
  s.leaky_alpha = leaky_alpha;
  s.condition_on_image = d_condition_on_image;
  return s;
}

std::string TrainConfig::to_text() const {
  using namespace detail;
  const auto i = [](long long v) { return std::to_string(v); };
  const auto int_str = [](int v) { return std::to_string(v); };
  return render_kv({
      {"pretrain_iterations", i(pretrain_iterations)},
      {"pretrain_batch", i(pretrain_batch)},
      {"lr_initial", format_double(lr_initial)},
      {"lr_drop_at", i(lr_drop_at)},
      {"lr_drop_factor", format_double(lr_drop_factor)},
      {"adv_iterations", i(adv_iterations)},
      {"lambda", format_double(lambda)},
      {"k_D", i(k_D)},
      {"d_batch", i(d_batch)},
      {"k_G", i(k_G)},
      {"g_batch", i(g_batch)},
      {"adv_lr_g", format_double(adv_lr_g)},
      {"adv_lr_d", format_double(adv_lr_d)},
      {"seed", std::to_string(seed)},
      {"checkpoint_every", i(checkpoint_every)},
      {"log_timing", log_timing ? "1" : "0"},
      {"loss_weights", format_list(loss_weights, format_double)},
      {"final_weight", format_double(final_weight)},
      {"g_base_filters", i(g_base_filters)},
      {"g_encoder_levels", i(g_encoder_levels)},
      {"g_branch_levels", format_list(g_branch_levels, int_str)},
      {"g_fuse_filters", i(g_fuse_filters)},
      {"leaky_alpha", format_float(leaky_alpha)},
      {"d_base_filters", i(d_base_filters)},
      {"d_conv_levels", i(d_conv_levels)},
      {"d_condition_on_image", d_condition_on_image ? "1" : "0"},
  });
}

TrainConfig TrainConfig::from_text(const std::string& text) { return from_text(text, TrainConfig()); }

TrainConfig TrainConfig::from_text(const std::string& text, const TrainConfig& base) {
  using namespace detail;
  TrainConfig c = base;
  const auto as_int = [](const std::string& k, const std::string& v) {
    const long long x = parse_int(k, v);
    VXSEG_REQUIRE(x >= -2147483647LL && x <= 2147483647LL, "config value for '", k, "' is out of range");
    return static_cast<int>(x);
  };
  const auto as_bool = [](const std::string& k, const std::string& v) {
    VXSEG_REQUIRE(v == "0" || v == "1", "config key '", k, "' takes 0 or 1, got '", v, "'");
    return v == "1";
  };
  for (const auto& [k, v] : parse_kv(text, "train config")) {
    if (k == "pretrain_iterations") c.pretrain_iterations = as_int(k, v);
    else if (k == "pretrain_batch") c.pretrain_batch = as_int(k, v);
    else if (k == "lr_initial") c.lr_initial = parse_double(k, v);
    else if (k == "lr_drop_at") c.lr_drop_at = as_int(k, v);
    else if (k == "lr_drop_factor") c.lr_drop_factor = parse_double(k, v);
    else if (k == "adv_iterations") c.adv_iterations = as_int(k, v);
    else if (k == "lambda") c.lambda = parse_double(k, v);
    else if (k == "k_D") c.k_D = as_int(k, v);
    else if (k == "d_batch") c.d_batch = as_int(k, v);
    else if (k == "k_G") c.k_G = as_int(k, v);
    else if (k == "g_batch") c.g_batch = as_int(k, v);
    else if (k == "adv_lr_g") c.adv_lr_g = parse_double(k, v);
    else if (k == "adv_lr_d") c.adv_lr_d = parse_double(k, v);
    else if (k == "seed") c.seed = parse_uint(k, v);
    else if (k == "checkpoint_every") c.checkpoint_every = as_int(k, v);
    else if (k == "log_timing") c.log_timing = as_bool(k, v);
    else if (k == "loss_weights") c.loss_weights = parse_list<double>(k, v, parse_double);
    else if (k == "final_weight") c.final_weight = parse_double(k, v);
    else if (k == "g_base_filters") c.g_base_filters = as_int(k, v);
    else if (k == "g_encoder_levels") c.g_encoder_levels = as_int(k, v);
    else if (k == "g_branch_levels") c.g_branch_levels = parse_list<int>(k, v, [&](auto key, auto s) { return as_int(std::string(key), std::string(s)); });
    else if (k == "g_fuse_filters") c.g_fuse_filters = as_int(k, v);
    else if (k == "leaky_alpha") c.leaky_alpha = static_cast<float>(parse_double(k, v));
    else if (k == "d_base_filters") c.d_base_filters = as_int(k, v);
    else if (k == "d_conv_levels") c.d_conv_levels = as_int(k, v);
    else if (k == "d_condition_on_image") c.d_condition_on_image = as_bool(k, v);
    else throw ContractViolation(concat("unknown config key '", k, "'"));
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(detail::concat("cannot open config file ", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_text(ss.str());
  } catch (const ContractViolation& e) {
    throw ContractViolation(detail::concat(path.string(), ": ", e.what()));
  }
}

// ---------------------------------------------------------------- optimizer

Di2in make_generator(const TrainConfig& config) {
  config.validate();
  return Di2in(config.generator_spec(), derive_seed(config.seed, 7));
}

double lr_schedule(int iteration, const TrainConfig& config) {
  VXSEG_REQUIRE(iteration >= 0, "iteration must be nonnegative, got ", iteration);
  return iteration < config.lr_drop_at ? config.lr_initial
                                       : config.lr_initial / config.lr_drop_factor;
}

void sgd_step(ParameterSet& params, double lr) {
  VXSEG_REQUIRE(lr >= 0.0 && std::isfinite(lr), "learning rate must be finite and nonnegative");
  for (const Parameter& p : params.params()) {
    if (!p.trainable) continue;
    if (!p.grad.all_finite())
      throw NumericError(detail::concat("non-finite gradient in parameter '", p.name, "'"));
  }
  const float step = static_cast<float>(lr);
  for (Parameter& p : params.params()) {
    if (!p.trainable) continue;
    float* v = p.value.data();
    const float* g = p.grad.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) v[i] -= step * g[i];
  }
  params.zero_grad();
}

std::uint64_t parameter_checksum(const ParameterSet& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const Tensor& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Parameter& p : params.params()) mix(p.value);
  for (const NormState& n : params.norms()) {
    mix(n.running_mean);
    mix(n.running_var);
  }
  return h;
}

// ---------------------------------------------------------------- data

TrainingSet TrainingSet::load(const fs::path& dir) {
  TrainingSet s;
  for (const CaseEntry& c : read_manifest(dir)) {
    const VolumeGrid img = read_volume(c.image);
    const VolumeGrid lab = read_volume(c.label);
    VXSEG_REQUIRE(img.kind == VolumeKind::image && lab.kind == VolumeKind::label, "case ", c.id,
                  ": image/label kinds are swapped");
    VXSEG_REQUIRE(img.extents == lab.extents, "case ", c.id, ": image and label extents differ");
    const Shape shape{1, 1, img.extents[0], img.extents[1], img.extents[2]};
    s.ids.push_back(c.id);
    s.images.emplace_back(shape, img.values);
    s.labels.emplace_back(shape, lab.values);
  }
  return s;
}

namespace {

Tensor gather(const std::vector<Tensor>& src, const std::vector<std::size_t>& ids) {
  std::vector<Tensor> items;
  items.reserve(ids.size());
  for (std::size_t i : ids) {
    VXSEG_REQUIRE(i < src.size(), "case index ", i, " out of range");
    items.push_back(src[i]);
  }
  return stack_batch(items, true);
}

double mean_of(const Tensor& t) { return tensor_sum(t) / static_cast<double>(t.size()); }

void require_finite_loss(double loss, const char* phase) {
  if (!std::isfinite(loss))
    throw NumericError(detail::concat(phase, " loss is not finite (", loss, ")"));
}

}  // namespace

Tensor TrainingSet::image_batch(const std::vector<std::size_t>& ids) const { return gather(images, ids); }
Tensor TrainingSet::label_batch(const std::vector<std::size_t>& ids) const { return gather(labels, ids); }

// ---------------------------------------------------------------- steps

StepStats pretrain_step(Di2in& g, const Tensor& images, const Tensor& labels, double lr) {
  g.params().zero_grad();
  Tape tape;
  const auto out = g.forward(tape, tape.constant(images), NormMode::train);
  Var loss = total_loss(out, labels, g.spec());
  StepStats s;
  s.loss = loss.value().item();
  require_finite_loss(s.loss, "pretrain");
  tape.backward(loss);
  sgd_step(g.params(), lr);
  return s;
}

StepStats discriminator_step(Discriminator& d, const Tensor& gt_maps, const Tensor& pred_maps,
                             double lr) {
  VXSEG_REQUIRE(gt_maps.shape() == pred_maps.shape(), "ground-truth batch ",
                shape_str(gt_maps.shape()), " and prediction batch ", shape_str(pred_maps.shape()),
                " differ");
  const std::int64_t n = gt_maps.dim(0);
  const Tensor parts[] = {gt_maps, pred_maps};
  d.params().zero_grad();
  Tape tape;
  Var scores = d.forward(tape, tape.constant(stack_batch(parts, true)), NormMode::train);
  Var on_gt = slice_batch(scores, 0, n);
  Var on_pred = slice_batch(scores, n, 2 * n);
  Var loss = discriminator_loss(on_gt, on_pred);
  StepStats s;
  s.loss = loss.value().item();
  s.d_on_gt_mean = mean_of(on_gt.value());
  s.d_on_pred_mean = mean_of(on_pred.value());
  require_finite_loss(s.loss, "discriminator");
  tape.backward(loss);
  sgd_step(d.params(), lr);
  return s;
}

namespace {

Var discriminator_input(Tape& tape, const Discriminator& d, const Tensor& images, Var maps) {
  if (!d.spec().condition_on_image) return maps;
  return concat_channels(tape.constant(images), maps);
}

Tensor discriminator_input(const Discriminator& d, const Tensor& images, const Tensor& maps) {
  if (!d.spec().condition_on_image) return maps;
  Tape tape;
  return concat_channels(tape.constant(images), tape.constant(maps)).value();
}

// Freezes a parameter set for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParameterSet& p) : p_(p) { p_.set_trainable(false); }
  ~FreezeGuard() { p_.set_trainable(true); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParameterSet& p_;
};

}  // namespace

StepStats generator_step(Di2in& g, Discriminator& d, const Tensor& images, const Tensor& labels,
                         double lambda, double lr, double seg_weight) {
  VXSEG_REQUIRE(seg_weight >= 0.0, "seg_weight must be nonnegative");
  g.params().zero_grad();
  d.params().zero_grad();
  const FreezeGuard frozen(d.params());
  Tape tape;
  const auto out = g.forward(tape, tape.constant(images), NormMode::train);
  Var seg = total_loss(out, labels, g.spec());
  if (seg_weight != 1.0) {
    const Var terms[] = {seg};
    const double weights[] = {seg_weight};
    seg = weighted_sum(terms, weights);
  }
  Var scores = d.forward(tape, discriminator_input(tape, d, images, out.final_prob), NormMode::infer);
  Var loss = generator_adversarial_loss(seg, scores, lambda);
  StepStats s;
  s.loss = loss.value().item();
  s.d_on_pred_mean = mean_of(scores.value());
  require_finite_loss(s.loss, "generator");
  tape.backward(loss);
  sgd_step(g.params(), lr);
  return s;
}

Tensor predict_maps(Di2in& g, const Tensor& images) {
  Tape tape;
  return g.forward(tape, tape.constant(images), NormMode::infer).final_prob.value();
}

std::vector<float> discriminator_scores(Discriminator& d, const Tensor& maps) {
  Tape tape;
  const Tensor& v = d.forward(tape, tape.constant(maps), NormMode::infer).value();
  return {v.values().begin(), v.values().end()};
}

// ---------------------------------------------------------------- logging

std::string format_log_record(const TrainLogRecord& r) {
  using detail::format_double;
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
  char ms[32];
  std::snprintf(ms, sizeof ms, "%.1f", r.wall_ms);
  return detail::concat(r.iteration, '\t', r.phase, '\t', format_double(r.loss), '\t',
                        format_double(r.lr), '\t', opt(r.d_on_gt_mean), '\t',
                        opt(r.d_on_pred_mean), '\t', ms);
}

std::vector<TrainLogRecord> read_train_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(detail::concat("cannot open training log ", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != kTrainLogHeader)
    throw FormatError(detail::concat(path.string(), ": missing or unexpected log header"));
  std::vector<TrainLogRecord> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, '\t');) f.push_back(cell);
    if (f.size() != 7)
      throw FormatError(detail::concat(path.string(), ": row ", row, " has ", f.size(), " fields"));
    try {
      TrainLogRecord r;
      r.iteration = static_cast<int>(detail::parse_int("iteration", f[0]));
      r.phase = f[1];
      r.loss = detail::parse_double("loss", f[2]);
      r.lr = detail::parse_double("lr", f[3]);
      if (f[4] != "-") r.d_on_gt_mean = detail::parse_double("d_on_gt_mean", f[4]);
      if (f[5] != "-") r.d_on_pred_mean = detail::parse_double("d_on_pred_mean", f[5]);
      r.wall_ms = detail::parse_double("wall_ms", f[6]);
      out.push_back(std::move(r));
    } catch (const ContractViolation& e) {
      throw FormatError(detail::concat(path.string(), ": row ", row, ": ", e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------- loops

bool CollapseDetector::update(double d_on_gt_mean, double d_on_pred_mean) {
  const bool flat = std::abs(d_on_gt_mean - 0.5) <= kBand && std::abs(d_on_pred_mean - 0.5) <= kBand;
  run_ = flat ? run_ + 1 : 0;
  return run_ == kWindow;
}

namespace {

using Clock = std::chrono::steady_clock;

class RunLog {
 public:
  RunLog(const TrainConfig& config, const TrainHooks& hooks, fs::path path)
      : timing_(config.log_timing), hooks_(hooks), path_(std::move(path)), start_(Clock::now()) {}

  void add(TrainLogRecord r) {
    r.wall_ms = timing_ ? std::chrono::duration<double, std::milli>(Clock::now() - start_).count() : 0.0;
    if (hooks_.on_record) hooks_.on_record(r);
    result.log.push_back(std::move(r));
  }
  void warn(std::string w) {
    if (hooks_.on_warning) hooks_.on_warning(w);
    result.warnings.push_back(std::move(w));
  }
  void write() const {
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(detail::concat("cannot write training log ", path_.string()));
    out << kTrainLogHeader << '\n';
    for (const auto& r : result.log) out << format_log_record(r) << '\n';
    if (!out) throw IoError(detail::concat("failed writing training log ", path_.string()));
  }

  TrainResult result;

 private:
  bool timing_;
  const TrainHooks& hooks_;
  fs::path path_;
  Clock::time_point start_;
};

std::string numbered(const char* stem, int n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_iter_%05d.vxck", stem, n);
  return buf;
}

void prepare_output(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out))
    throw IoError(detail::concat("cannot create output directory ", out.string()));
}

fs::path with_suffix(const fs::path& p, const char* suffix) { return fs::path(p.string() + suffix); }

void check_data(const TrainingSet& data, int batch, const Di2in& g) {
  VXSEG_REQUIRE(data.size() > 0, "training set is empty");
  VXSEG_REQUIRE(static_cast<std::size_t>(batch) <= data.size(), "batch size ", batch,
                " exceeds the training set size ", data.size());
  g.check_input(data.images.front().shape());
}

}  // namespace

TrainResult pretrain_generator(Di2in& g, const TrainingSet& data, const TrainConfig& config,
                               const fs::path& out, const TrainHooks& hooks) {
  config.validate();
  prepare_output(out);
  RunLog log(config, hooks, out / kPretrainLogFile);
  if (config.pretrain_iterations > 0) check_data(data, config.pretrain_batch, g);
  BatchSampler sampler(std::max<std::size_t>(data.size(), 1),
                       static_cast<std::size_t>(config.pretrain_batch) <= data.size()
                           ? static_cast<std::size_t>(config.pretrain_batch)
                           : 1,
                       derive_seed(config.seed, 100));
  for (int it = 0; it < config.pretrain_iterations; ++it) {
    const auto ids = sampler.next();
    const double lr = lr_schedule(it, config);
    StepStats s;
    try {
      s = pretrain_step(g, data.image_batch(ids), data.label_batch(ids), lr);
    } catch (const NumericError&) {
      save_generator(g, with_suffix(out / kGeneratorFile, kLastGoodSuffix));
      log.write();
      throw;
    }
    log.add({it, "pretrain", s.loss, lr, std::nullopt, std::nullopt, 0.0});
    if (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0)
      save_generator(g, out / numbered("generator", it + 1));
  }
  save_generator(g, out / kGeneratorFile);
  log.write();
  return std::move(log.result);
}

TrainResult adversarial_train(Di2in& g, const TrainingSet& data, const TrainConfig& config,
                              const fs::path& out, const TrainHooks& hooks) {
  config.validate();
  prepare_output(out);
  RunLog log(config, hooks, out / kAdvLogFile);
  Discriminator d(config.discriminator_spec(), derive_seed(config.seed, 200));
  if (config.adv_iterations > 0) {
    check_data(data, std::max(config.d_batch, config.g_batch), g);
    d.check_input({1, d.spec().input_channels(), data.images.front().dim(2),
                   data.images.front().dim(3), data.images.front().dim(4)});
  }
  const std::size_t n = std::max<std::size_t>(data.size(), 1);
  BatchSampler d_sampler(n, std::min<std::size_t>(n, static_cast<std::size_t>(config.d_batch)),
                         derive_seed(config.seed, 201));
  BatchSampler g_sampler(n, std::min<std::size_t>(n, static_cast<std::size_t>(config.g_batch)),
                         derive_seed(config.seed, 202));
  CollapseDetector collapse;
  int d_iter = 0, g_iter = 0;

  auto on_divergence = [&] {
    save_generator(g, with_suffix(out / kAdvGeneratorFile, kLastGoodSuffix));
    save_discriminator(d, with_suffix(out / kDiscriminatorFile, kLastGoodSuffix));
    log.write();
  };

  for (int outer = 0; outer < config.adv_iterations; ++outer) {
    try {
      // G is fixed during the k_D discriminator steps, so each case's
      // prediction is computed once per outer iteration.
      std::vector<std::vector<std::size_t>> batches;
      std::set<std::size_t> needed;
      for (int k = 0; k < config.k_D; ++k) {
        batches.push_back(d_sampler.next());
        needed.insert(batches.back().begin(), batches.back().end());
      }
      std::map<std::size_t, Tensor> cache;
      for (std::size_t id : needed) cache.emplace(id, predict_maps(g, data.images[id]));

      const std::uint64_t g_before = parameter_checksum(g.params());
      double gt_sum = 0.0, pred_sum = 0.0;
      for (const auto& ids : batches) {
        std::vector<Tensor> preds;
        for (std::size_t id : ids) preds.push_back(cache.at(id));
        const Tensor images = data.image_batch(ids);
        const Tensor gt = discriminator_input(d, images, data.label_batch(ids));
        const Tensor pred = discriminator_input(d, images, stack_batch(preds, true));
        const StepStats s = discriminator_step(d, gt, pred, config.adv_lr_d);
        gt_sum += s.d_on_gt_mean;
        pred_sum += s.d_on_pred_mean;
        log.add({d_iter++, "adv_d", s.loss, config.adv_lr_d, s.d_on_gt_mean, s.d_on_pred_mean, 0.0});
      }
      if (parameter_checksum(g.params()) != g_before)
        throw std::logic_error("generator parameters changed during discriminator steps");
      if (collapse.update(gt_sum / config.k_D, pred_sum / config.k_D))
        log.warn(detail::concat("discriminator collapse: D(Y_gt) and D(G(x)) within ",
                                CollapseDetector::kBand, " of 0.5 for ", CollapseDetector::kWindow,
                                " consecutive outer iterations (ending at ", outer, ")"));

      const std::uint64_t d_before = parameter_checksum(d.params());
      for (int k = 0; k < config.k_G; ++k) {
        const auto ids = g_sampler.next();
        const StepStats s = generator_step(g, d, data.image_batch(ids), data.label_batch(ids),
                                           config.lambda, config.adv_lr_g);
        log.add({g_iter++, "adv_g", s.loss, config.adv_lr_g, std::nullopt, s.d_on_pred_mean, 0.0});
      }
      if (parameter_checksum(d.params()) != d_before)
        throw std::logic_error("discriminator parameters changed during generator steps");
    } catch (const NumericError&) {
      on_divergence();
      throw;
    }
    // theta_G0 <- theta_G1: training simply continues from the updated G.
    if (config.checkpoint_every > 0 && (outer + 1) % config.checkpoint_every == 0) {
      save_generator(g, out / numbered("generator_adv", outer + 1));
      save_discriminator(d, out / numbered("discriminator", outer + 1));
    }
  }
  save_generator(g, out / kAdvGeneratorFile);
  save_discriminator(d, out / kDiscriminatorFile);
  log.write();
  return std::move(log.result);
}

}  // namespace vxseg
