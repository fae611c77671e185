#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vxseg/adversary.hpp"
#include "vxseg/di2in.hpp"

namespace vxseg {

// Training hyperparameters plus the network shapes they train. Text form is
// one `key = value` per line with '#' comments; keys match the field names
// and unknown keys are rejected.
struct TrainConfig {
  // Pretraining (plain SGD, step schedule).
  int pretrain_iterations = 200;
  int pretrain_batch = 4;
  double lr_initial = 0.01;
  int lr_drop_at = 100;
  double lr_drop_factor = 10.0;

  // Adversarial phase: k_D discriminator steps, then k_G generator steps, per outer iteration.
  int adv_iterations = 100;
  double lambda = 0.01;
  int k_D = 10;
  int d_batch = 8;
  int k_G = 1;
  int g_batch = 4;
  double adv_lr_g = 0.001;  // continues at the post-drop pretraining rate
  double adv_lr_d = 0.001;

  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 writes only the final checkpoints
  bool log_timing = true;    // false writes 0 in the wall_ms column (byte-stable logs)

  // Loss weights: one per supervision branch, plus the fused output.
  std::vector<double> loss_weights{1.0, 1.0, 1.0};
  double final_weight = 1.0;

  // Generator shape.
  int g_base_filters = 16;
  int g_encoder_levels = 4;
  std::vector<int> g_branch_levels{4, 2, 0};
  int g_fuse_filters = 8;
  float leaky_alpha = 0.01f;

  // Discriminator shape.
  int d_base_filters = 8;
  int d_conv_levels = 4;
  bool d_condition_on_image = false;

  void validate() const;
  Di2inSpec generator_spec() const;
  DiscriminatorSpec discriminator_spec() const;

  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  // Keys absent from `text` keep their value from `base`.
  static TrainConfig from_text(const std::string& text, const TrainConfig& base);
  static TrainConfig load(const std::filesystem::path& path);
};

// Freshly initialized generator of config's shape, seeded from config.seed.
Di2in make_generator(const TrainConfig& config);

// lr_initial before lr_drop_at, lr_initial / lr_drop_factor from then on.
double lr_schedule(int iteration, const TrainConfig& config);

// p <- p - lr * g for every trainable parameter, then zero every gradient.
// A non-finite gradient aborts before any parameter changes.
void sgd_step(ParameterSet& params, double lr);

// Image and label volumes of a dataset held in memory, each [1,1,D,H,W].
struct TrainingSet {
  std::vector<std::string> ids;
  std::vector<Tensor> images;
  std::vector<Tensor> labels;

  std::size_t size() const { return images.size(); }
  static TrainingSet load(const std::filesystem::path& dir);
  // Stacked [B,1,D,H,W] batches.
  Tensor image_batch(const std::vector<std::size_t>& ids) const;
  Tensor label_batch(const std::vector<std::size_t>& ids) const;
};

struct StepStats {
  double loss = 0.0;
  double d_on_gt_mean = 0.0;
  double d_on_pred_mean = 0.0;
};

// One SGD step of the generator on total_loss (train-mode BN).
StepStats pretrain_step(Di2in& g, const Tensor& images, const Tensor& labels, double lr);

// One SGD step of D on l_D. gt and pred maps go through D as a single batch;
// pred must be detached (a plain tensor).
StepStats discriminator_step(Discriminator& d, const Tensor& gt_maps, const Tensor& pred_maps,
                             double lr);

// One SGD step of G on seg_loss - lambda * mean(log D(G(x))) with D frozen
// and in inference mode. seg_weight scales the segmentation term (1 in
// training; 0 isolates the adversarial term).
StepStats generator_step(Di2in& g, Discriminator& d, const Tensor& images, const Tensor& labels,
                         double lambda, double lr, double seg_weight = 1.0);

// Inference-mode probability maps [B,1,D,H,W].
Tensor predict_maps(Di2in& g, const Tensor& images);
// Inference-mode D(Y) per item.
std::vector<float> discriminator_scores(Discriminator& d, const Tensor& maps);

// Line-oriented training log:
// iteration  phase  loss  lr  d_on_gt_mean  d_on_pred_mean  wall_ms
// Fields that do not apply to a phase are written as "-".
struct TrainLogRecord {
  int iteration = 0;
  std::string phase;  // pretrain | adv_d | adv_g
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> d_on_gt_mean;
  std::optional<double> d_on_pred_mean;
  double wall_ms = 0.0;
};

inline constexpr const char* kTrainLogHeader =
    "iteration\tphase\tloss\tlr\td_on_gt_mean\td_on_pred_mean\twall_ms";
std::string format_log_record(const TrainLogRecord& r);
std::vector<TrainLogRecord> read_train_log(const std::filesystem::path& path);

struct TrainResult {
  std::vector<TrainLogRecord> log;
  std::vector<std::string> warnings;
};

// Observer hooks; any may be empty.
struct TrainHooks {
  std::function<void(const TrainLogRecord&)> on_record;
  std::function<void(const std::string&)> on_warning;
};

inline constexpr const char* kGeneratorFile = "generator.vxck";
inline constexpr const char* kAdvGeneratorFile = "generator_adv.vxck";
inline constexpr const char* kDiscriminatorFile = "discriminator.vxck";
inline constexpr const char* kPretrainLogFile = "pretrain_log.tsv";
inline constexpr const char* kAdvLogFile = "adv_log.tsv";
inline constexpr const char* kLastGoodSuffix = ".last_good";

// Trains `g` in place for config.pretrain_iterations steps, writing
// <out>/pretrain_log.tsv and <out>/generator.vxck. On a non-finite loss or
// gradient it writes <out>/generator.vxck.last_good from the untouched
// parameters and throws NumericError.
TrainResult pretrain_generator(Di2in& g, const TrainingSet& data, const TrainConfig& config,
                               const std::filesystem::path& out, const TrainHooks& hooks = {});

// Alternating D/G refinement starting from a pretrained `g` and a freshly initialized D.
// Writes <out>/adv_log.tsv, <out>/generator_adv.vxck and
// <out>/discriminator.vxck. Divergence handling as in pretrain_generator.
TrainResult adversarial_train(Di2in& g, const TrainingSet& data, const TrainConfig& config,
                              const std::filesystem::path& out, const TrainHooks& hooks = {});

// Collapse detector: flags once both means stay within 1e-3 of 0.5 for 10
// consecutive outer iterations.
class CollapseDetector {
 public:
  // Returns true on the iteration the run length first reaches the window.
  bool update(double d_on_gt_mean, double d_on_pred_mean);
  int run_length() const { return run_; }

  static constexpr double kBand = 1e-3;
  static constexpr int kWindow = 10;

 private:
  int run_ = 0;
};

// Order-sensitive FNV-1a hash of every parameter value, for phase checks.
std::uint64_t parameter_checksum(const ParameterSet& params);

}  // namespace vxseg
