#include "vxseg/vxseg.h"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "vxseg/autograd.hpp"
#include "vxseg/checkpoint.hpp"
#include "vxseg/errors.hpp"
#include "vxseg/gradcheck.hpp"
#include "vxseg/metrics.hpp"
#include "vxseg/phantom.hpp"
#include "vxseg/predict.hpp"
#include "vxseg/train.hpp"
#include "vxseg/volume.hpp"

struct vxseg_config {
  vxseg::TrainConfig value;
};

struct vxseg_generator {
  vxseg::Di2in net;
};

struct vxseg_report {
  vxseg::MetricsReport value;
};

struct vxseg_gradcheck {
  vxseg::GradcheckReport value;
};

namespace {

thread_local std::string g_last_error;

vxseg_status fail(vxseg_status s, const char* what) {
  g_last_error = what;
  return s;
}

// Runs `body`, translating library exceptions into status codes.
template <typename F>
vxseg_status guarded(F&& body) {
  try {
    body();
    return VXSEG_OK;
  } catch (const vxseg::ContractViolation& e) {
    return fail(VXSEG_ERR_CONTRACT, e.what());
  } catch (const vxseg::IoError& e) {
    return fail(VXSEG_ERR_IO, e.what());
  } catch (const vxseg::FormatError& e) {
    return fail(VXSEG_ERR_FORMAT, e.what());
  } catch (const vxseg::NumericError& e) {
    return fail(VXSEG_ERR_NUMERIC, e.what());
  } catch (const vxseg::UndefinedMetric& e) {
    return fail(VXSEG_ERR_UNDEFINED, e.what());
  } catch (const std::exception& e) {
    return fail(VXSEG_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(VXSEG_ERR_INTERNAL, "unknown exception");
  }
}

void require_arg(const void* p, const char* name) {
  if (p == nullptr) throw vxseg::ContractViolation(std::string("argument '") + name + "' is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

vxseg::TrainHooks make_hooks(vxseg_log_fn log, void* user) {
  vxseg::TrainHooks hooks;
  if (log == nullptr) return hooks;
  hooks.on_record = [log, user](const vxseg::TrainLogRecord& r) {
    log(vxseg::format_log_record(r).c_str(), user);
  };
  hooks.on_warning = [log, user](const std::string& w) { log(("warning: " + w).c_str(), user); };
  return hooks;
}

vxseg_summary to_c(const vxseg::Summary& s) { return {s.mean, s.std, s.min, s.max, s.median}; }

std::optional<vxseg::OpKind> parse_op_kind(const std::string& name) {
  using vxseg::OpKind;
  for (OpKind k : {OpKind::conv3d, OpKind::upscale, OpKind::leaky_relu, OpKind::batch_norm,
                   OpKind::concat, OpKind::sigmoid, OpKind::bce, OpKind::weighted_sum,
                   OpKind::global_avg_pool, OpKind::linear, OpKind::slice, OpKind::reshape})
    if (vxseg::op_kind_name(k) == name) return k;
  return std::nullopt;
}

// Clears the backward fault hook on every exit path.
struct FaultScope {
  explicit FaultScope(std::optional<vxseg::OpKind> kind) { vxseg::set_backward_fault(kind); }
  ~FaultScope() { vxseg::set_backward_fault(std::nullopt); }
  FaultScope(const FaultScope&) = delete;
  FaultScope& operator=(const FaultScope&) = delete;
};

}  // namespace

extern "C" {

const char* vxseg_version(void) { return "1.0.0"; }

const char* vxseg_status_name(vxseg_status status) {
  switch (status) {
    case VXSEG_OK: return "ok";
    case VXSEG_ERR_CONTRACT: return "contract violation";
    case VXSEG_ERR_IO: return "I/O error";
    case VXSEG_ERR_FORMAT: return "format error";
    case VXSEG_ERR_NUMERIC: return "numeric error";
    case VXSEG_ERR_UNDEFINED: return "undefined metric";
    case VXSEG_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* vxseg_last_error(void) { return g_last_error.c_str(); }

void vxseg_string_free(char* s) { std::free(s); }

vxseg_status vxseg_synth(const char* out_dir, uint64_t count, uint64_t seed, int64_t size,
                         double spacing_mm) {
  return guarded([&] {
    require_arg(out_dir, "out_dir");
    vxseg::SynthOptions o;
    o.count = static_cast<std::size_t>(count);
    o.seed = seed;
    o.size = size;
    o.spacing_mm = static_cast<float>(spacing_mm);
    vxseg::synthesize_dataset(out_dir, o);
  });
}

vxseg_status vxseg_config_default(vxseg_config** out) {
  return guarded([&] {
    require_arg(out, "out");
    *out = new vxseg_config{};
  });
}

vxseg_status vxseg_config_parse(const char* text, vxseg_config** out) {
  return guarded([&] {
    require_arg(text, "text");
    require_arg(out, "out");
    *out = new vxseg_config{vxseg::TrainConfig::from_text(text)};
  });
}

vxseg_status vxseg_config_load(const char* path, vxseg_config** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    *out = new vxseg_config{vxseg::TrainConfig::load(path)};
  });
}

vxseg_status vxseg_config_update(vxseg_config* config, const char* text) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(text, "text");
    config->value = vxseg::TrainConfig::from_text(text, config->value);
  });
}

vxseg_status vxseg_config_to_text(const vxseg_config* config, char** text) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(text, "text");
    *text = dup_string(config->value.to_text());
  });
}

void vxseg_config_free(vxseg_config* config) { delete config; }

vxseg_status vxseg_pretrain(const vxseg_config* config, const char* data_dir, const char* out_dir,
                            vxseg_log_fn log, void* user) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(data_dir, "data_dir");
    require_arg(out_dir, "out_dir");
    const vxseg::TrainingSet data = vxseg::TrainingSet::load(data_dir);
    vxseg::Di2in g = vxseg::make_generator(config->value);
    vxseg::pretrain_generator(g, data, config->value, out_dir, make_hooks(log, user));
  });
}

vxseg_status vxseg_advtrain(const vxseg_config* config, const char* data_dir,
                            const char* init_checkpoint, const char* out_dir, vxseg_log_fn log,
                            void* user) {
  return guarded([&] {
    require_arg(config, "config");
    require_arg(data_dir, "data_dir");
    require_arg(init_checkpoint, "init_checkpoint");
    require_arg(out_dir, "out_dir");
    vxseg::Di2in g = vxseg::load_generator(init_checkpoint);
    const vxseg::TrainingSet data = vxseg::TrainingSet::load(data_dir);
    vxseg::adversarial_train(g, data, config->value, out_dir, make_hooks(log, user));
  });
}

vxseg_status vxseg_generator_load(const char* path, vxseg_generator** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    *out = new vxseg_generator{vxseg::load_generator(path)};
  });
}

void vxseg_generator_free(vxseg_generator* g) { delete g; }

vxseg_status vxseg_generator_spec(const vxseg_generator* g, char** text) {
  return guarded([&] {
    require_arg(g, "generator");
    require_arg(text, "text");
    *text = dup_string(g->net.spec().to_text());
  });
}

vxseg_status vxseg_predict_file(vxseg_generator* g, const char* in_path, const char* prob_out,
                                const char* mask_out, double threshold, double* wall_ms) {
  return guarded([&] {
    require_arg(g, "generator");
    require_arg(in_path, "in_path");
    require_arg(prob_out, "prob_out");
    if (mask_out != nullptr)
      VXSEG_REQUIRE(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1), got ", threshold);
    const vxseg::VolumeGrid image = vxseg::read_volume(in_path);
    const auto t0 = std::chrono::steady_clock::now();
    const vxseg::VolumeGrid prob = vxseg::predict_volume(g->net, image);
    const auto t1 = std::chrono::steady_clock::now();
    if (wall_ms != nullptr) *wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    for (const char* p : {prob_out, mask_out}) {
      if (p == nullptr) continue;
      std::error_code ec;
      const std::filesystem::path parent = std::filesystem::path(p).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    }
    vxseg::write_volume(prob, prob_out);
    if (mask_out != nullptr) vxseg::write_volume(vxseg::binarize(prob, threshold), mask_out);
  });
}

vxseg_status vxseg_evaluate(const char* pred_dir, const char* gt_dir, double threshold,
                            vxseg_report** out) {
  return guarded([&] {
    require_arg(pred_dir, "pred_dir");
    require_arg(gt_dir, "gt_dir");
    require_arg(out, "out");
    *out = new vxseg_report{vxseg::evaluate_directories(pred_dir, gt_dir, threshold)};
  });
}

void vxseg_report_free(vxseg_report* r) { delete r; }

size_t vxseg_report_case_count(const vxseg_report* r) { return r ? r->value.cases.size() : 0; }

size_t vxseg_report_included(const vxseg_report* r) { return r ? r->value.included : 0; }

vxseg_status vxseg_report_dice(const vxseg_report* r, vxseg_summary* out) {
  return guarded([&] {
    require_arg(r, "report");
    require_arg(out, "out");
    *out = to_c(r->value.dice);
  });
}

vxseg_status vxseg_report_asd(const vxseg_report* r, vxseg_summary* out) {
  return guarded([&] {
    require_arg(r, "report");
    require_arg(out, "out");
    *out = to_c(r->value.asd);
  });
}

vxseg_status vxseg_report_tsv(const vxseg_report* r, char** text) {
  return guarded([&] {
    require_arg(r, "report");
    require_arg(text, "text");
    *text = dup_string(r->value.to_tsv());
  });
}

vxseg_status vxseg_report_table(const vxseg_report* r, const char* method, char** text) {
  return guarded([&] {
    require_arg(r, "report");
    require_arg(text, "text");
    *text = dup_string(r->value.table(method ? method : ""));
  });
}

vxseg_status vxseg_gradcheck_run(uint64_t seed, double tolerance, const char* inject_fault,
                                 vxseg_gradcheck** out) {
  return guarded([&] {
    require_arg(out, "out");
    std::optional<vxseg::OpKind> fault;
    if (inject_fault != nullptr && *inject_fault != '\0') {
      fault = parse_op_kind(inject_fault);
      VXSEG_REQUIRE(fault.has_value(), "unknown op kind '", inject_fault, "'");
    }
    vxseg::GradcheckOptions o;
    o.seed = seed;
    if (tolerance > 0.0) o.primitive_tolerance = o.composed_tolerance = tolerance;
    const FaultScope scope(fault);
    *out = new vxseg_gradcheck{vxseg::run_gradcheck(o)};
  });
}

void vxseg_gradcheck_free(vxseg_gradcheck* r) { delete r; }

int vxseg_gradcheck_passed(const vxseg_gradcheck* r) { return r && r->value.passed() ? 1 : 0; }

size_t vxseg_gradcheck_count(const vxseg_gradcheck* r) { return r ? r->value.entries.size() : 0; }

size_t vxseg_gradcheck_worst(const vxseg_gradcheck* r) {
  if (r == nullptr || r->value.worst() == nullptr) return 0;
  return static_cast<size_t>(r->value.worst() - r->value.entries.data());
}

vxseg_status vxseg_gradcheck_entry(const vxseg_gradcheck* r, size_t index, const char** name,
                                   double* error, double* tolerance, int* passed) {
  return guarded([&] {
    require_arg(r, "report");
    VXSEG_REQUIRE(index < r->value.entries.size(), "gradcheck entry ", index, " out of range");
    const vxseg::GradcheckEntry& e = r->value.entries[index];
    if (name) *name = e.name.c_str();
    if (error) *error = e.max_error;
    if (tolerance) *tolerance = e.tolerance;
    if (passed) *passed = e.passed() ? 1 : 0;
  });
}

}  // extern "C"
