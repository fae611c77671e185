// vxseg command-line front end. Talks to the library only through the C API.
//
// Exit codes: 0 success, 1 failed check or internal error, 2 usage or input
// error, 3 numeric divergence during training.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vxseg/vxseg.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitCheck = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

int exit_code(vxseg_status s) {
  switch (s) {
    case VXSEG_OK: return 0;
    case VXSEG_ERR_NUMERIC: return kExitNumeric;
    case VXSEG_ERR_INTERNAL: return kExitCheck;
    default: return kExitUsage;
  }
}

int report(vxseg_status s) {
  if (s != VXSEG_OK) std::fprintf(stderr, "vxseg: %s: %s\n", vxseg_status_name(s), vxseg_last_error());
  return exit_code(s);
}

// Owning wrappers for the C handles.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};

std::string take_string(char* s) {
  std::string out = s ? s : "";
  vxseg_string_free(s);
  return out;
}

struct ConfigFlags {
  std::string path;
  std::vector<std::string> overrides;  // key=value
  bool show = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.path, "Training config file (key = value lines); defaults when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", f.overrides, "Override one config key, as key=value (repeatable)");
  cmd->add_flag("--show-config", f.show, "Print the effective config and exit");
}

vxseg_status build_config(const ConfigFlags& f, Handle<vxseg_config, vxseg_config_free>& cfg) {
  vxseg_status s = f.path.empty() ? vxseg_config_default(&cfg.p) : vxseg_config_load(f.path.c_str(), &cfg.p);
  if (s != VXSEG_OK) return s;
  if (f.overrides.empty()) return VXSEG_OK;
  std::string text;
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    text += (eq == std::string::npos ? kv : kv.substr(0, eq) + " = " + kv.substr(eq + 1)) + "\n";
  }
  return vxseg_config_update(cfg.p, text.c_str());
}

int show_config(const vxseg_config* cfg) {
  char* text = nullptr;
  const vxseg_status s = vxseg_config_to_text(cfg, &text);
  if (s != VXSEG_OK) return report(s);
  std::fputs(take_string(text).c_str(), stdout);
  return 0;
}

void print_line(const char* line, void* quiet) {
  if (*static_cast<bool*>(quiet)) return;
  std::puts(line);
  std::fflush(stdout);
}

// A prediction output path for `suffix` next to `out`, replacing a trailing
// "_prob.vxsg" or ".vxsg".
std::string sibling(const std::string& out, const std::string& suffix) {
  for (const std::string tail : {"_prob.vxsg", ".vxsg"})
    if (out.size() > tail.size() && out.compare(out.size() - tail.size(), tail.size(), tail) == 0)
      return out.substr(0, out.size() - tail.size()) + suffix;
  return out + suffix;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vxseg: adversarial volumetric segmentation on synthetic phantoms"};
  app.require_subcommand(0, 1);
  bool top_show_config = false;
  app.add_flag("--show-config", top_show_config, "Print the default training config and exit");
  app.set_version_flag("--version", std::string(vxseg_version()));

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic phantom dataset");
  std::string synth_out;
  std::uint64_t synth_count = 0, synth_seed = 0;
  std::int64_t synth_size = 32;
  double synth_spacing = 3.0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of cases")->required();
  synth->add_option("--seed", synth_seed, "Dataset seed");
  synth->add_option("--size", synth_size, "Voxels per axis")->capture_default_str();
  synth->add_option("--spacing", synth_spacing, "Isotropic output spacing in mm")->capture_default_str();

  // pretrain / advtrain
  ConfigFlags pre_cfg, adv_cfg;
  std::string pre_data, pre_out, adv_data, adv_out, adv_init;
  bool quiet = false;
  auto* pretrain = app.add_subcommand("pretrain", "Train the generator from scratch");
  add_config_flags(pretrain, pre_cfg);
  pretrain->add_option("--data", pre_data, "Dataset directory (from synth)");
  pretrain->add_option("--out", pre_out, "Output directory");
  pretrain->add_flag("--quiet", quiet, "Do not echo log records");

  auto* advtrain = app.add_subcommand("advtrain", "Adversarial refinement of a pretrained generator");
  add_config_flags(advtrain, adv_cfg);
  advtrain->add_option("--data", adv_data, "Dataset directory (from synth)");
  advtrain->add_option("--init", adv_init, "Pretrained generator checkpoint");
  advtrain->add_option("--out", adv_out, "Output directory");
  advtrain->add_flag("--quiet", quiet, "Do not echo log records");

  // predict
  auto* predict = app.add_subcommand("predict", "Probability map (and optional mask) of image volumes");
  std::string pred_ckpt, pred_in, pred_out;
  std::optional<double> pred_threshold;
  predict->add_option("--checkpoint", pred_ckpt, "Generator checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--in", pred_in, "Image volume, or a directory of <id>_image.vxsg files")
      ->required()
      ->check(CLI::ExistingPath);
  predict->add_option("--out", pred_out,
                      "Probability volume, or a directory receiving <id>_prob.vxsg files")
      ->required();
  predict->add_option("--threshold", pred_threshold,
                      "Also write the mask (probability >= t) as <id>_label.vxsg / <out>_label.vxsg");

  // eval
  auto* eval = app.add_subcommand("eval", "Dice and ASD of predictions against ground truth");
  std::string eval_pred, eval_gt, eval_out, eval_method = "DI2IN";
  double eval_threshold = 0.5;
  eval->add_option("--pred", eval_pred, "Directory of <id>_label.vxsg or <id>_prob.vxsg files")->required();
  eval->add_option("--gt", eval_gt, "Directory of <id>_label.vxsg ground-truth files")->required();
  eval->add_option("--threshold", eval_threshold, "Threshold for probability maps")->capture_default_str();
  eval->add_option("--report", eval_out, "TSV report path (default: <pred>/metrics.tsv)");
  eval->add_option("--method", eval_method, "Method name in the summary table")->capture_default_str();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  std::uint64_t gc_seed = 20170708;
  double gc_tolerance = 0.0;
  std::string gc_fault;
  gradcheck->add_option("--seed", gc_seed, "Seed of the random inputs")->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tolerance,
                        "Relative error bound for every check (default 1e-3 per op, 1e-2 composed)");
  gradcheck->add_option("--inject-fault", gc_fault,
                        "Corrupt the backward pass of one op kind (negative control), e.g. conv3d");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (app.got_subcommand(synth)) {
    const vxseg_status s = vxseg_synth(synth_out.c_str(), synth_count, synth_seed, synth_size, synth_spacing);
    if (s == VXSEG_OK) std::printf("wrote %llu cases to %s\n", static_cast<unsigned long long>(synth_count), synth_out.c_str());
    return report(s);
  }

  if (app.got_subcommand(pretrain) || app.got_subcommand(advtrain)) {
    const bool adv = app.got_subcommand(advtrain);
    const ConfigFlags& f = adv ? adv_cfg : pre_cfg;
    Handle<vxseg_config, vxseg_config_free> cfg;
    if (const vxseg_status s = build_config(f, cfg); s != VXSEG_OK) return report(s);
    if (f.show) return show_config(cfg.p);
    const std::string& data = adv ? adv_data : pre_data;
    const std::string& out = adv ? adv_out : pre_out;
    std::string missing;
    if (data.empty()) missing += " --data";
    if (out.empty()) missing += " --out";
    if (adv && adv_init.empty()) missing += " --init (a pretrained generator checkpoint)";
    if (!missing.empty()) {
      std::fprintf(stderr, "vxseg %s: missing required option(s):%s\n", adv ? "advtrain" : "pretrain", missing.c_str());
      return kExitUsage;
    }
    if (adv && !fs::is_regular_file(adv_init)) {
      std::fprintf(stderr, "vxseg advtrain: --init checkpoint %s does not exist\n", adv_init.c_str());
      return kExitUsage;
    }
    const vxseg_status s = adv ? vxseg_advtrain(cfg.p, data.c_str(), adv_init.c_str(), out.c_str(), print_line, &quiet)
                               : vxseg_pretrain(cfg.p, data.c_str(), out.c_str(), print_line, &quiet);
    return report(s);
  }

  if (app.got_subcommand(predict)) {
    Handle<vxseg_generator, vxseg_generator_free> g;
    if (const vxseg_status s = vxseg_generator_load(pred_ckpt.c_str(), &g.p); s != VXSEG_OK) return report(s);
    const double t = pred_threshold.value_or(0.5);
    std::vector<std::pair<std::string, std::string>> jobs;  // input, probability output
    if (fs::is_directory(pred_in)) {
      std::error_code ec;
      fs::create_directories(pred_out, ec);
      std::vector<fs::path> inputs;
      for (const auto& e : fs::directory_iterator(pred_in)) {
        const std::string name = e.path().filename().string();
        const std::string tail = "_image.vxsg";
        if (name.size() > tail.size() && name.compare(name.size() - tail.size(), tail.size(), tail) == 0)
          inputs.push_back(e.path());
      }
      std::sort(inputs.begin(), inputs.end());
      for (const auto& p : inputs) {
        const std::string name = p.filename().string();
        const std::string id = name.substr(0, name.size() - 11);
        jobs.emplace_back(p.string(), (fs::path(pred_out) / (id + "_prob.vxsg")).string());
      }
      if (jobs.empty()) {
        std::fprintf(stderr, "vxseg predict: no *_image.vxsg files in %s\n", pred_in.c_str());
        return kExitUsage;
      }
    } else {
      jobs.emplace_back(pred_in, pred_out);
    }
    double total_ms = 0.0;
    for (const auto& [in, out] : jobs) {
      const std::string mask = sibling(out, "_label.vxsg");
      double ms = 0.0;
      const vxseg_status s =
          vxseg_predict_file(g.p, in.c_str(), out.c_str(), pred_threshold ? mask.c_str() : nullptr, t, &ms);
      if (s != VXSEG_OK) return report(s);
      total_ms += ms;
      std::printf("%s -> %s%s%s  inference %.1f ms\n", in.c_str(), out.c_str(), pred_threshold ? " + " : "",
                  pred_threshold ? mask.c_str() : "", ms);
    }
    if (jobs.size() > 1) std::printf("%zu volumes, mean inference %.1f ms\n", jobs.size(), total_ms / jobs.size());
    return 0;
  }

  if (app.got_subcommand(eval)) {
    Handle<vxseg_report, vxseg_report_free> r;
    if (const vxseg_status s = vxseg_evaluate(eval_pred.c_str(), eval_gt.c_str(), eval_threshold, &r.p); s != VXSEG_OK)
      return report(s);
    char* tsv = nullptr;
    char* table = nullptr;
    if (const vxseg_status s = vxseg_report_tsv(r.p, &tsv); s != VXSEG_OK) return report(s);
    const std::string tsv_text = take_string(tsv);
    if (const vxseg_status s = vxseg_report_table(r.p, eval_method.c_str(), &table); s != VXSEG_OK) return report(s);
    std::fputs(take_string(table).c_str(), stdout);
    const std::string path = eval_out.empty() ? (fs::path(eval_pred) / "metrics.tsv").string() : eval_out;
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr || std::fwrite(tsv_text.data(), 1, tsv_text.size(), f) != tsv_text.size()) {
      if (f) std::fclose(f);
      std::fprintf(stderr, "vxseg: I/O error: cannot write report %s\n", path.c_str());
      return kExitUsage;
    }
    std::fclose(f);
    std::printf("report written to %s\n", path.c_str());
    return 0;
  }

  if (app.got_subcommand(gradcheck)) {
    Handle<vxseg_gradcheck, vxseg_gradcheck_free> r;
    const vxseg_status s = vxseg_gradcheck_run(gc_seed, gc_tolerance, gc_fault.c_str(), &r.p);
    if (s != VXSEG_OK) return report(s);
    const std::size_t n = vxseg_gradcheck_count(r.p);
    for (std::size_t i = 0; i < n; ++i) {
      const char* name = nullptr;
      double err = 0.0, tol = 0.0;
      int ok = 0;
      vxseg_gradcheck_entry(r.p, i, &name, &err, &tol, &ok);
      std::printf("%-4s %-34s max rel error %.3e  (tolerance %.1e)\n", ok ? "ok" : "FAIL", name, err, tol);
    }
    if (vxseg_gradcheck_passed(r.p)) {
      std::printf("gradcheck passed: %zu checks\n", n);
      return 0;
    }
    const char* name = nullptr;
    double err = 0.0, tol = 0.0;
    vxseg_gradcheck_entry(r.p, vxseg_gradcheck_worst(r.p), &name, &err, &tol, nullptr);
    std::printf("gradcheck FAILED; worst offender: %s (%.3e > %.1e)\n", name, err, tol);
    return kExitCheck;
  }

  if (top_show_config) {
    Handle<vxseg_config, vxseg_config_free> cfg;
    if (const vxseg_status s = vxseg_config_default(&cfg.p); s != VXSEG_OK) return report(s);
    return show_config(cfg.p);
  }
  std::fputs(app.help().c_str(), stderr);
  return kExitUsage;
}
