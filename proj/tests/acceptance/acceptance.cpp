// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--cli PATH] [--only 1,5,...]
//
// Criteria 4 and 5 train full-size desk runs and dominate the runtime (about
// an hour on one core). Every result line states the measured numbers.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>
#include <sys/wait.h>

#include "oracles/metric_oracles.hpp"
#include "oracles/oracles.hpp"
#include "vxseg/checkpoint.hpp"
#include "vxseg/errors.hpp"
#include "vxseg/gradcheck.hpp"
#include "vxseg/metrics.hpp"
#include "vxseg/ops.hpp"
#include "vxseg/phantom.hpp"
#include "vxseg/predict.hpp"
#include "vxseg/rng.hpp"
#include "vxseg/train.hpp"

using namespace vxseg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Paths {
  fs::path work;
  fs::path source;  // repository root
  std::string cli;
};

// The committed synthetic suite: 64 training and 16 held-out phantoms.
constexpr std::uint64_t kTrainSeed = 1000;
constexpr std::uint64_t kHeldOutSeed = 2000;
constexpr std::uint64_t kSuiteSeeds[] = {0, 1, 2};

fs::path suite_dir(const Paths& p, const char* split) {
  const fs::path dir = p.work / "suite" / split;
  if (!fs::exists(dir / kManifestName)) {
    SynthOptions o;
    o.count = std::string(split) == "train" ? 64 : 16;
    o.seed = std::string(split) == "train" ? kTrainSeed : kHeldOutSeed;
    synthesize_dataset(dir, o);
  }
  return dir;
}

// ---------------------------------------------------------------- 1

Outcome gradient_suite(const Paths&) {
  const auto t0 = Clock::now();
  const Di2inSpec tiny = gradcheck_tiny_spec();
  GradcheckOptions o;  // 1e-3 primitives, 1e-2 composed
  const GradcheckReport r = run_gradcheck(o);
  const double secs = seconds_since(t0);
  std::size_t primitives = 0, composed = 0;
  for (const auto& e : r.entries) (e.composed ? composed : primitives)++;
  const GradcheckEntry* w = r.worst();
  Outcome out;
  out.pass = r.passed() && composed >= 1 && tiny.base_filters == 2 && tiny.encoder_levels == 2 &&
             o.primitive_tolerance == 1e-3 && o.composed_tolerance == 1e-2 && secs < 120.0;
  out.detail = std::to_string(primitives) + " primitive + " + std::to_string(composed) +
               " composed checks; worst " + (w ? w->name + fmt(" %.2e", w->max_error) + fmt(" / %.0e", w->tolerance) : "-") +
               fmt("; %.1f s", secs);
  return out;
}

// ---------------------------------------------------------------- 2

Outcome oracle_equivalence(const Paths&) {
  const auto t0 = Clock::now();
  std::vector<std::string> failures;
  double conv_err = 0.0, up_err = 0.0, asd_err = 0.0;
  std::size_t instances = 0;

  // conv3d against direct summation, strides 1 and 2, up to 16^3.
  {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 24; ++t) {
      const std::int64_t d = 1 + static_cast<std::int64_t>(rng() % 16);
      const std::int64_t h = 1 + static_cast<std::int64_t>(rng() % 16);
      const std::int64_t w = 1 + static_cast<std::int64_t>(rng() % 16);
      const std::int64_t ci = 1 + static_cast<std::int64_t>(rng() % 4), co = 1 + static_cast<std::int64_t>(rng() % 4);
      const int stride = 1 + static_cast<int>(rng() % 2);
      const Tensor x = oracle::random_tensor({2, ci, d, h, w}, rng());
      const Tensor k = oracle::random_tensor({co, ci, 3, 3, 3}, rng());
      const Tensor b = oracle::random_tensor({co}, rng());
      Tape tape;
      const Tensor y = conv3d(tape.constant(x), tape.constant(k), tape.constant(b), stride).value();
      const Tensor ref = oracle::direct_conv3d(x, k, b, stride);
      if (y.shape() != ref.shape()) failures.push_back("conv3d shape");
      for (std::size_t i = 0; i < y.size() && y.shape() == ref.shape(); ++i)
        conv_err = std::max(conv_err, std::abs(static_cast<double>(y[i]) - ref[i]) / std::max(1.0, std::abs(static_cast<double>(ref[i]))));
      ++instances;
    }
  }
  // trilinear_upscale against the eight-neighbour formula.
  {
    std::mt19937_64 rng(3);
    for (int factor : {2, 4, 16})
      for (int t = 0; t < 6; ++t) {
        const std::int64_t d = 1 + static_cast<std::int64_t>(rng() % (factor == 16 ? 2 : 6));
        const std::int64_t h = 1 + static_cast<std::int64_t>(rng() % (factor == 16 ? 2 : 6));
        const std::int64_t w = 1 + static_cast<std::int64_t>(rng() % (factor == 16 ? 2 : 6));
        const Tensor x = oracle::random_tensor({1, 2, d, h, w}, rng());
        Tape tape;
        const Tensor y = trilinear_upscale(tape.constant(x), factor).value();
        for (std::int64_t c = 0; c < 2; ++c)
          for (std::int64_t z = 0; z < d * factor; ++z)
            for (std::int64_t yy = 0; yy < h * factor; ++yy)
              for (std::int64_t xx = 0; xx < w * factor; ++xx)
                up_err = std::max(up_err, std::abs(y.at5(0, c, z, yy, xx) - oracle::trilinear_voxel(x, 0, c, z, yy, xx, factor)));
        ++instances;
      }
  }
  // Masks: every pair of 2x2x2 masks exhaustively, then random and blob
  // masks up to 16^3 with anisotropic spacing.
  bool exact = true;
  {
    std::vector<VolumeGrid> all;
    for (int bits = 0; bits < 256; ++bits) {
      VolumeGrid m = oracle::mask({2, 2, 2}, {3.0f, 1.0f, 0.5f});
      for (int i = 0; i < 8; ++i) m.values[static_cast<std::size_t>(i)] = (bits >> i) & 1 ? 1.0f : 0.0f;
      all.push_back(std::move(m));
    }
    for (const auto& a : all) {
      if (surface_voxels(a) != oracle::surface_oracle(a)) exact = false;
      for (const auto& b : all) {
        if (dice(a, b) != oracle::dice_oracle(a, b)) exact = false;
        const bool empty = std::count(a.values.begin(), a.values.end(), 1.0f) == 0 ||
                           std::count(b.values.begin(), b.values.end(), 1.0f) == 0;
        if (empty) continue;
        const SurfaceDistance got = asd(a, b), want = oracle::asd_oracle(a, b);
        asd_err = std::max({asd_err, std::abs(got.mean_mm - want.mean_mm), std::abs(got.max_mm - want.max_mm)});
      }
    }
    instances += 256 * 256;
    std::uint64_t seed = 0;
    for (const std::array<std::int64_t, 3> e : {std::array<std::int64_t, 3>{5, 7, 3}, {8, 8, 8}, {16, 16, 16}, {16, 11, 13}})
      for (const std::array<float, 3> sp : {std::array<float, 3>{1, 1, 1}, {3, 3, 3}, {2.5f, 0.7f, 0.7f}})
        for (int rep = 0; rep < 3; ++rep, ++seed) {
          const VolumeGrid a = rep == 0 ? oracle::random_mask(e, seed, 0.15, sp) : oracle::blob_mask(e, seed, sp);
          const VolumeGrid b = oracle::blob_mask(e, seed + 500, sp);
          if (surface_voxels(a) != oracle::surface_oracle(a)) exact = false;
          if (dice(a, b) != oracle::dice_oracle(a, b)) exact = false;
          if (std::count(a.values.begin(), a.values.end(), 1.0f) == 0 || std::count(b.values.begin(), b.values.end(), 1.0f) == 0)
            continue;
          const SurfaceDistance got = asd(a, b), want = oracle::asd_oracle(a, b);
          asd_err = std::max({asd_err, std::abs(got.mean_mm - want.mean_mm), std::abs(got.max_mm - want.max_mm)});
          ++instances;
        }
  }
  const double secs = seconds_since(t0);
  Outcome out;
  out.pass = failures.empty() && exact && conv_err <= 1e-6 && up_err <= 1e-6 && asd_err <= 1e-6 && secs < 300.0;
  out.detail = std::to_string(instances) + " instances; conv3d " + fmt("%.1e", conv_err) + ", upscale " +
               fmt("%.1e", up_err) + ", asd " + fmt("%.1e mm", asd_err) + ", dice/surface " +
               (exact ? "exact" : "MISMATCH") + fmt("; %.1f s", secs);
  return out;
}

// ---------------------------------------------------------------- 3

Outcome shape_closure(const Paths&) {
  std::mt19937_64 rng(3);
  int ok = 0;
  std::string bad;
  bool factors_ok = true;
  for (int t = 0; t < 10; ++t) {
    Di2inSpec s;
    s.base_filters = 1 + static_cast<int>(rng() % 3);
    s.encoder_levels = 4 + static_cast<int>(rng() % 2);
    s.fuse_filters = 1 + static_cast<int>(rng() % 4);
    if (t % 2 == 1) {  // random attachment depths on odd trials
      std::set<int> levels;
      const int n = 1 + static_cast<int>(rng() % 4);
      while (static_cast<int>(levels.size()) < n) levels.insert(static_cast<int>(rng() % (s.encoder_levels + 1)));
      s.branch_levels.assign(levels.rbegin(), levels.rend());
      s.branch_factors.clear();
      for (int l : s.branch_levels) s.branch_factors.push_back(1 << l);
      s.branch_weights.assign(s.branch_levels.size(), 1.0);
    }
    for (std::size_t i = 0; i < s.branch_levels.size(); ++i)
      if (s.branch_factors[i] != (1 << s.branch_levels[i])) factors_ok = false;
    if (t % 2 == 0 && s.branch_factors != std::vector<int>{16, 4, 1}) factors_ok = false;
    const std::int64_t m = s.divisor();
    const Shape in{1 + static_cast<std::int64_t>(rng() % 2), 1, m * (1 + static_cast<std::int64_t>(rng() % 2)),
                   m * (1 + static_cast<std::int64_t>(rng() % 2)), m * (1 + static_cast<std::int64_t>(rng() % 2))};
    Di2in g(s, rng());
    Tape tape;
    const auto out = g.forward(tape, tape.constant(oracle::random_tensor(in, rng())), NormMode::train);
    bool match = out.final_prob.shape() == Shape{in[0], 1, in[2], in[3], in[4]} &&
                 out.branch_probs.size() == s.branch_levels.size();
    for (const auto& b : out.branch_probs) match = match && b.shape() == out.final_prob.shape();
    if (match) ++ok;
    else bad += " " + shape_str(in);
  }
  Outcome o;
  o.pass = ok == 10 && factors_ok;
  o.detail = std::to_string(ok) + "/10 specs shape-closed (levels 4-5, random branch sets on half)" +
             (factors_ok ? "; factors equal 2^depth, default {16,4,1}" : "; FACTOR MISMATCH") + bad;
  return o;
}

// ---------------------------------------------------------------- 4

Outcome protocol_fidelity(const Paths& p) {
  const fs::path train = suite_dir(p, "train");
  TrainConfig c;  // the published protocol
  c.g_base_filters = 8;
  const fs::path out = p.work / "protocol";
  const auto t0 = Clock::now();
  const TrainingSet data = TrainingSet::load(train);
  Di2in g = make_generator(c);
  pretrain_generator(g, data, c, out);
  adversarial_train(g, data, c, out);
  const double minutes = seconds_since(t0) / 60.0;

  std::vector<std::string> problems;
  const auto pre = read_train_log(out / kPretrainLogFile);
  if (pre.size() != 200) problems.push_back(std::to_string(pre.size()) + " pretrain rows");
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const double want = i < 100 ? 0.01 : 0.001;
    if (pre[i].iteration != static_cast<int>(i) || pre[i].phase != "pretrain" || pre[i].lr != want) {
      problems.push_back("pretrain row " + std::to_string(i));
      break;
    }
  }
  const auto adv = read_train_log(out / kAdvLogFile);
  std::size_t nd = 0, ng = 0;
  bool pattern = adv.size() == 1100;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const bool is_g = i % 11 == 10;  // ten D steps, then one G step, per outer iteration
    if (adv[i].phase == "adv_d") ++nd;
    if (adv[i].phase == "adv_g") ++ng;
    if (adv[i].phase != (is_g ? "adv_g" : "adv_d")) pattern = false;
  }
  if (nd != 1000) problems.push_back(std::to_string(nd) + " D steps");
  if (ng != 100) problems.push_back(std::to_string(ng) + " G steps");
  if (!pattern) problems.push_back("D/G interleaving");
  Outcome o;
  o.pass = problems.empty() && minutes < 30.0;
  o.detail = std::to_string(pre.size()) + " pretrain steps (lr 0.01 -> 0.001 at step 100), " +
             std::to_string(nd) + " D-steps, " + std::to_string(ng) + " G-steps; " + fmt("%.1f min", minutes) +
             " at 32^3, base_filters 8";
  for (const auto& s : problems) o.detail += "; BAD " + s;
  return o;
}

// ---------------------------------------------------------------- 5

struct HeldOut {
  double dice = 0.0;
  double asd = 0.0;
};

HeldOut evaluate_held_out(Di2in& g, const fs::path& held) {
  std::vector<CaseMetrics> cases;
  for (const auto& c : read_manifest(held)) {
    const VolumeGrid image = read_volume(held / c.image);
    const VolumeGrid label = read_volume(held / c.label);
    cases.push_back(evaluate_case(c.id, binarize(predict_volume(g, image), 0.5), label));
  }
  const MetricsReport r = cohort_report(cases);
  return {r.dice.mean, r.asd.mean};
}

Outcome method_ordering(const Paths& p) {
  const fs::path train = suite_dir(p, "train"), held = suite_dir(p, "held_out");
  const TrainingSet data = TrainingSet::load(train);
  const TrainConfig base = TrainConfig::load(p.source / "configs" / "synthetic_suite.cfg");
  Outcome o;
  int ordered = 0;
  bool pretrain_ok = true;
  const auto t0 = Clock::now();
  for (std::uint64_t seed : kSuiteSeeds) {
    TrainConfig c = base;
    c.seed = seed;
    const fs::path out = p.work / ("suite_seed" + std::to_string(seed));
    Di2in g = make_generator(c);
    pretrain_generator(g, data, c, out);
    const HeldOut pre = evaluate_held_out(g, held);
    adversarial_train(g, data, c, out);
    const HeldOut adv = evaluate_held_out(g, held);
    const bool order = adv.dice >= pre.dice && adv.asd <= pre.asd;
    ordered += order;
    pretrain_ok = pretrain_ok && pre.dice >= 0.85;
    o.detail += "seed " + std::to_string(seed) + ": DI2IN dice " + fmt("%.4f", pre.dice) + " asd " +
                fmt("%.3f", pre.asd) + " -> DI2IN-AN dice " + fmt("%.4f", adv.dice) + " asd " +
                fmt("%.3f", adv.asd) + (order ? " (ordered)" : " (not ordered)") + "; ";
  }
  o.pass = pretrain_ok && ordered >= 2;
  o.detail += std::to_string(ordered) + "/3 seeds ordered" + fmt("; %.1f min", seconds_since(t0) / 60.0);
  return o;
}

// ---------------------------------------------------------------- 6

Outcome adversarial_sign(const Paths& p) {
  const fs::path train = suite_dir(p, "train");
  const TrainingSet data = TrainingSet::load(train);
  const TrainConfig c = TrainConfig::load(p.source / "configs" / "synthetic_suite.cfg");
  Di2in g = load_generator(p.source / "tests" / "data" / "golden_generator.vxck");

  // D gets the first outer iteration's k_D steps against the pretrained G.
  Discriminator d(c.discriminator_spec(), derive_seed(c.seed, 200));
  BatchSampler sampler(data.size(), static_cast<std::size_t>(c.d_batch), derive_seed(c.seed, 201));
  for (int k = 0; k < c.k_D; ++k) {
    const auto ids = sampler.next();
    discriminator_step(d, data.label_batch(ids), predict_maps(g, data.image_batch(ids)), c.adv_lr_d);
  }

  // Ten G updates on a fixed probe batch with D frozen; the adversarial term
  // alone (seg weight 0, lambda 1) so the measured quantity is the one the
  // update ascends. Each step reports D(G(x)) before its update.
  const std::vector<std::size_t> probe{0, 1, 2, 3};
  const Tensor images = data.image_batch(probe), labels = data.label_batch(probe);
  const std::uint64_t d_sum = parameter_checksum(d.params());
  std::vector<double> trace;
  for (int k = 0; k <= 10; ++k)
    trace.push_back(generator_step(g, d, images, labels, 1.0, c.adv_lr_g, 0.0).d_on_pred_mean);
  bool monotone = true;
  for (std::size_t i = 1; i < trace.size(); ++i) monotone = monotone && trace[i] >= trace[i - 1];
  Outcome o;
  o.pass = monotone && trace.back() > trace.front() && parameter_checksum(d.params()) == d_sum;
  o.detail = "mean D(G(probe)) over 10 G-updates:";
  for (double v : trace) o.detail += fmt(" %.6f", v);
  if (parameter_checksum(d.params()) != d_sum) o.detail += "; D CHANGED";
  return o;
}

// ---------------------------------------------------------------- 7

Outcome determinism(const Paths& p) {
  const fs::path train = suite_dir(p, "train");
  const TrainingSet data = TrainingSet::load(train);
  TrainConfig c = TrainConfig::load(p.source / "configs" / "synthetic_suite.cfg");
  c.pretrain_iterations = 20;
  c.lr_drop_at = 10;
  c.adv_iterations = 3;
  c.g_base_filters = 4;
  c.seed = 7;
  std::vector<std::vector<std::string>> runs;
  for (const char* name : {"determinism_a", "determinism_b"}) {
    const fs::path out = p.work / name;
    fs::remove_all(out);
    Di2in g = make_generator(c);
    pretrain_generator(g, data, c, out);
    adversarial_train(g, data, c, out);
    std::vector<std::string> files;
    for (const char* f : {kGeneratorFile, kAdvGeneratorFile, kDiscriminatorFile, kPretrainLogFile, kAdvLogFile})
      files.push_back(slurp(out / f));
    runs.push_back(std::move(files));
  }
  std::size_t same = 0, bytes = 0;
  for (std::size_t i = 0; i < runs[0].size(); ++i) {
    same += !runs[0][i].empty() && runs[0][i] == runs[1][i];
    bytes += runs[0][i].size();
  }
  Outcome o;
  o.pass = same == runs[0].size();
  o.detail = std::to_string(same) + "/" + std::to_string(runs[0].size()) +
             " artifacts bit-identical (3 checkpoints, 2 logs, " + std::to_string(bytes) + " bytes)";
  return o;
}

// ---------------------------------------------------------------- 8

Outcome cohort_math(const Paths&) {
  // 50 cases from real masks: phantom labels against eroded/shifted copies.
  std::vector<CaseMetrics> cases;
  for (std::uint64_t i = 0; i < 50; ++i) {
    SynthOptions o;
    o.size = 24;
    const auto [image, label] = synthesize_case(o, derive_seed(4242, i));
    VolumeGrid pred = oracle::mask(label.extents, label.spacing);
    const std::int64_t shift = static_cast<std::int64_t>(i % 3);
    for (std::int64_t z = 0; z + shift < label.extents[0]; ++z)
      for (std::int64_t y = 0; y < label.extents[1]; ++y)
        for (std::int64_t x = 0; x < label.extents[2]; ++x) pred.at(z + shift, y, x) = label.at(z, y, x);
    cases.push_back(evaluate_case("c" + std::to_string(i), pred, label));
  }
  const MetricsReport r = cohort_report(cases);

  // Independent recomputation: Welford moments, running extremes, and a
  // median by nth_element.
  double worst = 0.0;
  auto check = [&](std::vector<double> v, const Summary& s) {
    double mean = 0.0, m2 = 0.0, lo = INFINITY, hi = -INFINITY;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double d = v[k] - mean;
      mean += d / static_cast<double>(k + 1);
      m2 += d * (v[k] - mean);
      lo = std::min(lo, v[k]);
      hi = std::max(hi, v[k]);
    }
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
    double median = v[n / 2];
    if (n % 2 == 0) {
      std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2 - 1), v.end());
      median = (median + v[n / 2 - 1]) / 2.0;
    }
    for (double e : {s.mean - mean, s.std - std::sqrt(m2 / static_cast<double>(n)), s.min - lo, s.max - hi, s.median - median})
      worst = std::max(worst, std::abs(e));
  };
  std::vector<double> d, a;
  for (const auto& c : r.cases)
    if (!c.flagged) {
      d.push_back(c.dice);
      a.push_back(c.asd_mean_mm);
    }
  check(d, r.dice);
  check(a, r.asd);

  const std::string table = r.table("DI2IN");
  const auto header_end = table.find('\n', table.find("Method"));
  const std::string header = table.substr(table.find("Method"), header_end - table.find("Method"));
  std::vector<std::size_t> pos;
  for (const char* col : {"Mean", "Std", "Max", "Median", "Mean", "Std", "Min", "Median"}) {
    const std::size_t from = pos.empty() ? 0 : pos.back() + 1;
    pos.push_back(header.find(col, from));
  }
  const bool layout = table.find("ASD (mm)") < table.find("Dice") &&
                      std::is_sorted(pos.begin(), pos.end()) && pos.back() != std::string::npos;
  Outcome o;
  o.pass = r.included == 50 && worst <= 1e-9 && layout;
  o.detail = std::to_string(r.included) + " cases; max deviation " + fmt("%.1e", worst) +
             "; columns ASD Mean/Std/Max/Median | Dice Mean/Std/Min/Median " + (layout ? "in order" : "OUT OF ORDER");
  return o;
}

// ---------------------------------------------------------------- 9

Outcome inference_latency(const Paths& p) {
  const fs::path dir = p.work / "latency";
  fs::create_directories(dir);
  const TrainConfig defaults;  // default desk-scale generator (base 16, 4 levels)
  save_generator(make_generator(defaults), dir / "default_generator.vxck");
  SynthOptions o;
  o.size = 64;
  o.spacing_mm = 2.0f;
  write_volume(synthesize_case(o, 99).first, dir / "case_image.vxsg");

  const std::string cmd = p.cli + " predict --checkpoint '" + (dir / "default_generator.vxck").string() +
                          "' --in '" + (dir / "case_image.vxsg").string() + "' --out '" +
                          (dir / "case_prob.vxsg").string() + "' 2>&1";
  const auto t0 = Clock::now();
  std::string output;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe != nullptr) {
    char buf[512];
    while (fgets(buf, sizeof buf, pipe)) output += buf;
  }
  const int status = pipe ? pclose(pipe) : -1;
  const double process_s = seconds_since(t0);
  const std::size_t at = output.find("inference ");
  const double reported_ms = at == std::string::npos ? -1.0 : std::atof(output.c_str() + at + 10);
  Outcome out;
  const bool ran = WIFEXITED(status) && WEXITSTATUS(status) == 0 && reported_ms >= 0.0 &&
                   read_volume(dir / "case_prob.vxsg").extents == std::array<std::int64_t, 3>{64, 64, 64};
  out.pass = ran && reported_ms < 5000.0;
  out.detail = ran ? "64^3 with the default spec: reported " + fmt("%.0f ms", reported_ms) + " inference, " +
                         fmt("%.2f s", process_s) + " for the whole CLI process (target < 5 s)"
                   : "predict failed: " + output;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  Paths paths;
  paths.work = fs::current_path() / "acceptance_work";
  paths.source = VXSEG_SOURCE_DIR;
  paths.cli = VXSEG_CLI_PATH;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) paths.work = argv[++i];
    else if (a == "--cli" && i + 1 < argc) paths.cli = argv[++i];
    else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::atoi(tok.c_str()));
    } else {
      std::fprintf(stderr, "usage: acceptance [--work DIR] [--cli PATH] [--only N,M,...]\n");
      return 2;
    }
  }
  fs::create_directories(paths.work);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome(const Paths&)> run;
  };
  const Criterion criteria[] = {
      {1, "gradient suite", gradient_suite},
      {2, "oracle equivalence", oracle_equivalence},
      {3, "shape closure", shape_closure},
      {4, "training protocol fidelity", protocol_fidelity},
      {5, "DI2IN vs DI2IN-AN ordering on synthetics", method_ordering},
      {6, "adversarial sign sanity", adversarial_sign},
      {7, "determinism", determinism},
      {8, "metric cohort math", cohort_math},
      {9, "inference latency", inference_latency},
  };
  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run(paths);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
