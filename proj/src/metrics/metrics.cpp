#include "vxseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "../common/kv_text.hpp"
#include "vxseg/errors.hpp"

namespace vxseg {
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_mask(const VolumeGrid& m, const char* what) {
  VXSEG_REQUIRE(m.kind == VolumeKind::label, what, " must be a label volume");
  m.validate();
}

void require_comparable(const VolumeGrid& a, const VolumeGrid& b) {
  require_mask(a, "prediction");
  require_mask(b, "ground truth");
  VXSEG_REQUIRE(a.extents == b.extents, "mask extents differ: (", a.extents[0], ",", a.extents[1],
                ",", a.extents[2], ") vs (", b.extents[0], ",", b.extents[1], ",", b.extents[2], ")");
  VXSEG_REQUIRE(a.spacing == b.spacing, "mask spacings differ: (", a.spacing[0], ",", a.spacing[1],
                ",", a.spacing[2], ") vs (", b.spacing[0], ",", b.spacing[1], ",", b.spacing[2], ")");
}

// Felzenszwalb-Huttenlocher lower envelope along one line: out[p] =
// min_q f[q] + w (p - q)^2, skipping infinite sites.
void envelope_1d(const double* f, double* out, std::int64_t n, double w, std::vector<std::int64_t>& v,
                 std::vector<double>& z) {
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n) + 1);
  auto site = [&](std::int64_t q) { return f[q] + w * static_cast<double>(q) * static_cast<double>(q); };
  std::int64_t k = -1;  // index of the rightmost parabola in the envelope
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    for (;;) {
      if (k < 0) {
        k = 0;
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
        break;
      }
      const std::int64_t r = v[static_cast<std::size_t>(k)];
      const double s = (site(q) - site(r)) / (2.0 * w * static_cast<double>(q - r));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
        continue;
      }
      ++k;
      v[static_cast<std::size_t>(k)] = q;
      z[static_cast<std::size_t>(k)] = s;
      z[static_cast<std::size_t>(k) + 1] = kInf;
      break;
    }
  }
  if (k < 0) {
    std::fill(out, out + n, kInf);
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t p = 0; p < n; ++p) {
    while (z[static_cast<std::size_t>(j) + 1] < static_cast<double>(p)) ++j;
    const std::int64_t q = v[static_cast<std::size_t>(j)];
    const double d = static_cast<double>(p - q);
    out[p] = f[q] + w * d * d;
  }
}

// Squared physical distance from every voxel to the nearest site.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& site, const std::array<std::int64_t, 3>& e,
                                const std::array<float, 3>& spacing) {
  std::vector<double> d(site.size());
  for (std::size_t i = 0; i < site.size(); ++i) d[i] = site[i] ? 0.0 : kInf;
  const std::int64_t strides[3] = {e[1] * e[2], e[2], 1};
  std::vector<double> line_in, line_out;
  std::vector<std::int64_t> v;
  std::vector<double> z;
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t n = e[static_cast<std::size_t>(axis)];
    const std::int64_t stride = strides[axis];
    const double w = static_cast<double>(spacing[static_cast<std::size_t>(axis)]) *
                     static_cast<double>(spacing[static_cast<std::size_t>(axis)]);
    line_in.resize(static_cast<std::size_t>(n));
    line_out.resize(static_cast<std::size_t>(n));
    const std::int64_t total = e[0] * e[1] * e[2];
    for (std::int64_t start = 0; start < total; ++start) {
      // Visit each line once: start must have coordinate 0 along `axis`.
      if ((start / stride) % n != 0) continue;
      for (std::int64_t i = 0; i < n; ++i) line_in[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(start + i * stride)];
      envelope_1d(line_in.data(), line_out.data(), n, w, v, z);
      for (std::int64_t i = 0; i < n; ++i) d[static_cast<std::size_t>(start + i * stride)] = line_out[static_cast<std::size_t>(i)];
    }
  }
  return d;
}

std::int64_t foreground_count(const VolumeGrid& m) {
  return std::count(m.values.begin(), m.values.end(), 1.0f);
}

}  // namespace

VolumeGrid binarize(const VolumeGrid& prob_map, double threshold) {
  VXSEG_REQUIRE(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1), got ", threshold);
  VolumeGrid out(VolumeKind::label, prob_map.extents, prob_map.spacing);
  out.origin = prob_map.origin;
  VXSEG_REQUIRE(prob_map.values.size() == out.values.size(), "probability map size does not match its extents");
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = static_cast<double>(prob_map.values[i]) >= threshold ? 1.0f : 0.0f;
  return out;
}

double dice(const VolumeGrid& pred, const VolumeGrid& gt) {
  require_comparable(pred, gt);
  std::int64_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool a = pred.values[i] == 1.0f, b = gt.values[i] == 1.0f;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<Voxel> surface_voxels(const VolumeGrid& mask) {
  require_mask(mask, "mask");
  const auto& e = mask.extents;
  std::vector<Voxel> out;
  auto fg = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
    return z >= 0 && y >= 0 && x >= 0 && z < e[0] && y < e[1] && x < e[2] && mask.at(z, y, x) == 1.0f;
  };
  for (std::int64_t z = 0; z < e[0]; ++z)
    for (std::int64_t y = 0; y < e[1]; ++y)
      for (std::int64_t x = 0; x < e[2]; ++x) {
        if (mask.at(z, y, x) != 1.0f) continue;
        if (!fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) || !fg(z, y + 1, x) ||
            !fg(z, y, x - 1) || !fg(z, y, x + 1))
          out.push_back({z, y, x});
      }
  return out;
}

SurfaceDistance asd(const VolumeGrid& pred, const VolumeGrid& gt) {
  require_comparable(pred, gt);
  const bool pred_empty = foreground_count(pred) == 0, gt_empty = foreground_count(gt) == 0;
  if (pred_empty || gt_empty)
    throw UndefinedMetric(pred_empty && gt_empty ? "ASD is undefined: both masks are empty"
                          : pred_empty          ? "ASD is undefined: prediction mask is empty"
                                                : "ASD is undefined: ground-truth mask is empty");
  const auto sp = surface_voxels(pred), sg = surface_voxels(gt);
  auto sites = [&](const std::vector<Voxel>& s) {
    std::vector<std::uint8_t> m(pred.values.size(), 0);
    for (const Voxel& v : s) m[pred.index(v[0], v[1], v[2])] = 1;
    return m;
  };
  const auto to_gt = squared_edt(sites(sg), pred.extents, pred.spacing);
  const auto to_pred = squared_edt(sites(sp), pred.extents, pred.spacing);

  double sum_p = 0.0, sum_g = 0.0, max_p = 0.0, max_g = 0.0;
  for (const Voxel& v : sp) {
    const double d = std::sqrt(to_gt[pred.index(v[0], v[1], v[2])]);
    sum_p += d;
    max_p = std::max(max_p, d);
  }
  for (const Voxel& v : sg) {
    const double d = std::sqrt(to_pred[pred.index(v[0], v[1], v[2])]);
    sum_g += d;
    max_g = std::max(max_g, d);
  }
  // Directed sums are combined symmetrically so asd(a, b) == asd(b, a) bit for bit.
  SurfaceDistance r;
  r.mean_mm = (sum_p + sum_g) / static_cast<double>(sp.size() + sg.size());
  r.max_mm = std::max(max_p, max_g);
  return r;
}

CaseMetrics evaluate_case(std::string id, const VolumeGrid& pred, const VolumeGrid& gt) {
  CaseMetrics c;
  c.id = std::move(id);
  c.dice = dice(pred, gt);
  try {
    const SurfaceDistance s = asd(pred, gt);
    c.asd_mean_mm = s.mean_mm;
    c.asd_max_mm = s.max_mm;
  } catch (const UndefinedMetric& e) {
    c.flagged = true;
    c.flag_reason = e.what();
    c.asd_mean_mm = c.asd_max_mm = std::numeric_limits<double>::quiet_NaN();
  }
  return c;
}

Summary summarize(const std::vector<double>& values) {
  VXSEG_REQUIRE(!values.empty(), "cannot summarize an empty list");
  Summary s;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  const std::size_t m = sorted.size() / 2;
  s.median = sorted.size() % 2 == 1 ? sorted[m] : (sorted[m - 1] + sorted[m]) / 2.0;
  return s;
}

MetricsReport cohort_report(const std::vector<CaseMetrics>& cases) {
  VXSEG_REQUIRE(!cases.empty(), "cohort_report needs at least one case");
  MetricsReport r;
  r.cases = cases;
  std::vector<double> asd_mean, asd_max, dice_v;
  for (const CaseMetrics& c : cases) {
    if (c.flagged) continue;
    VXSEG_REQUIRE(c.dice >= 0.0 && c.dice <= 1.0, "case ", c.id, ": dice ", c.dice, " outside [0, 1]");
    VXSEG_REQUIRE(c.asd_mean_mm >= 0.0 && c.asd_max_mm >= 0.0, "case ", c.id, ": negative ASD");
    asd_mean.push_back(c.asd_mean_mm);
    asd_max.push_back(c.asd_max_mm);
    dice_v.push_back(c.dice);
  }
  VXSEG_REQUIRE(!dice_v.empty(), "every case is flagged; no cohort statistics can be formed");
  r.included = dice_v.size();
  r.asd = summarize(asd_mean);
  r.asd_case_max = summarize(asd_max);
  r.dice = summarize(dice_v);
  return r;
}

std::string MetricsReport::to_tsv() const {
  using detail::format_double;
  std::ostringstream os;
  os << "case\tdice\tasd_mean_mm\tasd_max_mm\n";
  for (const CaseMetrics& c : cases)
    if (!c.flagged)
      os << c.id << '\t' << format_double(c.dice) << '\t' << format_double(c.asd_mean_mm) << '\t'
         << format_double(c.asd_max_mm) << '\n';
  os << "# cohort\tcases=" << included << "\tflagged=" << cases.size() - included << '\n';
  auto line = [&](const char* name, const Summary& s) {
    os << "# " << name << "\tmean=" << format_double(s.mean) << "\tstd=" << format_double(s.std)
       << "\tmin=" << format_double(s.min) << "\tmax=" << format_double(s.max)
       << "\tmedian=" << format_double(s.median) << '\n';
  };
  line("asd_mean_mm", asd);
  line("asd_max_mm", asd_case_max);
  line("dice", dice);
  for (const CaseMetrics& c : cases)
    if (c.flagged) os << "# flagged\t" << c.id << "\tdice=" << format_double(c.dice) << '\t' << c.flag_reason << '\n';
  return os.str();
}

std::string MetricsReport::table(const std::string& method) const {
  char buf[512];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%-12s %-35s %s\n", "", "ASD (mm)", "Dice");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-12s %-8s %-8s %-8s %-8s   %-8s %-8s %-8s %-8s\n", "Method", "Mean",
                "Std", "Max", "Median", "Mean", "Std", "Min", "Median");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-12s %-8.3f %-8.3f %-8.3f %-8.3f   %-8.3f %-8.3f %-8.3f %-8.3f\n",
                method.c_str(), asd.mean, asd.std, asd.max, asd.median, dice.mean, dice.std, dice.min,
                dice.median);
  os << buf;
  os << included << " cases";
  if (included != cases.size()) {
    os << "; flagged and excluded:";
    for (const CaseMetrics& c : cases)
      if (c.flagged) os << ' ' << c.id;
  }
  os << '\n';
  return os.str();
}

namespace {

// id -> file for every regular file named <id><suffix>.
std::map<std::string, fs::path> scan(const fs::path& dir, const std::string& suffix) {
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      out.emplace(name.substr(0, name.size() - suffix.size()), entry.path());
  }
  return out;
}

}  // namespace

MetricsReport evaluate_directories(const fs::path& pred_dir, const fs::path& gt_dir, double threshold) {
  for (const fs::path& d : {pred_dir, gt_dir})
    if (!fs::is_directory(d)) throw IoError(detail::concat("not a directory: ", d.string()));
  const auto gt = scan(gt_dir, kLabelSuffix);
  const auto masks = scan(pred_dir, kLabelSuffix);
  const auto probs = scan(pred_dir, kProbSuffix);
  std::set<std::string> pred_ids;
  for (const auto& [id, p] : masks) pred_ids.insert(id);
  for (const auto& [id, p] : probs) pred_ids.insert(id);

  std::vector<std::string> missing, extra;
  for (const auto& [id, p] : gt)
    if (!pred_ids.count(id)) missing.push_back(id);
  for (const auto& id : pred_ids)
    if (!gt.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    std::ostringstream os;
    os << "case ids differ between " << pred_dir.string() << " and " << gt_dir.string();
    if (!missing.empty()) {
      os << "; missing predictions:";
      for (const auto& id : missing) os << ' ' << id;
    }
    if (!extra.empty()) {
      os << "; no ground truth for:";
      for (const auto& id : extra) os << ' ' << id;
    }
    throw ContractViolation(os.str());
  }
  VXSEG_REQUIRE(!gt.empty(), "no *", kLabelSuffix, " files in ", gt_dir.string());

  std::vector<CaseMetrics> cases;
  for (const auto& [id, gt_path] : gt) {
    const VolumeGrid g = read_volume(gt_path);
    const auto m = masks.find(id);
    const VolumeGrid p = m != masks.end() ? read_volume(m->second) : binarize(read_volume(probs.at(id)), threshold);
    cases.push_back(evaluate_case(id, p, g));
  }
  return cohort_report(cases);
}

}  // namespace vxseg
