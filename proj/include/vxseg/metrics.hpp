#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vxseg/volume.hpp"

namespace vxseg {

// voxel >= threshold -> 1, else 0. threshold must lie in (0, 1). The result
// keeps the input's extents, spacing and origin and has kind label.
VolumeGrid binarize(const VolumeGrid& prob_map, double threshold);

// 2|P & G| / (|P| + |G|); 1 when both masks are empty. Masks must be label
// grids with equal extents and spacing.
double dice(const VolumeGrid& pred, const VolumeGrid& gt);

using Voxel = std::array<std::int64_t, 3>;  // (z, y, x)

// Foreground voxels with a background or out-of-grid 6-neighbour, in
// row-major order.
std::vector<Voxel> surface_voxels(const VolumeGrid& mask);

struct SurfaceDistance {
  double mean_mm = 0.0;  // symmetric average over both surfaces
  double max_mm = 0.0;   // symmetric maximum
};

// Average symmetric surface distance with Euclidean distances in physical
// coordinates (index * spacing). Throws UndefinedMetric when either mask is
// empty. Point-to-set distances come from an exact separable Euclidean
// distance transform.
SurfaceDistance asd(const VolumeGrid& pred, const VolumeGrid& gt);

struct CaseMetrics {
  std::string id;
  double dice = 0.0;
  double asd_mean_mm = 0.0;
  double asd_max_mm = 0.0;
  bool flagged = false;  // excluded from cohort statistics
  std::string flag_reason;
};

// Metrics of one case; an undefined ASD flags the case instead of throwing.
CaseMetrics evaluate_case(std::string id, const VolumeGrid& pred, const VolumeGrid& gt);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;  // average of the middle two for even counts
};

Summary summarize(const std::vector<double>& values);

struct MetricsReport {
  std::vector<CaseMetrics> cases;    // every case, in input order
  std::size_t included = 0;          // cases entering the statistics
  Summary asd;                       // over per-case asd_mean_mm
  Summary asd_case_max;              // over per-case asd_max_mm (reported, not in the table)
  Summary dice;

  // case, dice, asd_mean_mm, asd_max_mm rows, then a '#'-prefixed cohort
  // block and the flagged cases.
  std::string to_tsv() const;
  // Comparison table: ASD Mean Std Max Median | Dice Mean Std Min Median.
  std::string table(const std::string& method) const;
};

// Aggregates unflagged cases. Requires at least one case and at least one
// unflagged case.
MetricsReport cohort_report(const std::vector<CaseMetrics>& cases);

inline constexpr const char* kLabelSuffix = "_label.vxsg";
inline constexpr const char* kProbSuffix = "_prob.vxsg";

// Evaluates every case of gt_dir (files <id>_label.vxsg) against pred_dir,
// where each case is <id>_label.vxsg (a mask) or <id>_prob.vxsg (a
// probability map, binarized at `threshold`). The id sets must match
// exactly; otherwise ContractViolation lists the missing and extra ids.
MetricsReport evaluate_directories(const std::filesystem::path& pred_dir,
                                   const std::filesystem::path& gt_dir, double threshold = 0.5);

}  // namespace vxseg
