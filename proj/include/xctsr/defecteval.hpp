#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xctsr/defects.hpp"
#include "xctsr/volume.hpp"

namespace xctsr {

struct PsnrValue {
  double db = 0.0;
  bool infinite = false;  // MSE == 0
};

// 10 log10(range^2 / MSE).
PsnrValue psnr(const Grid& a, const Grid& b, double data_range);
PsnrValue psnr(std::span<const float> a, std::span<const float> b, double data_range);

// XY slices are indexed by z, XZ by y, YZ by x.
enum class SliceAxis { XY, XZ, YZ };
SliceAxis parse_slice_axis(const std::string& s);
std::string to_string(SliceAxis a);

struct SlicePSNRStats {
  SliceAxis axis = SliceAxis::XY;
  std::vector<double> per_slice_db;  // +inf for identical slices
  double mean_db = 0.0;
  double std_db = 0.0;               // population standard deviation
  int infinite_count = 0;
  bool degenerate = false;           // no finite slice
};

SlicePSNRStats slice_psnr_stats(const Grid& vol, const Grid& ref, SliceAxis axis, double data_range);

enum class ThresholdKind { Fixed, Midpoint, Otsu };

struct Threshold {
  ThresholdKind kind = ThresholdKind::Midpoint;
  double value = 0.5;  // Fixed only
};

Threshold parse_threshold(const std::string& s);  // "midpoint", "otsu" or a number
std::string to_string(const Threshold& t);

// Otsu threshold of the masked values over a 256-bin histogram of [0, 1].
double otsu_threshold(const Grid& vol, const std::vector<std::uint8_t>& mask);
// Mean of the dominant histogram modes on each side of the Otsu threshold.
double midpoint_threshold(const Grid& vol, const std::vector<std::uint8_t>& mask);

struct Segmentation {
  std::vector<std::int32_t> labels;  // 0 = not a defect, else record id
  std::vector<DefectRecord> records;
  double threshold = 0.0;
};

// Voxels strictly below the threshold inside the mask, grouped into
// 26-connected components (ids from 1 in scan order).
Segmentation segment_defects(const Volume& vol, const Threshold& threshold,
                             const std::vector<std::uint8_t>& interior_mask);

struct DetectionMatch {
  std::optional<int> truth_id;
  std::optional<int> detected_id;
  std::int64_t overlap_voxels = 0;
};

struct BinStats {
  double lo_um = 0.0;
  double hi_um = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> f1;
};

struct BinnedDetectionReport {
  std::vector<double> bin_edges_um;
  std::vector<BinStats> per_bin;
  BinStats totals;
  std::vector<DetectionMatch> matches;
};

// Fills recall/precision/f1 from the counts.
void finalize_scores(BinStats& b);

// Greedy one-to-one matching by descending overlap (ties broken by truth id,
// then detection id). Diameters outside the edges fall into the end bins.
BinnedDetectionReport match_and_score(const std::vector<DefectRecord>& detected,
                                      const std::vector<DefectRecord>& truth,
                                      const std::vector<double>& bin_edges_um);

// n equal-width bins over [lo, hi].
std::vector<double> equal_width_edges(double lo_um, double hi_um, int n = 6);
// Six equal-width bins spanning the truth diameters.
std::vector<double> default_bin_edges(const std::vector<DefectRecord>& truth);

// Index of the first bin with at least one truth defect, if any.
std::optional<std::size_t> smallest_populated_bin(const BinnedDetectionReport& r);

struct EvaluationSettings {
  Threshold threshold{ThresholdKind::Midpoint, 0.5};
  double mask_margin_vox = 2.0;        // interior mask erosion from the part surface
  std::vector<double> bin_edges_um;    // empty: default_bin_edges(truth)
  std::vector<SliceAxis> axes{SliceAxis::XZ, SliceAxis::XY};
  double data_range = 1.0;
};

struct PartEvaluation {
  std::vector<SlicePSNRStats> psnr;  // one entry per settings axis
  BinnedDetectionReport detection;
  double threshold = 0.0;
  std::size_t detected_count = 0;
};

// PSNR statistics against `hr` plus segmentation and size-binned matching
// against `truth` inside `interior_mask`.
PartEvaluation evaluate_part(const Volume& sr, const Volume& hr, const std::vector<DefectRecord>& truth,
                             const std::vector<std::uint8_t>& interior_mask, const EvaluationSettings& settings);

void write_detection_csv(const BinnedDetectionReport& r, const std::filesystem::path& path);
void write_psnr_csv(const std::vector<std::pair<std::string, SlicePSNRStats>>& rows,
                    const std::filesystem::path& path);

// Bar chart of mean PSNR with +-1 std error bars, one bar per entry.
void plot_psnr_bars(const std::vector<std::pair<std::string, SlicePSNRStats>>& rows,
                    const std::filesystem::path& png);
// Recall, precision and F1 against bin centre, one panel per report.
void plot_detection_curves(const std::vector<std::pair<std::string, BinnedDetectionReport>>& reports,
                           const std::filesystem::path& png);

}  // namespace xctsr
