#include "xctsr/defecteval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "xctsr/error.hpp"

namespace xctsr {

PsnrValue psnr(std::span<const float> a, std::span<const float> b, double data_range) {
  require(a.size() == b.size(), "psnr: size mismatch");
  require(!a.empty(), "psnr: empty input");
  require(data_range > 0, "psnr: data_range must be > 0");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    mse += d * d;
  }
  mse /= double(a.size());
  if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {10.0 * std::log10(data_range * data_range / mse), false};
}

PsnrValue psnr(const Grid& a, const Grid& b, double data_range) {
  require(a.dims == b.dims, "psnr: shape mismatch");
  return psnr(std::span<const float>(a.data), std::span<const float>(b.data), data_range);
}

SliceAxis parse_slice_axis(const std::string& s) {
  if (s == "xy" || s == "XY") return SliceAxis::XY;
  if (s == "xz" || s == "XZ") return SliceAxis::XZ;
  if (s == "yz" || s == "YZ") return SliceAxis::YZ;
  throw ValidationError("unknown slice axis '" + s + "' (expected xy, xz, yz)");
}

std::string to_string(SliceAxis a) {
  switch (a) {
    case SliceAxis::XY: return "xy";
    case SliceAxis::XZ: return "xz";
    case SliceAxis::YZ: return "yz";
  }
  return "?";
}

namespace {

std::vector<float> extract_slice(const Grid& g, SliceAxis axis, int i) {
  const auto& d = g.dims;
  std::vector<float> out;
  switch (axis) {
    case SliceAxis::XY:
      out.assign(g.slice(i), g.slice(i) + std::size_t(d[1]) * d[2]);
      break;
    case SliceAxis::XZ:
      out.reserve(std::size_t(d[0]) * d[2]);
      for (int z = 0; z < d[0]; ++z)
        for (int x = 0; x < d[2]; ++x) out.push_back(g.at(z, i, x));
      break;
    case SliceAxis::YZ:
      out.reserve(std::size_t(d[0]) * d[1]);
      for (int z = 0; z < d[0]; ++z)
        for (int y = 0; y < d[1]; ++y) out.push_back(g.at(z, y, i));
      break;
  }
  return out;
}

}  // namespace

SlicePSNRStats slice_psnr_stats(const Grid& vol, const Grid& ref, SliceAxis axis, double data_range) {
  require(vol.dims == ref.dims, "slice_psnr_stats: shape mismatch");
  SlicePSNRStats s;
  s.axis = axis;
  const int n = axis == SliceAxis::XY ? vol.dims[0] : axis == SliceAxis::XZ ? vol.dims[1] : vol.dims[2];
  std::vector<double> finite;
  for (int i = 0; i < n; ++i) {
    const auto a = extract_slice(vol, axis, i);
    const auto b = extract_slice(ref, axis, i);
    const PsnrValue p = psnr(a, b, data_range);
    s.per_slice_db.push_back(p.db);
    if (p.infinite) {
      ++s.infinite_count;
    } else {
      finite.push_back(p.db);
    }
  }
  if (finite.empty()) {
    s.degenerate = true;
    s.mean_db = std::numeric_limits<double>::quiet_NaN();
    s.std_db = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0;
  for (double v : finite) sum += v;
  s.mean_db = sum / double(finite.size());
  double var = 0;
  for (double v : finite) var += (v - s.mean_db) * (v - s.mean_db);
  s.std_db = std::sqrt(var / double(finite.size()));
  return s;
}

// ---------------------------------------------------------------- thresholds

Threshold parse_threshold(const std::string& s) {
  if (s == "midpoint") return {ThresholdKind::Midpoint, 0.0};
  if (s == "otsu") return {ThresholdKind::Otsu, 0.0};
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return {ThresholdKind::Fixed, v};
  } catch (const std::exception&) {
  }
  throw ValidationError("unknown threshold '" + s + "' (expected midpoint, otsu or a number)");
}

std::string to_string(const Threshold& t) {
  switch (t.kind) {
    case ThresholdKind::Midpoint: return "midpoint";
    case ThresholdKind::Otsu: return "otsu";
    case ThresholdKind::Fixed: {
      std::ostringstream os;
      os << t.value;
      return os.str();
    }
  }
  return "?";
}

namespace {

constexpr int kBins = 256;

std::vector<double> masked_histogram(const Grid& vol, const std::vector<std::uint8_t>& mask) {
  require(mask.size() == vol.size(), "interior mask size does not match the volume");
  std::vector<double> h(kBins, 0.0);
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (!mask[i]) continue;
    const int b = std::clamp(int(double(vol.data[i]) * kBins), 0, kBins - 1);
    h[b] += 1.0;
  }
  return h;
}

int otsu_bin(const std::vector<double>& h) {
  double total = 0, sum = 0;
  for (int i = 0; i < kBins; ++i) {
    total += h[i];
    sum += i * h[i];
  }
  require(total > 0, "empty interior mask");
  double w0 = 0, sum0 = 0, best = -1;
  int best_bin = 0;
  for (int t = 0; t < kBins - 1; ++t) {
    w0 += h[t];
    sum0 += t * h[t];
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / w0, m1 = (sum - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_bin = t;
    }
  }
  return best_bin;
}

}  // namespace

double otsu_threshold(const Grid& vol, const std::vector<std::uint8_t>& mask) {
  return double(otsu_bin(masked_histogram(vol, mask)) + 1) / kBins;
}

double midpoint_threshold(const Grid& vol, const std::vector<std::uint8_t>& mask) {
  const auto h = masked_histogram(vol, mask);
  const int t = otsu_bin(h);
  const auto lo = std::max_element(h.begin(), h.begin() + t + 1) - h.begin();
  const auto hi = std::max_element(h.begin() + t + 1, h.end()) - h.begin();
  return (double(lo) + 0.5 + double(hi) + 0.5) / (2.0 * kBins);
}

Segmentation segment_defects(const Volume& vol, const Threshold& threshold,
                             const std::vector<std::uint8_t>& mask) {
  const Grid& g = vol.grid;
  require(mask.size() == g.size(), "interior mask size does not match the volume");
  require(std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }),
          "interior mask is empty");
  Segmentation seg;
  switch (threshold.kind) {
    case ThresholdKind::Fixed: seg.threshold = threshold.value; break;
    case ThresholdKind::Midpoint: seg.threshold = midpoint_threshold(g, mask); break;
    case ThresholdKind::Otsu: seg.threshold = otsu_threshold(g, mask); break;
  }
  const auto& d = g.dims;
  const std::size_t n = g.size();
  seg.labels.assign(n, 0);
  auto is_defect = [&](std::size_t i) { return mask[i] && double(g.data[i]) < seg.threshold; };
  const double voxel_volume = vol.voxel_size.volume();
  std::vector<std::int64_t> stack;
  int next = 1;
  for (std::size_t start = 0; start < n; ++start) {
    if (seg.labels[start] || !is_defect(start)) continue;
    std::vector<std::int64_t> comp;
    seg.labels[start] = next;
    stack.assign(1, std::int64_t(start));
    while (!stack.empty()) {
      const std::int64_t i = stack.back();
      stack.pop_back();
      comp.push_back(i);
      const int z = int(i / (std::int64_t(d[1]) * d[2]));
      const int y = int((i / d[2]) % d[1]);
      const int x = int(i % d[2]);
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int zz = z + dz, yy = y + dy, xx = x + dx;
            if (zz < 0 || yy < 0 || xx < 0 || zz >= d[0] || yy >= d[1] || xx >= d[2]) continue;
            const std::size_t j = g.index(zz, yy, xx);
            if (seg.labels[j] || !is_defect(j)) continue;
            seg.labels[j] = next;
            stack.push_back(std::int64_t(j));
          }
        }
      }
    }
    seg.records.push_back(make_record(next, std::move(comp), d, voxel_volume));
    ++next;
  }
  return seg;
}

// ---------------------------------------------------------------- matching

void finalize_scores(BinStats& b) {
  b.recall.reset();
  b.precision.reset();
  b.f1.reset();
  if (b.tp + b.fn > 0) b.recall = double(b.tp) / double(b.tp + b.fn);
  if (b.tp + b.fp > 0) b.precision = double(b.tp) / double(b.tp + b.fp);
  if (b.recall && b.precision) {
    const double s = *b.recall + *b.precision;
    b.f1 = s > 0 ? 2.0 * *b.recall * *b.precision / s : 0.0;
  } else if ((b.recall && *b.recall == 0.0) || (b.precision && *b.precision == 0.0)) {
    b.f1 = 0.0;
  }
}

namespace {

std::size_t bin_of(double d, const std::vector<double>& edges) {
  const std::size_t nb = edges.size() - 1;
  for (std::size_t i = 0; i + 1 < nb; ++i) {
    if (d < edges[i + 1]) return i;
  }
  return nb - 1;
}

}  // namespace

BinnedDetectionReport match_and_score(const std::vector<DefectRecord>& detected,
                                      const std::vector<DefectRecord>& truth,
                                      const std::vector<double>& edges) {
  require(edges.size() >= 2, "at least one diameter bin is required");
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    require(edges[i] < edges[i + 1], "bin edges must be strictly increasing");
  }
  std::unordered_map<std::int64_t, std::size_t> owner;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    for (std::int64_t v : truth[t].voxel_set) {
      if (!owner.emplace(v, t).second) {
        throw ValidationError("truth defects " + std::to_string(truth[owner[v]].id) + " and " +
                              std::to_string(truth[t].id) + " overlap at voxel " + std::to_string(v));
      }
    }
  }
  struct Candidate {
    std::int64_t overlap;
    std::size_t t, d;
  };
  std::vector<Candidate> cands;
  for (std::size_t di = 0; di < detected.size(); ++di) {
    std::map<std::size_t, std::int64_t> counts;
    for (std::int64_t v : detected[di].voxel_set) {
      auto it = owner.find(v);
      if (it != owner.end()) ++counts[it->second];
    }
    for (const auto& [t, c] : counts) cands.push_back({c, t, di});
  }
  std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (truth[a.t].id != truth[b.t].id) return truth[a.t].id < truth[b.t].id;
    return detected[a.d].id < detected[b.d].id;
  });

  BinnedDetectionReport r;
  r.bin_edges_um = edges;
  r.per_bin.resize(edges.size() - 1);
  for (std::size_t i = 0; i < r.per_bin.size(); ++i) {
    r.per_bin[i].lo_um = edges[i];
    r.per_bin[i].hi_um = edges[i + 1];
  }
  r.totals.lo_um = edges.front();
  r.totals.hi_um = edges.back();

  std::vector<bool> t_used(truth.size(), false), d_used(detected.size(), false);
  for (const Candidate& c : cands) {
    if (t_used[c.t] || d_used[c.d]) continue;
    t_used[c.t] = d_used[c.d] = true;
    r.matches.push_back({truth[c.t].id, detected[c.d].id, c.overlap});
    ++r.per_bin[bin_of(truth[c.t].effective_diameter_um, edges)].tp;
    ++r.totals.tp;
  }
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (t_used[t]) continue;
    r.matches.push_back({truth[t].id, std::nullopt, 0});
    ++r.per_bin[bin_of(truth[t].effective_diameter_um, edges)].fn;
    ++r.totals.fn;
  }
  for (std::size_t d = 0; d < detected.size(); ++d) {
    if (d_used[d]) continue;
    r.matches.push_back({std::nullopt, detected[d].id, 0});
    ++r.per_bin[bin_of(detected[d].effective_diameter_um, edges)].fp;
    ++r.totals.fp;
  }
  for (auto& b : r.per_bin) finalize_scores(b);
  finalize_scores(r.totals);
  return r;
}

std::vector<double> equal_width_edges(double lo, double hi, int n) {
  require(n >= 1, "need at least one bin");
  require(hi > lo, "bin range must be non-empty");
  std::vector<double> e(std::size_t(n) + 1);
  for (int i = 0; i <= n; ++i) e[i] = lo + (hi - lo) * double(i) / double(n);
  return e;
}

std::vector<double> default_bin_edges(const std::vector<DefectRecord>& truth) {
  require(!truth.empty(), "default bins need at least one truth defect");
  double lo = truth.front().effective_diameter_um, hi = lo;
  for (const auto& t : truth) {
    lo = std::min(lo, t.effective_diameter_um);
    hi = std::max(hi, t.effective_diameter_um);
  }
  if (hi <= lo) hi = lo + 1.0;
  return equal_width_edges(lo, hi, 6);
}

std::optional<std::size_t> smallest_populated_bin(const BinnedDetectionReport& r) {
  for (std::size_t i = 0; i < r.per_bin.size(); ++i) {
    if (r.per_bin[i].tp + r.per_bin[i].fn > 0) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- CSV

namespace {

std::string opt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(9) << *v;
  return os.str();
}

}  // namespace

PartEvaluation evaluate_part(const Volume& sr, const Volume& hr, const std::vector<DefectRecord>& truth,
                             const std::vector<std::uint8_t>& interior_mask, const EvaluationSettings& settings) {
  require(sr.dims() == hr.dims(), "super-resolved volume does not match the reference grid");
  PartEvaluation out;
  for (SliceAxis a : settings.axes) out.psnr.push_back(slice_psnr_stats(sr.grid, hr.grid, a, settings.data_range));
  const Segmentation seg = segment_defects(sr, settings.threshold, interior_mask);
  out.threshold = seg.threshold;
  out.detected_count = seg.records.size();
  const auto edges = settings.bin_edges_um.empty() ? default_bin_edges(truth) : settings.bin_edges_um;
  out.detection = match_and_score(seg.records, truth, edges);
  return out;
}

void write_detection_csv(const BinnedDetectionReport& r, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os << "bin,lo_um,hi_um,tp,fp,fn,recall,precision,f1\n" << std::setprecision(9);
  auto row = [&](const std::string& name, const BinStats& b) {
    os << name << ',' << b.lo_um << ',' << b.hi_um << ',' << b.tp << ',' << b.fp << ',' << b.fn << ','
       << opt(b.recall) << ',' << opt(b.precision) << ',' << opt(b.f1) << '\n';
  };
  for (std::size_t i = 0; i < r.per_bin.size(); ++i) row(std::to_string(i), r.per_bin[i]);
  row("all", r.totals);
}

void write_psnr_csv(const std::vector<std::pair<std::string, SlicePSNRStats>>& rows,
                    const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os << "label,axis,slices,mean_db,std_db,infinite_slices,degenerate\n" << std::setprecision(9);
  for (const auto& [label, s] : rows) {
    os << label << ',' << to_string(s.axis) << ',' << s.per_slice_db.size() << ',' << s.mean_db << ','
       << s.std_db << ',' << s.infinite_count << ',' << (s.degenerate ? 1 : 0) << '\n';
  }
}

}  // namespace xctsr
