// Desk-scale trend experiment: SRCNN and EDSR, 2D vs 2.5D, several seeds,
// evaluated on a held-out phantom part. Prints one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "oracles.hpp"
#include "xctsr/checkpoint.hpp"
#include "xctsr/defecteval.hpp"
#include "xctsr/phantom.hpp"
#include "xctsr/slidewin.hpp"
#include "xctsr/trainer.hpp"

using namespace xctsr;

namespace {

struct RunResult {
  double xz_psnr = 0;
  double xy_psnr = 0;
  std::optional<double> small_f1;
  BinnedDetectionReport report;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string f1_str(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << *v;
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale 2D vs 2.5D trend experiment"};
  int steps = 5000, seeds = 3, batch = 4, hr_patch = 64, stride = 32;
  std::string work = "desk_experiment";
  double mask_margin = 2.0;
  app.add_option("--steps", steps, "training steps per run");
  app.add_option("--seeds", seeds, "number of training seeds");
  app.add_option("--batch", batch, "batch size");
  app.add_option("--hr-patch", hr_patch, "high-resolution patch edge");
  app.add_option("--stride", stride, "patch stride");
  app.add_option("--work", work, "working directory");
  app.add_option("--mask-margin", mask_margin, "interior mask margin in voxels");
  CLI11_PARSE(app, argc, argv);

  const auto t_start = std::chrono::steady_clock::now();
  const std::filesystem::path root = work;
  std::filesystem::create_directories(root);

  // Two training parts and one held-out part, 64x256x256, 4x isotropic degradation.
  PhantomTemplate tpl;
  DegradationSpec deg;
  const Manifest manifest = make_dataset(2, 1, tpl, deg, root / "dataset", 2024, true);
  const ManifestEntry* test = manifest.split("test").at(0);
  const Volume hr = load_volume(manifest.root / test->hr);
  const Volume lr = load_volume(manifest.root / test->lr);
  const auto truth = load_defects(manifest.root / test->defects);
  const auto mask = part_interior_mask(test->phantom, mask_margin);
  const auto edges = default_bin_edges(truth);
  const Threshold threshold{ThresholdKind::Midpoint, 0.0};

  auto evaluate = [&](const Volume& sr) {
    RunResult r;
    r.xz_psnr = slice_psnr_stats(sr.grid, hr.grid, SliceAxis::XZ, 1.0).mean_db;
    r.xy_psnr = slice_psnr_stats(sr.grid, hr.grid, SliceAxis::XY, 1.0).mean_db;
    const Segmentation seg = segment_defects(sr, threshold, mask);
    r.report = match_and_score(seg.records, truth, edges);
    if (auto b = smallest_populated_bin(r.report)) r.small_f1 = r.report.per_bin[*b].f1;
    return r;
  };

  const RunResult cubic = evaluate(cubic_baseline(lr, 4));
  std::cout << std::fixed << std::setprecision(3) << "cubic baseline: XZ " << cubic.xz_psnr << " dB, XY "
            << cubic.xy_psnr << " dB, smallest-bin F1 " << f1_str(cubic.small_f1) << std::endl;

  std::ofstream csv(root / "runs.csv");
  csv << "family,mode,seed,xz_psnr_db,xy_psnr_db,small_bin_f1,final_loss,seconds\n";
  csv << "cubic,-,-," << cubic.xz_psnr << ',' << cubic.xy_psnr << ',' << f1_str(cubic.small_f1) << ",,\n";

  std::map<std::pair<Family, Dimensionality>, std::vector<RunResult>> results;
  std::vector<std::pair<std::string, SlicePSNRStats>> psnr_rows;
  std::vector<std::pair<std::string, BinnedDetectionReport>> det_rows;
  for (int seed = 0; seed < seeds; ++seed) {
    for (Family fam : {Family::SRCNN, Family::EDSR}) {
      for (Dimensionality dim : {Dimensionality::D2, Dimensionality::D25}) {
        const auto t0 = std::chrono::steady_clock::now();
        const NetworkSpec spec = NetworkSpec::standard(fam, dim);
        TrainConfig cfg = TrainConfig::defaults_for(fam);
        cfg.steps = steps;
        cfg.batch_size = batch;
        cfg.hr_patch = hr_patch;
        cfg.patch_stride = stride;
        cfg.seed = std::uint64_t(seed);
        cfg.validate_every = 500;
        cfg.max_validation_patches = 32;
        const std::string tag = to_string(fam) + "_" + to_string(dim) + "_s" + std::to_string(seed);
        const TrainResult tr = train(spec, manifest, cfg, root / tag);
        auto net = load_checkpoint(tr.checkpoint).net;
        TileSpec tiles;
        if (fam == Family::SRCNN) {
          tiles.tile_yx = {128, 128};
          tiles.overlap_yx = {12, 12};
        } else {
          tiles.tile_yx = {lr.dims()[1], lr.dims()[2]};
          tiles.overlap_yx = {0, 0};
        }
        const Volume sr = super_resolve(*net, lr, tiles, [](const std::string&) {});
        const RunResult r = evaluate(sr);
        results[{fam, dim}].push_back(r);
        if (seed == 0) {
          psnr_rows.emplace_back(to_string(fam) + " " + to_string(dim),
                                 slice_psnr_stats(sr.grid, hr.grid, SliceAxis::XZ, 1.0));
          det_rows.emplace_back(to_string(fam) + " " + to_string(dim), r.report);
          write_detection_csv(r.report, root / (tag + "_detection.csv"));
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double final_loss = tr.history.empty() ? 0.0 : tr.history.back().total;
        std::cout << tag << ": XZ " << r.xz_psnr << " dB, XY " << r.xy_psnr << " dB, smallest-bin F1 "
                  << f1_str(r.small_f1) << ", loss " << tr.history.front().total << " -> " << final_loss << " ("
                  << std::setprecision(0) << secs << std::setprecision(3) << " s)" << std::endl;
        csv << to_string(fam) << ',' << to_string(dim) << ',' << seed << ',' << r.xz_psnr << ',' << r.xy_psnr << ','
            << f1_str(r.small_f1) << ',' << final_loss << ',' << secs << std::endl;
      }
    }
  }
  psnr_rows.insert(psnr_rows.begin(), {"cubic", slice_psnr_stats(cubic_baseline(lr, 4).grid, hr.grid, SliceAxis::XZ, 1.0)});
  det_rows.insert(det_rows.begin(), {"cubic", cubic.report});
  write_psnr_csv(psnr_rows, root / "psnr_xz_seed0.csv");
  plot_psnr_bars(psnr_rows, root / "psnr_xz_seed0.png");
  plot_detection_curves(det_rows, root / "detection_seed0.png");

  const int need = seeds / 2 + 1;
  bool ok7 = true, ok8 = true;
  std::ostringstream d7, d8;
  d7 << std::fixed << std::setprecision(2);
  for (Family fam : {Family::SRCNN, Family::EDSR}) {
    const auto& a = results[{fam, Dimensionality::D2}];
    const auto& b = results[{fam, Dimensionality::D25}];
    int wins_psnr = 0, wins_f1 = 0;
    std::vector<double> pa, pb;
    for (int s = 0; s < seeds; ++s) {
      pa.push_back(a[s].xz_psnr);
      pb.push_back(b[s].xz_psnr);
      wins_psnr += b[s].xz_psnr > a[s].xz_psnr;
      wins_f1 += b[s].small_f1.value_or(0.0) >= a[s].small_f1.value_or(0.0);
    }
    const double ma = median(pa), mb = median(pb);
    const bool beat = ma >= cubic.xz_psnr + 1.0 && mb >= cubic.xz_psnr + 1.0;
    ok7 = ok7 && wins_psnr >= need && beat;
    ok8 = ok8 && wins_f1 >= need;
    d7 << " " << to_string(fam) << ": 2.5D>2D in " << wins_psnr << "/" << seeds << ", median 2D " << ma
       << " / 2.5D " << mb << " vs cubic " << cubic.xz_psnr << ";";
    d8 << " " << to_string(fam) << ": F1 2.5D>=2D in " << wins_f1 << "/" << seeds << ";";
  }
  const int disagreements = oracle::matching_disagreements(11, 200);
  ok8 = ok8 && disagreements == 0;
  d8 << " matching oracle disagreements " << disagreements << "/200";

  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::cout << (ok7 ? "PASS" : "FAIL") << " criterion 7 (desk-scale XZ PSNR trend):" << d7.str() << std::endl;
  std::cout << (ok8 ? "PASS" : "FAIL") << " criterion 8 (desk-scale smallest-bin F1 trend):" << d8.str() << std::endl;
  std::cout << "total time " << std::setprecision(0) << total << " s" << std::endl;
  return ok7 && ok8 ? 0 : 1;
}
