// xctsr: phantoms, degradation, datasets, training, inference, evaluation and
// parameter accounting from one experiment config.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <Eigen/Core>

#include "experiment.hpp"
#include "xctsr/checkpoint.hpp"
#include "xctsr/error.hpp"

using namespace xctsr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool overwrite = false;
};

void add_common(CLI::App* sub, Common& c, bool with_out = true) {
  sub->add_option("--config", c.config, "experiment config (JSON)");
  if (with_out) sub->add_option("--out", c.out, "output directory (default: $XCTSR_OUT/<subcommand>)");
  sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  sub->add_flag("--overwrite", c.overwrite, "replace an existing output directory");
}

cli::ExperimentConfig load_config(const Common& c) {
  cli::ExperimentConfig cfg = c.config.empty() ? cli::experiment_from_json(json::object())
                                               : cli::load_experiment(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  return cfg;
}

fs::path output_dir(const Common& c, const cli::ExperimentConfig& cfg, const std::string& sub) {
  if (!c.out.empty()) return c.out;
  if (!cfg.output_dir.empty()) return cfg.output_dir / sub;
  const char* env = std::getenv("XCTSR_OUT");
  return fs::path(env && *env ? env : "xctsr_out") / sub;
}

// Creates the output directory, refusing to reuse one from an earlier run
// unless --overwrite is given.
fs::path prepare_output(const Common& c, const cli::ExperimentConfig& cfg, const std::string& sub) {
  const fs::path out = output_dir(c, cfg, sub);
  if (fs::exists(out / "run_record.json") && !c.overwrite) {
    throw ValidationError("output directory " + out.string() + " holds an earlier run (pass --overwrite)");
  }
  fs::create_directories(out);
  return out;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw RuntimeFailure("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed " + path.string() + ": " + e.what());
  }
}

void write_record(const fs::path& out, const std::string& sub, const std::vector<std::string>& argv,
                  const cli::ExperimentConfig& cfg, const json& inputs) {
  const json canonical = cli::to_json(cfg);
  json seeds = {{"master", cfg.seed},
                {"phantom", derive_seed(cfg.seed, "phantom")},
                {"degrade", cfg.degradation.seed},
                {"train", cfg.train.seed}};
  json r = {{"tool", "xctsr"},
            {"version", cli::kVersion},
            {"subcommand", sub},
            {"argv", argv},
            {"config", canonical},
            {"config_hash", cli::fnv1a_hex(canonical.dump())},
            {"seeds", seeds},
            {"inputs", inputs},
            {"versions",
             {{"compiler", __VERSION__},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
  write_json(r, out / "run_record.json");
}

json checksum_of(const fs::path& p) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << file_checksum(p);
  return {{"path", p.string()}, {"fnv1a", os.str()}};
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : "n/a"; }

// ---------------------------------------------------------------- params

void print_params(Family fam, Dimensionality dim, int scale, int in_slices, int patch) {
  NetworkSpec spec = NetworkSpec::standard(fam, dim);
  spec.scale = scale;
  if (dim == Dimensionality::D25) spec.in_slices = in_slices;
  spec.validate();
  auto net = build_network(spec);
  const ParamReport r = count_parameters(*net);
  std::cout << "network " << to_string(fam) << " " << to_string(dim) << " (scale " << spec.scale;
  if (dim == Dimensionality::D25) std::cout << ", " << spec.in_slices << " slices";
  std::cout << ")\n";
  std::size_t width = 5;
  for (const auto& [name, n] : r.per_layer) width = std::max(width, name.size());
  for (const auto& [name, n] : r.per_layer) std::cout << "  " << std::left << std::setw(int(width)) << name << std::right << " " << n << "\n";
  std::cout << "total " << r.total << "\n";
  std::cout << "first layer m=" << r.kernel_m << " n=" << r.kernel_n << " k=" << r.first_layer_features_k << "\n";
  NetworkSpec s2 = spec;
  s2.dimensionality = Dimensionality::D2;
  s2.in_slices = 1;
  NetworkSpec s25 = spec;
  s25.dimensionality = Dimensionality::D25;
  s25.in_slices = dim == Dimensionality::D25 ? spec.in_slices : 7;
  std::cout << "delta 2.5D-2D (" << s25.in_slices - 1 << "mnk) " << first_layer_parameter_delta(s2, s25) << "\n";
  if (fam == Family::ESRGAN) {
    auto d = build_discriminator(spec);
    std::cout << "discriminator (not included above) " << count_parameters(*d).total << "\n";
  }
  if (patch > 0) {
    const int hw = spec.pre_upsampled() ? patch : patch / spec.scale;
    require(hw >= 1, "--patch is smaller than the scale factor");
    const int depth = dim == Dimensionality::D3 ? hw : 1;
    const MemoryEstimate m = estimate_activation_memory(spec, spec.input_shape(1, hw, hw, depth), 1);
    std::cout << "activation memory for a " << patch << "-voxel output patch (batch 1): total "
              << fmt(double(m.total_bytes()) / (1 << 20), 2) << " MiB, peak activations "
              << fmt(double(m.peak_activation_bytes) / (1 << 20), 2) << " MiB\n";
  }
}

// ---------------------------------------------------------------- eval

struct EvalRun {
  std::string label;
  json network;  // spec, or the string "cubic"
  PartEvaluation eval;
};

json run_to_json(const EvalRun& r, const EvaluationSettings& s) {
  json psnr = json::object();
  for (std::size_t i = 0; i < s.axes.size(); ++i) {
    const auto& st = r.eval.psnr[i];
    psnr[to_string(st.axis)] = {{"mean_db", st.mean_db},
                                {"std_db", st.std_db},
                                {"infinite_slices", st.infinite_count},
                                {"degenerate", st.degenerate}};
  }
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  const auto& t = r.eval.detection.totals;
  json det = {{"threshold", r.eval.threshold},
              {"detected", r.eval.detected_count},
              {"totals",
               {{"tp", t.tp}, {"fp", t.fp}, {"fn", t.fn}, {"recall", opt(t.recall)}, {"precision", opt(t.precision)},
                {"f1", opt(t.f1)}}}};
  const auto b = smallest_populated_bin(r.eval.detection);
  det["smallest_bin_f1"] = b ? opt(r.eval.detection.per_bin[*b].f1) : json(nullptr);
  return {{"label", r.label}, {"network", r.network}, {"psnr", psnr}, {"detection", det}};
}

std::string label_for(const NetworkSpec& s, std::map<std::string, int>& used) {
  std::string base = to_string(s.family) + "_" + to_string(s.dimensionality);
  const int n = used[base]++;
  return n == 0 ? base : base + "_" + std::to_string(n + 1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xctsr: 2D / 2.5D / 3D super-resolution for CT volumes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kVersion);
  const std::vector<std::string> args(argv, argv + argc);

  Common c;

  auto* phantom_cmd = app.add_subcommand("phantom", "generate one random phantom (HR volume + defect file)");
  add_common(phantom_cmd, c);

  auto* degrade_cmd = app.add_subcommand("degrade", "degrade a high-resolution volume");
  add_common(degrade_cmd, c);
  std::string degrade_input;
  degrade_cmd->add_option("--input", degrade_input, "high-resolution volume (.json header or stem)")->required();

  auto* dataset_cmd = app.add_subcommand("dataset", "generate paired HR/LR training and test parts");
  add_common(dataset_cmd, c);

  auto* trainc = app.add_subcommand("train", "train the configured network on a dataset");
  add_common(trainc, c);
  std::string manifest_dir;
  trainc->add_option("--manifest", manifest_dir, "dataset directory or manifest.json")->required();

  auto* infer_cmd = app.add_subcommand("infer", "super-resolve a low-resolution volume");
  add_common(infer_cmd, c);
  std::string ckpt, infer_input;
  infer_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  infer_cmd->add_option("--input", infer_input, "low-resolution volume")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints and the cubic baseline on the test parts");
  add_common(eval_cmd, c);
  std::string eval_manifest;
  std::vector<std::string> eval_ckpts;
  bool no_cubic = false;
  eval_cmd->add_option("--manifest", eval_manifest, "dataset directory or manifest.json")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpts, "checkpoint to evaluate (repeatable)");
  eval_cmd->add_flag("--no-cubic", no_cubic, "skip the cubic-interpolation baseline");

  auto* params_cmd = app.add_subcommand("params", "parameter counts, 2.5D delta and memory estimate");
  add_common(params_cmd, c);
  std::string fam_s = "srcnn", mode_s = "2d";
  int scale = 4, in_slices = 7, patch = 0;
  params_cmd->add_option("--family", fam_s, "srcnn, edsr or esrgan")->required();
  params_cmd->add_option("--mode", mode_s, "2d, 2.5d or 3d")->required();
  params_cmd->add_option("--scale", scale, "in-plane scale factor");
  params_cmd->add_option("--in-slices", in_slices, "2.5D window size (odd)");
  params_cmd->add_option("--patch", patch, "also estimate activation memory for this output patch edge");

  auto* reportc = app.add_subcommand("report", "collate eval outputs into a comparison table");
  add_common(reportc, c);
  std::vector<std::string> report_evals;
  reportc->add_option("--eval", report_evals, "eval output directory (repeatable)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (params_cmd->parsed()) {
      print_params(parse_family(fam_s), parse_dimensionality(mode_s), scale, in_slices, patch);
      if (!c.out.empty()) {
        const auto cfg = load_config(c);
        const fs::path out = prepare_output(c, cfg, "params");
        write_record(out, "params", args, cfg,
                     {{"family", fam_s}, {"mode", mode_s}, {"scale", scale}, {"in_slices", in_slices}});
      }
      return 0;
    }

    const cli::ExperimentConfig cfg = load_config(c);

    if (phantom_cmd->parsed()) {
      const fs::path out = prepare_output(c, cfg, "phantom");
      PhantomSpec spec = random_phantom(cfg.phantom, derive_seed(cfg.seed, "phantom"));
      auto [hr, records] = generate_phantom(spec);
      save_volume(hr, out / "hr");
      save_defects(records, hr.dims(), out / "defects.json");
      write_json(to_json(spec), out / "phantom.json");
      write_record(out, "phantom", args, cfg, json::object());
      std::cout << "phantom " << hr.dims()[0] << "x" << hr.dims()[1] << "x" << hr.dims()[2] << " with "
                << records.size() << " pores -> " << out.string() << "\n";
    } else if (degrade_cmd->parsed()) {
      const fs::path out = prepare_output(c, cfg, "degrade");
      const Volume hr = load_volume(degrade_input);
      const Volume lr = degrade(hr, cfg.degradation);
      save_volume(lr, out / "lr");
      write_record(out, "degrade", args, cfg, {{"input", degrade_input}});
      std::cout << "degraded volume " << lr.dims()[0] << "x" << lr.dims()[1] << "x" << lr.dims()[2] << " -> "
                << out.string() << "\n";
    } else if (dataset_cmd->parsed()) {
      const fs::path out = prepare_output(c, cfg, "dataset");
      const Manifest m = make_dataset(cfg.dataset.train_parts, cfg.dataset.test_parts, cfg.phantom, cfg.degradation,
                                      out, cfg.seed, c.overwrite || !fs::exists(manifest_path(out)));
      json files = json::array();
      for (const auto& e : m.entries) {
        for (const fs::path& v : {e.hr, e.lr}) {
          files.push_back(checksum_of(out / v));
          files.push_back(checksum_of(raw_path(out / v.stem())));
        }
        files.push_back(checksum_of(out / e.defects));
      }
      write_record(out, "dataset", args, cfg, {{"files", files}});
      std::cout << "dataset with " << m.entries.size() << " parts -> " << out.string() << "\n";
    } else if (trainc->parsed()) {
      const fs::path out = prepare_output(c, cfg, "train");
      const Manifest m = load_manifest(manifest_dir);
      write_record(out, "train", args, cfg, {{"manifest", manifest_dir}});
      const TrainResult r = train(cfg.network, m, cfg.train, out);
      std::cout << "trained " << to_string(cfg.network.family) << " " << to_string(cfg.network.dimensionality)
                << " for " << cfg.train.steps << " steps on " << r.train_windows << " windows ("
                << r.validation_windows << " held back)";
      if (!r.history.empty()) std::cout << ", final loss " << fmt(r.history.back().total, 6);
      std::cout << "\ncheckpoint " << r.checkpoint.string() << "\n";
    } else if (infer_cmd->parsed()) {
      const fs::path out = prepare_output(c, cfg, "infer");
      auto loaded = load_checkpoint(ckpt);
      const Volume lr = load_volume(infer_input);
      const Volume sr = super_resolve(*loaded.net, lr, cfg.tiles);
      save_volume(sr, out / "sr");
      write_record(out, "infer", args, cfg, {{"checkpoint", checksum_of(ckpt)}, {"input", infer_input}});
      std::cout << "super-resolved " << sr.dims()[0] << "x" << sr.dims()[1] << "x" << sr.dims()[2] << " -> "
                << (out / "sr").string() << "\n";
    } else if (eval_cmd->parsed()) {
      const fs::path out = prepare_output(c, cfg, "eval");
      const Manifest m = load_manifest(eval_manifest);
      const auto tests = m.split("test");
      require(!tests.empty(), "manifest has no test parts");
      std::vector<std::pair<std::string, std::unique_ptr<Network>>> nets;
      std::map<std::string, int> used;
      for (const auto& p : eval_ckpts) {
        auto loaded = load_checkpoint(p);
        const std::string label = label_for(loaded.net->spec(), used);
        nets.emplace_back(label, std::move(loaded.net));
      }
      require(!nets.empty() || !no_cubic, "nothing to evaluate: give --checkpoint or drop --no-cubic");
      json parts = json::array();
      std::vector<std::pair<std::string, SlicePSNRStats>> psnr_rows;
      std::vector<std::pair<std::string, BinnedDetectionReport>> det_rows;
      for (const ManifestEntry* e : tests) {
        const Volume hr = load_volume(m.root / e->hr);
        const Volume lr = load_volume(m.root / e->lr);
        const auto truth = load_defects(m.root / e->defects);
        const auto mask = part_interior_mask(e->phantom, cfg.evaluation.mask_margin_vox);
        std::vector<EvalRun> runs;
        if (!no_cubic) {
          const int s = nets.empty() ? 4 : nets.front().second->spec().scale;
          runs.push_back({"cubic", "cubic", evaluate_part(cubic_baseline(lr, s), hr, truth, mask, cfg.evaluation)});
        }
        for (auto& [label, net] : nets) {
          const Volume sr = super_resolve(*net, lr, cfg.tiles);
          runs.push_back({label, to_json(net->spec()), evaluate_part(sr, hr, truth, mask, cfg.evaluation)});
        }
        json jr = json::array();
        const std::string part = "part" + std::to_string(e->id);
        for (const auto& r : runs) {
          jr.push_back(run_to_json(r, cfg.evaluation));
          write_detection_csv(r.eval.detection, out / ("detection_" + r.label + "_" + part + ".csv"));
          psnr_rows.emplace_back(r.label + " " + part, r.eval.psnr.front());
          det_rows.emplace_back(r.label + " " + part, r.eval.detection);
          std::cout << part << " " << std::left << std::setw(14) << r.label << std::right;
          for (const auto& st : r.eval.psnr) std::cout << " " << to_string(st.axis) << " " << fmt(st.mean_db) << " dB";
          const auto b = smallest_populated_bin(r.eval.detection);
          std::cout << "  F1 " << opt_fmt(r.eval.detection.totals.f1) << " (smallest bin "
                    << (b ? opt_fmt(r.eval.detection.per_bin[*b].f1) : std::string("n/a")) << ")\n";
        }
        parts.push_back({{"id", e->id}, {"runs", jr}});
      }
      const std::string axis = to_string(cfg.evaluation.axes.front());
      write_psnr_csv(psnr_rows, out / ("psnr_" + axis + ".csv"));
      plot_psnr_bars(psnr_rows, out / ("psnr_" + axis + ".png"));
      plot_detection_curves(det_rows, out / "detection.png");
      write_json({{"parts", parts}, {"evaluation", cli::to_json(cfg.evaluation)}}, out / "metrics.json");
      json inputs = {{"manifest", eval_manifest}, {"checkpoints", json::array()}};
      for (const auto& p : eval_ckpts) inputs["checkpoints"].push_back(checksum_of(p));
      write_record(out, "eval", args, cfg, inputs);
    } else if (reportc->parsed()) {
      const fs::path out = prepare_output(c, cfg, "report");
      struct Row {
        json network;
        int n = 0;
        std::map<std::string, double> psnr;
        double f1_sum = 0;
        int f1_n = 0;
      };
      std::vector<std::string> order;
      std::map<std::string, Row> rows;
      std::vector<std::string> axes;
      for (const auto& dir : report_evals) {
        const json metrics = read_json(fs::path(dir) / "metrics.json");
        for (const auto& part : metrics.at("parts")) {
          for (const auto& run : part.at("runs")) {
            const std::string label = run.at("label");
            if (!rows.count(label)) order.push_back(label);
            Row& r = rows[label];
            r.network = run.at("network");
            ++r.n;
            for (const auto& [ax, st] : run.at("psnr").items()) {
              if (std::find(axes.begin(), axes.end(), ax) == axes.end()) axes.push_back(ax);
              r.psnr[ax] += st.at("mean_db").get<double>();
            }
            const auto& f1 = run.at("detection").at("smallest_bin_f1");
            if (!f1.is_null()) {
              r.f1_sum += f1.get<double>();
              ++r.f1_n;
            }
          }
        }
      }
      std::ofstream csv(out / "report.csv");
      std::ofstream md(out / "report.md");
      csv << "label,family,mode,parameters,delta_vs_2d,activation_mib_128";
      md << "| label | family | mode | parameters | delta vs 2D | activation MiB (128 patch)";
      for (const auto& ax : axes) {
        csv << ",psnr_" << ax << "_db";
        md << " | " << ax << " PSNR (dB)";
      }
      csv << ",smallest_bin_f1\n";
      md << " | smallest-bin F1 |\n|---|---|---|---|---|---";
      for (std::size_t i = 0; i < axes.size(); ++i) md << "|---";
      md << "|---|\n";
      for (const auto& label : order) {
        const Row& r = rows[label];
        std::string fam = "-", mode = "-", params_s = "-", delta_s = "-", mem_s = "-";
        if (r.network.is_object()) {
          const NetworkSpec spec = network_spec_from_json(r.network);
          fam = to_string(spec.family);
          mode = to_string(spec.dimensionality);
          auto net = build_network(spec);
          params_s = std::to_string(count_parameters(*net).total);
          NetworkSpec s2 = spec;
          s2.dimensionality = Dimensionality::D2;
          s2.in_slices = 1;
          auto net2 = build_network(s2);
          delta_s = std::to_string(count_parameters(*net).total - count_parameters(*net2).total);
          const int hw = spec.pre_upsampled() ? 128 : 128 / spec.scale;
          const auto mem = estimate_activation_memory(
              spec, spec.input_shape(1, hw, hw, spec.dimensionality == Dimensionality::D3 ? hw : 1), 1);
          mem_s = fmt(double(mem.total_bytes()) / (1 << 20), 2);
        }
        csv << label << ',' << fam << ',' << mode << ',' << params_s << ',' << delta_s << ',' << mem_s;
        md << "| " << label << " | " << fam << " | " << mode << " | " << params_s << " | " << delta_s << " | " << mem_s;
        for (const auto& ax : axes) {
          const auto it = r.psnr.find(ax);
          const std::string v = it == r.psnr.end() ? "-" : fmt(it->second / r.n);
          csv << ',' << v;
          md << " | " << v;
        }
        const std::string f1 = r.f1_n ? fmt(r.f1_sum / r.f1_n) : "n/a";
        csv << ',' << f1 << '\n';
        md << " | " << f1 << " |\n";
      }
      write_record(out, "report", args, cfg, {{"evals", report_evals}});
      std::cout << "report with " << order.size() << " rows -> " << (out / "report.md").string() << "\n";
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
}
