#include "xctsr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "xctsr/error.hpp"
#include "xctsr/json_fields.hpp"

namespace xctsr {

using nlohmann::json;

std::string to_string(PartShape s) { return s == PartShape::Block ? "block" : "cylinder"; }

PartShape parse_part_shape(const std::string& s) {
  if (s == "block") return PartShape::Block;
  if (s == "cylinder") return PartShape::Cylinder;
  throw ValidationError("unknown part shape '" + s + "' (expected block, cylinder)");
}

// ---------------------------------------------------------------- geometry

namespace {

struct PartGeometry {
  std::array<double, 3> lo, hi;  // axis-aligned extent in continuous voxel coordinates
  double cy = 0, cx = 0, radius = 0;
  bool cylinder = false;
};

PartGeometry geometry(const PhantomSpec& s) {
  PartGeometry g;
  const auto& d = s.dims;
  if (s.part_shape == PartShape::Cylinder) {
    g.cylinder = true;
    const double mz = std::max(2, d[0] / 16);
    g.lo = {mz, 0, 0};
    g.hi = {d[0] - mz, double(d[1]), double(d[2])};
    g.cy = d[1] / 2.0;
    g.cx = d[2] / 2.0;
    g.radius = 0.42 * std::min(d[1], d[2]);
  } else {
    for (int a = 0; a < 3; ++a) {
      const double m = std::max(2, d[a] / 8);
      g.lo[a] = m;
      g.hi[a] = d[a] - m;
    }
  }
  return g;
}

double depth_in(const PartGeometry& g, int z, int y, int x) {
  const double c[3] = {z + 0.5, y + 0.5, x + 0.5};
  double d = std::min(c[0] - g.lo[0], g.hi[0] - c[0]);
  if (g.cylinder) {
    const double r = std::hypot(c[1] - g.cy, c[2] - g.cx);
    d = std::min(d, g.radius - r);
  } else {
    for (int a = 1; a < 3; ++a) d = std::min({d, c[a] - g.lo[a], g.hi[a] - c[a]});
  }
  return d;
}

std::vector<std::int64_t> rasterize(const PoreSpec& p, const std::array<int, 3>& dims) {
  std::vector<std::int64_t> out;
  int ext[3];
  for (int a = 0; a < 3; ++a) ext[a] = static_cast<int>(std::ceil(p.radii[a]));
  for (int dz = -ext[0]; dz <= ext[0]; ++dz) {
    for (int dy = -ext[1]; dy <= ext[1]; ++dy) {
      for (int dx = -ext[2]; dx <= ext[2]; ++dx) {
        const double q = (dz / p.radii[0]) * (dz / p.radii[0]) + (dy / p.radii[1]) * (dy / p.radii[1]) +
                         (dx / p.radii[2]) * (dx / p.radii[2]);
        if (q > 1.0 + 1e-9) continue;
        const int z = p.center[0] + dz, y = p.center[1] + dy, x = p.center[2] + dx;
        if (z < 0 || y < 0 || x < 0 || z >= dims[0] || y >= dims[1] || x >= dims[2]) continue;
        out.push_back((std::int64_t(z) * dims[1] + y) * dims[2] + x);
      }
    }
  }
  return out;
}

// Pore labels (1-based) over the whole grid; rejects pores that overlap or touch.
class PoreCanvas {
 public:
  explicit PoreCanvas(std::array<int, 3> dims)
      : dims_(dims), labels_(std::size_t(dims[0]) * dims[1] * dims[2], 0) {}

  // Label of a conflicting pore, or 0 when the voxels are free and isolated.
  int conflict(const std::vector<std::int64_t>& voxels) const {
    const std::int64_t plane = std::int64_t(dims_[1]) * dims_[2];
    for (std::int64_t v : voxels) {
      const int z = int(v / plane), y = int((v % plane) / dims_[2]), x = int(v % dims_[2]);
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int zz = z + dz, yy = y + dy, xx = x + dx;
            if (zz < 0 || yy < 0 || xx < 0 || zz >= dims_[0] || yy >= dims_[1] || xx >= dims_[2]) continue;
            const int l = labels_[(std::size_t(zz) * dims_[1] + yy) * dims_[2] + xx];
            if (l != 0) return l;
          }
        }
      }
    }
    return 0;
  }

  void paint(const std::vector<std::int64_t>& voxels, int label) {
    for (std::int64_t v : voxels) labels_[std::size_t(v)] = label;
  }

 private:
  std::array<int, 3> dims_;
  std::vector<int> labels_;
};

bool inside_part(const PartGeometry& g, const std::vector<std::int64_t>& voxels,
                 const std::array<int, 3>& dims, double min_depth) {
  const std::int64_t plane = std::int64_t(dims[1]) * dims[2];
  for (std::int64_t v : voxels) {
    if (depth_in(g, int(v / plane), int((v % plane) / dims[2]), int(v % dims[2])) < min_depth) return false;
  }
  return true;
}

// Pore voxels must keep one full material voxel between them and the surface.
constexpr double kPoreMinDepth = 1.5;

}  // namespace

void PhantomSpec::validate() const {
  require(dims[0] >= 1 && dims[1] >= 1 && dims[2] >= 1, "phantom dims must be >= 1");
  require(voxel_size_um > 0, "phantom voxel size must be positive");
  require(material_intensity > 0 && material_intensity <= 1, "material intensity must be in (0, 1]");
  require(background_intensity >= 0 && background_intensity < 1, "background intensity must be in [0, 1)");
  require(material_intensity > background_intensity, "material intensity must exceed background");
  for (const auto& p : defects) {
    for (double r : p.radii) require(r > 0, "pore radii must be positive");
  }
}

double part_depth(const PhantomSpec& spec, int z, int y, int x) {
  return depth_in(geometry(spec), z, y, x);
}

std::vector<std::uint8_t> part_interior_mask(const PhantomSpec& spec, double margin) {
  const auto g = geometry(spec);
  const auto& d = spec.dims;
  std::vector<std::uint8_t> mask(std::size_t(d[0]) * d[1] * d[2], 0);
  std::size_t i = 0;
  for (int z = 0; z < d[0]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x, ++i) mask[i] = depth_in(g, z, y, x) >= margin ? 1 : 0;
    }
  }
  return mask;
}

std::pair<Volume, std::vector<DefectRecord>> generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const auto g = geometry(spec);
  const auto& d = spec.dims;
  Grid grid(d);
  const double bg = spec.background_intensity, mat = spec.material_intensity;
  for (int z = 0; z < d[0]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x) {
        const double t = std::clamp(depth_in(g, z, y, x) + 0.5, 0.0, 1.0);
        grid.at(z, y, x) = static_cast<float>(bg + (mat - bg) * t);
      }
    }
  }
  PoreCanvas canvas(d);
  std::vector<DefectRecord> records;
  const double vv = spec.voxel_size_um * spec.voxel_size_um * spec.voxel_size_um;
  for (std::size_t i = 0; i < spec.defects.size(); ++i) {
    auto voxels = rasterize(spec.defects[i], d);
    require(!voxels.empty(), "defect " + std::to_string(i) + " lies outside the volume");
    require(inside_part(g, voxels, d, kPoreMinDepth),
            "defect " + std::to_string(i) + " is not enclosed by the part");
    const int other = canvas.conflict(voxels);
    if (other != 0) {
      throw ValidationError("defects " + std::to_string(other - 1) + " and " + std::to_string(i) +
                            " overlap or touch");
    }
    canvas.paint(voxels, int(i) + 1);
    for (std::int64_t v : voxels) grid.data[std::size_t(v)] = static_cast<float>(bg);
    auto rec = make_record(int(i), std::move(voxels), d, vv);
    rec.center_vox = spec.defects[i].center;
    records.push_back(std::move(rec));
  }
  Volume vol(std::move(grid), VoxelSize{spec.voxel_size_um, spec.voxel_size_um, spec.voxel_size_um},
             {{"source", "phantom"},
              {"part_shape", to_string(spec.part_shape)},
              {"phantom_seed", std::to_string(spec.seed)},
              {"defect_count", std::to_string(records.size())}});
  return {std::move(vol), std::move(records)};
}

PhantomSpec random_phantom(const PhantomTemplate& tpl, std::uint64_t seed) {
  require(tpl.n_defects >= 0, "n_defects must be >= 0");
  require(tpl.min_diameter_vox > 0 && tpl.max_diameter_vox >= tpl.min_diameter_vox,
          "pore diameter range must satisfy 0 < min <= max");
  require(tpl.aspect_jitter >= 0 && tpl.aspect_jitter < 1, "aspect jitter must be in [0, 1)");
  PhantomSpec spec;
  spec.dims = tpl.dims;
  spec.voxel_size_um = tpl.voxel_size_um;
  spec.part_shape = tpl.part_shape;
  spec.material_intensity = tpl.material_intensity;
  spec.background_intensity = tpl.background_intensity;
  spec.seed = seed;
  spec.validate();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto g = geometry(spec);
  PoreCanvas canvas(spec.dims);
  const double log_lo = std::log(tpl.min_diameter_vox), log_hi = std::log(tpl.max_diameter_vox);
  for (int i = 0; i < tpl.n_defects; ++i) {
    double diameter = i == 0 ? tpl.min_diameter_vox
                    : i == 1 ? tpl.max_diameter_vox
                             : std::exp(log_lo + (log_hi - log_lo) * unit(rng));
    PoreSpec pore;
    for (int a = 0; a < 3; ++a) {
      const double j = i < 2 ? 0.0 : tpl.aspect_jitter * (2.0 * unit(rng) - 1.0);
      pore.radii[a] = std::max(0.5, 0.5 * diameter * (1.0 + j));
    }
    for (int attempt = 0; attempt < 2000; ++attempt) {
      for (int a = 0; a < 3; ++a) {
        const int lo = static_cast<int>(std::floor(g.lo[a])), hi = static_cast<int>(std::ceil(g.hi[a])) - 1;
        pore.center[a] = lo + static_cast<int>(unit(rng) * std::max(1, hi - lo + 1));
      }
      auto voxels = rasterize(pore, spec.dims);
      if (voxels.empty() || !inside_part(g, voxels, spec.dims, kPoreMinDepth)) continue;
      if (canvas.conflict(voxels) != 0) continue;
      canvas.paint(voxels, int(spec.defects.size()) + 1);
      spec.defects.push_back(pore);
      break;
    }
  }
  return spec;
}

// ---------------------------------------------------------------- degradation

void DegradationSpec::validate() const {
  require(blur_sigma_vox >= 0, "blur sigma must be >= 0");
  require(bin_factor >= 1, "bin factor must be >= 1");
  require(noise_sigma >= 0, "noise sigma must be >= 0");
  require(bias_amplitude >= 0, "bias amplitude must be >= 0");
}

namespace {

void blur_axis(Grid& g, int axis, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  if (radius == 0) return;
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const int n = g.dims[axis];
  std::size_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= g.dims[a];
  for (int a = axis + 1; a < 3; ++a) inner *= g.dims[a];
  std::vector<double> line(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      float* base = g.data.data() + o * n * inner + i;
      for (int j = 0; j < n; ++j) line[j] = base[j * inner];
      for (int j = 0; j < n; ++j) {
        double acc = 0;
        for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * line[std::clamp(j + t, 0, n - 1)];
        base[j * inner] = static_cast<float>(acc);
      }
    }
  }
}

}  // namespace

Volume degrade(const Volume& hr, const DegradationSpec& deg) {
  deg.validate();
  hr.validate();
  const bool iso = deg.mode == DegradeMode::Isotropic;
  const int b = deg.bin_factor;
  const int bz = iso ? b : 1;
  const auto& d = hr.dims();
  require(d[0] % bz == 0 && d[1] % b == 0 && d[2] % b == 0,
          "volume dims (" + std::to_string(d[0]) + ", " + std::to_string(d[1]) + ", " +
              std::to_string(d[2]) + ") not divisible by the bin factor " + std::to_string(b));
  Grid g = hr.grid;
  if (deg.blur_sigma_vox > 0) {
    if (iso) blur_axis(g, 0, deg.blur_sigma_vox);
    blur_axis(g, 1, deg.blur_sigma_vox);
    blur_axis(g, 2, deg.blur_sigma_vox);
  }
  const std::array<int, 3> od{d[0] / bz, d[1] / b, d[2] / b};
  Grid out(od);
  const double inv = 1.0 / (double(bz) * b * b);
  for (int z = 0; z < od[0]; ++z) {
    for (int y = 0; y < od[1]; ++y) {
      for (int x = 0; x < od[2]; ++x) {
        double acc = 0;
        for (int iz = 0; iz < bz; ++iz) {
          for (int iy = 0; iy < b; ++iy) {
            const float* row = &g.data[g.index(z * bz + iz, y * b + iy, x * b)];
            for (int ix = 0; ix < b; ++ix) acc += row[ix];
          }
        }
        out.at(z, y, x) = static_cast<float>(acc * inv);
      }
    }
  }
  if (deg.noise_sigma > 0) {
    std::mt19937_64 rng(deg.seed);
    std::normal_distribution<double> noise(0.0, deg.noise_sigma);
    for (float& v : out.data) v = static_cast<float>(v + noise(rng));
  }
  if (deg.bias_amplitude > 0) {
    const double cy = od[1] / 2.0, cx = od[2] / 2.0, rmax = 0.5 * std::min(od[1], od[2]);
    for (int z = 0; z < od[0]; ++z) {
      for (int y = 0; y < od[1]; ++y) {
        for (int x = 0; x < od[2]; ++x) {
          const double r = std::hypot(y + 0.5 - cy, x + 0.5 - cx) / rmax;
          out.at(z, y, x) = static_cast<float>(out.at(z, y, x) * (1.0 + deg.bias_amplitude * r * r));
        }
      }
    }
  }
  Volume lr(std::move(out), VoxelSize{hr.voxel_size.z * bz, hr.voxel_size.y * b, hr.voxel_size.x * b},
            hr.meta);
  lr.meta["degradation"] = to_json(deg).dump();
  return lr;
}

// ---------------------------------------------------------------- dataset

std::uint64_t derive_seed(std::uint64_t master, const std::string& tag, std::uint64_t index) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                                   static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  for (unsigned char c : tag) words.push_back(c);
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (std::uint64_t(out[1]) << 32) | out[0];
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeFailure("cannot open " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::filesystem::path manifest_path(const std::filesystem::path& dir) { return dir / "manifest.json"; }

std::vector<const ManifestEntry*> Manifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

json to_json(const PhantomSpec& s) {
  json pores = json::array();
  for (const auto& p : s.defects) pores.push_back({{"center", p.center}, {"radii", p.radii}});
  return {{"dims", s.dims},
          {"voxel_size_um", s.voxel_size_um},
          {"part_shape", to_string(s.part_shape)},
          {"material_intensity", s.material_intensity},
          {"background_intensity", s.background_intensity},
          {"defects", pores},
          {"seed", s.seed}};
}

PhantomSpec phantom_spec_from_json(const json& j) {
  const std::string sec = "phantom";
  check_keys(j, {"dims", "voxel_size_um", "part_shape", "material_intensity", "background_intensity",
                 "defects", "seed"},
             sec);
  PhantomSpec s;
  read_field(j, "dims", s.dims, sec);
  read_field(j, "voxel_size_um", s.voxel_size_um, sec);
  std::string shape = to_string(s.part_shape);
  read_field(j, "part_shape", shape, sec);
  s.part_shape = parse_part_shape(shape);
  read_field(j, "material_intensity", s.material_intensity, sec);
  read_field(j, "background_intensity", s.background_intensity, sec);
  read_field(j, "seed", s.seed, sec);
  if (j.contains("defects")) {
    for (const auto& p : j.at("defects")) {
      check_keys(p, {"center", "radii"}, sec + ".defects[]");
      PoreSpec pore;
      read_field(p, "center", pore.center, sec + ".defects[]");
      read_field(p, "radii", pore.radii, sec + ".defects[]");
      s.defects.push_back(pore);
    }
  }
  s.validate();
  return s;
}

json to_json(const PhantomTemplate& t) {
  return {{"dims", t.dims},
          {"voxel_size_um", t.voxel_size_um},
          {"part_shape", to_string(t.part_shape)},
          {"material_intensity", t.material_intensity},
          {"background_intensity", t.background_intensity},
          {"n_defects", t.n_defects},
          {"min_diameter_vox", t.min_diameter_vox},
          {"max_diameter_vox", t.max_diameter_vox},
          {"aspect_jitter", t.aspect_jitter}};
}

PhantomTemplate phantom_template_from_json(const json& j) {
  const std::string sec = "phantom";
  check_keys(j, {"dims", "voxel_size_um", "part_shape", "material_intensity", "background_intensity",
                 "n_defects", "min_diameter_vox", "max_diameter_vox", "aspect_jitter"},
             sec);
  PhantomTemplate t;
  read_field(j, "dims", t.dims, sec);
  read_field(j, "voxel_size_um", t.voxel_size_um, sec);
  std::string shape = to_string(t.part_shape);
  read_field(j, "part_shape", shape, sec);
  t.part_shape = parse_part_shape(shape);
  read_field(j, "material_intensity", t.material_intensity, sec);
  read_field(j, "background_intensity", t.background_intensity, sec);
  read_field(j, "n_defects", t.n_defects, sec);
  read_field(j, "min_diameter_vox", t.min_diameter_vox, sec);
  read_field(j, "max_diameter_vox", t.max_diameter_vox, sec);
  read_field(j, "aspect_jitter", t.aspect_jitter, sec);
  return t;
}

json to_json(const DegradationSpec& d) {
  return {{"blur_sigma_vox", d.blur_sigma_vox},
          {"bin_factor", d.bin_factor},
          {"noise_sigma", d.noise_sigma},
          {"bias_amplitude", d.bias_amplitude},
          {"mode", d.mode == DegradeMode::Isotropic ? "isotropic" : "in_plane"},
          {"seed", d.seed}};
}

DegradationSpec degradation_from_json(const json& j) {
  const std::string sec = "degradation";
  check_keys(j, {"blur_sigma_vox", "bin_factor", "noise_sigma", "bias_amplitude", "mode", "seed"}, sec);
  DegradationSpec d;
  read_field(j, "blur_sigma_vox", d.blur_sigma_vox, sec);
  read_field(j, "bin_factor", d.bin_factor, sec);
  read_field(j, "noise_sigma", d.noise_sigma, sec);
  read_field(j, "bias_amplitude", d.bias_amplitude, sec);
  read_field(j, "seed", d.seed, sec);
  std::string mode = "isotropic";
  read_field(j, "mode", mode, sec);
  if (mode == "isotropic") {
    d.mode = DegradeMode::Isotropic;
  } else if (mode == "in_plane") {
    d.mode = DegradeMode::InPlane;
  } else {
    throw ValidationError(sec + ".mode: expected isotropic or in_plane, got '" + mode + "'");
  }
  d.validate();
  return d;
}

Manifest make_dataset(int n_train_parts, int n_test_parts, const PhantomTemplate& tpl,
                      const DegradationSpec& degradation, const std::filesystem::path& out_dir,
                      std::uint64_t seed, bool overwrite) {
  require(n_train_parts >= 0 && n_test_parts >= 0, "part counts must be >= 0");
  degradation.validate();
  const auto mpath = manifest_path(out_dir);
  if (std::filesystem::exists(mpath) && !overwrite) {
    throw ValidationError("manifest already exists at " + mpath.string() + " (pass overwrite to replace)");
  }
  std::filesystem::create_directories(out_dir);
  Manifest m;
  m.root = out_dir;
  m.seed = seed;
  m.phantom_template = tpl;
  m.degradation = degradation;
  for (int i = 0; i < n_train_parts + n_test_parts; ++i) {
    ManifestEntry e;
    e.id = i;
    e.split = i < n_train_parts ? "train" : "test";
    e.phantom_seed = derive_seed(seed, "phantom", std::uint64_t(i));
    e.degrade_seed = derive_seed(seed, "degrade", std::uint64_t(i));
    char stem[32];
    std::snprintf(stem, sizeof(stem), "part_%03d", i);
    e.hr = std::string(stem) + "_hr.json";
    e.lr = std::string(stem) + "_lr.json";
    e.defects = std::string(stem) + "_defects.json";

    PhantomSpec spec = random_phantom(tpl, e.phantom_seed);
    auto [hr, records] = generate_phantom(spec);
    DegradationSpec deg = degradation;
    deg.seed = e.degrade_seed;
    Volume lr = degrade(hr, deg);
    const auto [mn, mx] = std::minmax_element(hr.grid.data.begin(), hr.grid.data.end());
    const double lo = *mn, hi = *mx > *mn ? double(*mx) : double(*mn) + 1.0;
    Volume hr_n = normalize_volume(hr, lo, hi);
    Volume lr_n = normalize_volume(lr, lo, hi);
    for (Volume* v : {&hr_n, &lr_n}) {
      v->meta["part_id"] = std::to_string(i);
      v->meta["split"] = e.split;
      v->meta["dataset_seed"] = std::to_string(seed);
    }
    save_volume(hr_n, out_dir / e.hr);
    save_volume(lr_n, out_dir / e.lr);
    save_defects(records, hr.dims(), out_dir / e.defects);

    spec.defects.clear();
    e.phantom = spec;
    m.entries.push_back(std::move(e));
  }
  save_manifest(m, mpath);
  return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"id", e.id},
                       {"split", e.split},
                       {"hr", e.hr.string()},
                       {"lr", e.lr.string()},
                       {"defects", e.defects.string()},
                       {"phantom_seed", e.phantom_seed},
                       {"degrade_seed", e.degrade_seed},
                       {"phantom", to_json(e.phantom)}});
  }
  json j;
  j["format"] = "xctsr-manifest";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["phantom_template"] = to_json(m.phantom_template);
  j["degradation"] = to_json(m.degradation);
  j["entries"] = std::move(entries);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

Manifest load_manifest(const std::filesystem::path& path_in) {
  const auto path = std::filesystem::is_directory(path_in) ? manifest_path(path_in) : path_in;
  std::ifstream is(path);
  if (!is) throw RuntimeFailure("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
  require(j.value("format", "") == "xctsr-manifest", path.string() + " is not a dataset manifest");
  Manifest m;
  m.root = path.parent_path();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.phantom_template = phantom_template_from_json(j.at("phantom_template"));
  m.degradation = degradation_from_json(j.at("degradation"));
  for (const auto& e : j.at("entries")) {
    ManifestEntry me;
    me.id = e.at("id").get<int>();
    me.split = e.at("split").get<std::string>();
    me.hr = e.at("hr").get<std::string>();
    me.lr = e.at("lr").get<std::string>();
    me.defects = e.at("defects").get<std::string>();
    me.phantom_seed = e.at("phantom_seed").get<std::uint64_t>();
    me.degrade_seed = e.at("degrade_seed").get<std::uint64_t>();
    me.phantom = phantom_spec_from_json(e.at("phantom"));
    m.entries.push_back(std::move(me));
  }
  return m;
}

}  // namespace xctsr
