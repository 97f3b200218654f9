#include "xctsr/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <nlohmann/json.hpp>

#include "xctsr/error.hpp"

namespace xctsr {

using nlohmann::json;

Grid::Grid(std::array<int, 3> d, float fill) : dims(d) {
  require(d[0] >= 1 && d[1] >= 1 && d[2] >= 1, "grid dimensions must be >= 1");
  data.assign(std::size_t(d[0]) * d[1] * d[2], fill);
}

Grid Grid::crop(std::array<int, 3> origin, std::array<int, 3> extent) const {
  for (int a = 0; a < 3; ++a) {
    require(origin[a] >= 0 && extent[a] >= 1 && origin[a] + extent[a] <= dims[a],
            "crop outside grid bounds");
  }
  Grid out(extent);
  for (int z = 0; z < extent[0]; ++z) {
    for (int y = 0; y < extent[1]; ++y) {
      const float* src = &data[index(origin[0] + z, origin[1] + y, origin[2])];
      std::copy(src, src + extent[2], &out.at(z, y, 0));
    }
  }
  return out;
}

Volume::Volume(Grid g, VoxelSize vs, std::map<std::string, std::string> m)
    : grid(std::move(g)), voxel_size(vs), meta(std::move(m)) {
  validate();
}

void Volume::validate() const {
  require(grid.dims[0] >= 1 && grid.dims[1] >= 1 && grid.dims[2] >= 1,
          "volume dimensions must all be >= 1");
  require(grid.data.size() == std::size_t(grid.dims[0]) * grid.dims[1] * grid.dims[2],
          "volume data size does not match dimensions");
  require(voxel_size.z > 0 && voxel_size.y > 0 && voxel_size.x > 0,
          "voxel size components must be strictly positive");
  for (std::size_t i = 0; i < grid.data.size(); ++i) {
    if (!std::isfinite(grid.data[i])) {
      const std::size_t plane = std::size_t(grid.dims[1]) * grid.dims[2];
      throw ValidationError("non-finite value at voxel (" + std::to_string(i / plane) + ", " +
                            std::to_string((i % plane) / grid.dims[2]) + ", " +
                            std::to_string(i % grid.dims[2]) + ")");
    }
  }
}

Interp parse_interp(const std::string& s) {
  if (s == "nearest") return Interp::Nearest;
  if (s == "linear") return Interp::Linear;
  if (s == "cubic") return Interp::Cubic;
  throw ValidationError("unknown interpolation '" + s + "' (expected nearest, linear, cubic)");
}

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Volume normalize_volume(const Volume& vol, double lo, double hi) {
  require(hi > lo, "normalisation needs hi > lo");
  vol.validate();
  Volume out = vol;
  const double span = hi - lo;
  for (float& v : out.grid.data) {
    const double t = (double(v) - lo) / span;
    v = static_cast<float>(std::clamp(t, 0.0, 1.0));
  }
  out.meta["normalization_lo"] = format_double(lo);
  out.meta["normalization_hi"] = format_double(hi);
  return out;
}

namespace {

// Keys cubic convolution kernel, a = -0.5.
double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct Tap {
  int index;
  double weight;
};

// For each output sample along an axis, the input taps and their weights.
std::vector<std::vector<Tap>> axis_taps(int n_in, int n_out, Interp method) {
  std::vector<std::vector<Tap>> taps(n_out);
  const double ratio = double(n_in) / double(n_out);
  for (int j = 0; j < n_out; ++j) {
    const double src = (j + 0.5) * ratio - 0.5;
    auto& t = taps[j];
    switch (method) {
      case Interp::Nearest: {
        const int i = std::clamp(static_cast<int>(std::floor((j + 0.5) * ratio)), 0, n_in - 1);
        t.push_back({i, 1.0});
        break;
      }
      case Interp::Linear: {
        const double s = std::clamp(src, 0.0, double(n_in - 1));
        const int i0 = static_cast<int>(std::floor(s));
        const int i1 = std::min(i0 + 1, n_in - 1);
        const double f = s - i0;
        t.push_back({i0, 1.0 - f});
        if (f > 0.0) t.push_back({i1, f});
        break;
      }
      case Interp::Cubic: {
        const int base = static_cast<int>(std::floor(src));
        const double f = src - base;
        for (int k = -1; k <= 2; ++k) {
          const double w = cubic_weight(f - k);
          if (w == 0.0) continue;
          t.push_back({std::clamp(base + k, 0, n_in - 1), w});
        }
        break;
      }
    }
  }
  return taps;
}

Grid resample_grid_axis(const Grid& g, int axis, int n_out, Interp method) {
  const int n_in = g.dims[axis];
  std::array<int, 3> od = g.dims;
  od[axis] = n_out;
  Grid out(od);
  const auto taps = axis_taps(n_in, n_out, method);
  std::size_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= g.dims[a];
  for (int a = axis + 1; a < 3; ++a) inner *= g.dims[a];
  std::vector<double> acc(inner);
  for (std::size_t o = 0; o < outer; ++o) {
    const float* src = g.data.data() + o * n_in * inner;
    float* dst = out.data.data() + o * n_out * inner;
    for (int j = 0; j < n_out; ++j) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const Tap& tap : taps[j]) {
        const float* s = src + std::size_t(tap.index) * inner;
        for (std::size_t i = 0; i < inner; ++i) acc[i] += tap.weight * s[i];
      }
      float* d = dst + std::size_t(j) * inner;
      for (std::size_t i = 0; i < inner; ++i) d[i] = static_cast<float>(acc[i]);
    }
  }
  return out;
}

}  // namespace

Volume resample_axis(const Volume& vol, int axis, double factor, Interp method) {
  require(axis >= 0 && axis < 3, "axis must be 0, 1 or 2");
  require(factor > 0 && std::isfinite(factor), "resample factor must be > 0");
  const int n_in = vol.grid.dims[axis];
  const int n_out = static_cast<int>(std::lround(factor * n_in));
  require(n_out >= 1, "resampled extent must be >= 1");
  Volume out = vol;
  if (n_out != n_in) out.grid = resample_grid_axis(vol.grid, axis, n_out, method);
  double& vs = axis == 0 ? out.voxel_size.z : axis == 1 ? out.voxel_size.y : out.voxel_size.x;
  vs /= factor;
  return out;
}

Volume resample_z(const Volume& vol, double factor, Interp method) {
  return resample_axis(vol, 0, factor, method);
}

Volume resample_all(const Volume& vol, double factor, Interp method) {
  Volume out = resample_axis(vol, 2, factor, method);
  out = resample_axis(out, 1, factor, method);
  return resample_axis(out, 0, factor, method);
}

// ---------------------------------------------------------------- file format

std::filesystem::path raw_path(const std::filesystem::path& stem) {
  auto p = stem;
  p += ".raw";
  return p;
}

std::filesystem::path header_path(const std::filesystem::path& stem) {
  auto p = stem;
  p += ".json";
  return p;
}

namespace {

std::filesystem::path strip_ext(const std::filesystem::path& p) {
  const auto ext = p.extension();
  if (ext == ".json" || ext == ".raw") {
    auto q = p;
    q.replace_extension();
    return q;
  }
  return p;
}

}  // namespace

void save_volume(const Volume& vol, const std::filesystem::path& stem_in) {
  vol.validate();
  const auto stem = strip_ext(stem_in);
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  static_assert(std::endian::native == std::endian::little, "raw volume I/O assumes a little-endian host");
  {
    std::ofstream os(raw_path(stem), std::ios::binary | std::ios::trunc);
    if (!os) throw RuntimeFailure("cannot write " + raw_path(stem).string());
    os.write(reinterpret_cast<const char*>(vol.grid.data.data()),
             static_cast<std::streamsize>(vol.grid.data.size() * sizeof(float)));
    if (!os) throw RuntimeFailure("short write on " + raw_path(stem).string());
  }
  json h;
  h["format"] = "xctsr-volume";
  h["version"] = 1;
  h["dims"] = {vol.grid.dims[0], vol.grid.dims[1], vol.grid.dims[2]};
  h["order"] = "zyx";
  h["dtype"] = "float32";
  h["byte_order"] = "little";
  h["voxel_size_um"] = {vol.voxel_size.z, vol.voxel_size.y, vol.voxel_size.x};
  h["data_file"] = raw_path(stem).filename().string();
  json norm = nullptr;
  if (vol.meta.count("normalization_lo") && vol.meta.count("normalization_hi")) {
    norm = {{"lo", std::stod(vol.meta.at("normalization_lo"))},
            {"hi", std::stod(vol.meta.at("normalization_hi"))}};
  }
  h["normalization"] = norm;
  h["meta"] = vol.meta;
  std::ofstream hs(header_path(stem), std::ios::trunc);
  if (!hs) throw RuntimeFailure("cannot write " + header_path(stem).string());
  hs << h.dump(2) << "\n";
}

Volume load_volume(const std::filesystem::path& path) {
  const auto stem = strip_ext(path);
  std::ifstream hs(header_path(stem));
  if (!hs) throw RuntimeFailure("cannot open volume header " + header_path(stem).string());
  json h;
  try {
    h = json::parse(hs);
  } catch (const json::exception& e) {
    throw ValidationError("malformed volume header " + header_path(stem).string() + ": " + e.what());
  }
  if (h.value("format", "") != "xctsr-volume") {
    throw ValidationError(header_path(stem).string() + " is not an xctsr volume header");
  }
  require(h.value("dtype", "") == "float32" && h.value("byte_order", "") == "little",
          "unsupported volume encoding in " + header_path(stem).string());
  const auto dims = h.at("dims").get<std::array<int, 3>>();
  const auto vs = h.at("voxel_size_um").get<std::array<double, 3>>();
  Grid g(dims);
  const auto data_file = stem.parent_path() / h.value("data_file", raw_path(stem).filename().string());
  std::ifstream rs(data_file, std::ios::binary | std::ios::ate);
  if (!rs) throw RuntimeFailure("cannot open volume data " + data_file.string());
  const auto bytes = static_cast<std::size_t>(rs.tellg());
  require(bytes == g.data.size() * sizeof(float),
          "volume data " + data_file.string() + " has " + std::to_string(bytes) + " bytes, expected " +
              std::to_string(g.data.size() * sizeof(float)));
  rs.seekg(0);
  rs.read(reinterpret_cast<char*>(g.data.data()), static_cast<std::streamsize>(bytes));
  if (!rs) throw RuntimeFailure("short read on " + data_file.string());
  std::map<std::string, std::string> meta;
  if (h.contains("meta")) meta = h.at("meta").get<std::map<std::string, std::string>>();
  return Volume(std::move(g), VoxelSize{vs[0], vs[1], vs[2]}, std::move(meta));
}

}  // namespace xctsr
