#include "xctsr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "xctsr/error.hpp"
#include "xctsr/json_fields.hpp"

namespace xctsr {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'X', 'C', 'T', 'S', 'R', 'C', 'K', '1'};
}

json to_json(const NetworkSpec& s) {
  return {{"family", to_string(s.family)},
          {"dimensionality", to_string(s.dimensionality)},
          {"scale", s.scale},
          {"in_slices", s.in_slices},
          {"features", s.features},
          {"srcnn_mid_features", s.srcnn_mid_features},
          {"srcnn_kernels", s.srcnn_kernels},
          {"edsr_blocks", s.edsr_blocks},
          {"edsr_residual_scale", s.edsr_residual_scale},
          {"esrgan_rrdb_blocks", s.esrgan_rrdb_blocks},
          {"esrgan_growth", s.esrgan_growth}};
}

NetworkSpec network_spec_from_json(const json& j) {
  const std::string sec = "network";
  check_keys(j, {"family", "dimensionality", "scale", "in_slices", "features", "srcnn_mid_features",
                 "srcnn_kernels", "edsr_blocks", "edsr_residual_scale", "esrgan_rrdb_blocks",
                 "esrgan_growth"},
             sec);
  require(j.contains("family"), sec + ".family: required");
  require(j.contains("dimensionality"), sec + ".dimensionality: required");
  std::string fam, dim;
  read_field(j, "family", fam, sec);
  read_field(j, "dimensionality", dim, sec);
  NetworkSpec s = NetworkSpec::standard(parse_family(fam), parse_dimensionality(dim));
  read_field(j, "scale", s.scale, sec);
  read_field(j, "in_slices", s.in_slices, sec);
  read_field(j, "features", s.features, sec);
  read_field(j, "srcnn_mid_features", s.srcnn_mid_features, sec);
  read_field(j, "srcnn_kernels", s.srcnn_kernels, sec);
  read_field(j, "edsr_blocks", s.edsr_blocks, sec);
  read_field(j, "edsr_residual_scale", s.edsr_residual_scale, sec);
  read_field(j, "esrgan_rrdb_blocks", s.esrgan_rrdb_blocks, sec);
  read_field(j, "esrgan_growth", s.esrgan_growth, sec);
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(sec + ": " + e.what());
  }
  return s;
}

void save_checkpoint(Network& net, const std::filesystem::path& path, const json& meta) {
  json table = json::array();
  std::vector<const Param*> order;
  net.visit_params([&](const std::string& name, Param& p) {
    const Shape s = p.value.shape();
    table.push_back({{"name", name}, {"shape", {s.n, s.c, s.d, s.h, s.w}}, {"count", p.value.numel()}});
    order.push_back(&p);
  });
  json header{{"format", "xctsr-checkpoint"},
              {"version", 1},
              {"spec", to_json(net.spec())},
              {"tensors", table},
              {"meta", meta.is_null() ? json::object() : meta}};
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Param* p : order) {
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
  }
  if (!os) throw RuntimeFailure("short write on checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeFailure("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  require(is && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, path.string() + " is not a checkpoint");
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  require(is && len < (1u << 30), "corrupt checkpoint header length in " + path.string());
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  NetworkSpec spec = network_spec_from_json(header.at("spec"));
  auto net = build_network(spec, 0);
  std::map<std::string, Param*> params;
  net->visit_params([&](const std::string& name, Param& p) { params.emplace(name, &p); });
  const auto& table = header.at("tensors");
  require(table.size() == params.size(),
          "checkpoint has " + std::to_string(table.size()) + " tensors, spec implies " +
              std::to_string(params.size()));
  for (const auto& t : table) {
    const auto name = t.at("name").get<std::string>();
    auto it = params.find(name);
    require(it != params.end(), "checkpoint tensor '" + name + "' does not exist in the network");
    const auto sh = t.at("shape").get<std::array<int, 5>>();
    const Shape expected = it->second->value.shape();
    require(Shape{sh[0], sh[1], sh[2], sh[3], sh[4]} == expected,
            "checkpoint tensor '" + name + "' has shape mismatching the spec (expected " + expected.str() + ")");
    is.read(reinterpret_cast<char*>(it->second->value.data()),
            static_cast<std::streamsize>(expected.numel() * sizeof(float)));
    require(bool(is), "checkpoint truncated while reading '" + name + "'");
  }
  return {std::move(net), header.value("meta", json::object())};
}

void copy_weights(Network& from, Network& to) {
  std::map<std::string, Param*> dst;
  to.visit_params([&](const std::string& name, Param& p) { dst.emplace(name, &p); });
  std::size_t seen = 0;
  from.visit_params([&](const std::string& name, Param& p) {
    auto it = dst.find(name);
    require(it != dst.end(), "parameter '" + name + "' missing in destination network");
    require(it->second->value.shape() == p.value.shape(), "parameter '" + name + "' shape mismatch");
    it->second->value = p.value;
    ++seen;
  });
  require(seen == dst.size(), "destination network has parameters the source lacks");
}

}  // namespace xctsr
