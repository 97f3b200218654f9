#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "xctsr/network.hpp"

namespace xctsr {

nlohmann::json to_json(const NetworkSpec& s);
// Strict: unknown keys are rejected with the offending field name.
NetworkSpec network_spec_from_json(const nlohmann::json& j);

// Single-file archive: 8-byte magic, u64 header length, JSON header (spec,
// tensor table, free-form meta), then the float32 tensors in table order.
void save_checkpoint(Network& net, const std::filesystem::path& path, const nlohmann::json& meta = {});

struct LoadedCheckpoint {
  std::unique_ptr<Network> net;
  nlohmann::json meta;
};

// Rebuilds the network from the stored spec and checks every stored tensor
// name and shape against it before copying weights.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Copies values between networks with identical parameter names and shapes.
void copy_weights(Network& from, Network& to);

}  // namespace xctsr
