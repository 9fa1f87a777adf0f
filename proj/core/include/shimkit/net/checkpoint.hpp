#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "shimkit/net/resnet.hpp"

namespace shimkit::net {

inline constexpr char kCheckpointMagic[8] = {'S', 'H', 'I', 'M', 'K', 'P', 'T', '1'};

inline nlohmann::json net_config_to_json(const NetConfig& cfg) {
  return {{"input_channels", cfg.input_channels},
          {"stem_width", cfg.stem_width},
          {"stage_widths", cfg.stage_widths},
          {"blocks_per_stage", cfg.blocks_per_stage},
          {"output_dim", cfg.output_dim},
          {"input_h", cfg.input_h},
          {"input_w", cfg.input_w},
          {"seed", cfg.seed},
          {"bn_momentum", cfg.bn_momentum},
          {"bn_eps", cfg.bn_eps}};
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig cfg;
  cfg.input_channels = j.at("input_channels");
  cfg.stem_width = j.at("stem_width");
  for (int i = 0; i < 4; ++i) cfg.stage_widths[i] = j.at("stage_widths").at(i);
  cfg.blocks_per_stage = j.at("blocks_per_stage");
  cfg.output_dim = j.at("output_dim");
  cfg.input_h = j.at("input_h");
  cfg.input_w = j.at("input_w");
  cfg.seed = j.at("seed");
  cfg.bn_momentum = j.at("bn_momentum");
  cfg.bn_eps = j.at("bn_eps");
  return cfg;
}

/// Versioned binary checkpoint: magic, JSON config header, then the flat
/// parameter and buffer vectors as little-endian 32-bit floats.
template <typename T>
void save_checkpoint(const NetParams<T>& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string header = net_config_to_json(net.cfg).dump();
  const std::uint64_t header_len = header.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  auto write_f32 = [&](const std::vector<T>& v) {
    for (T x : v) {
      const float f = static_cast<float>(x);
      out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  };
  write_f32(net.params);
  write_f32(net.buffers);
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

/// Loads a checkpoint, refusing a config mismatch when `expected` is given.
inline NetParams<float> load_checkpoint(const std::filesystem::path& path,
                                        const std::optional<NetConfig>& expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw IoError("not a shimkit checkpoint (bad magic): " + path.string());
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
    throw IoError("truncated checkpoint header: " + path.string());
  }
  NetConfig cfg;
  try {
    cfg = net_config_from_json(nlohmann::json::parse(header));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  if (expected && net_config_to_json(*expected) != net_config_to_json(cfg)) {
    throw IoError("checkpoint config mismatch: " + path.string());
  }

  NetParams<float> net;
  net.cfg = cfg;
  net.layout = NetLayout::build(cfg);
  net.params.resize(net.layout.param_count);
  net.buffers.resize(net.layout.buffer_count);
  auto read_f32 = [&](std::vector<float>& v) {
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(float)))) {
      throw IoError("truncated checkpoint payload: " + path.string());
    }
  };
  read_f32(net.params);
  read_f32(net.buffers);
  return net;
}

} // namespace shimkit::net
