#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcmp/errors.hpp"
#include "tcmp/net.hpp"

namespace tcmp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json config_to_json(const NetConfig& cfg) {
  return {
      {"num_blocks", cfg.num_blocks},
      {"layers_per_block", cfg.layers_per_block},
      {"channels", cfg.channels},
      {"kernel_size", cfg.kernel_size},
      {"dropout_p", cfg.dropout_p},
      {"max_context", cfg.max_context},
      {"input_dim", cfg.input_dim},
      {"output_dim", cfg.output_dim},
      {"alpha_mode", alpha_mode_name(cfg.alpha_mode)},
  };
}

inline NetConfig config_from_json(const nlohmann::json& j) {
  NetConfig cfg;
  cfg.num_blocks = j.at("num_blocks").get<int>();
  cfg.layers_per_block = j.at("layers_per_block").get<int>();
  cfg.channels = j.at("channels").get<int>();
  cfg.kernel_size = j.at("kernel_size").get<int>();
  cfg.dropout_p = j.at("dropout_p").get<double>();
  cfg.max_context = j.at("max_context").get<int>();
  cfg.input_dim = j.at("input_dim").get<int>();
  cfg.output_dim = j.at("output_dim").get<int>();
  cfg.alpha_mode = alpha_mode_from_name(j.at("alpha_mode").get<std::string>());
  return cfg;
}

}  // namespace detail

// Layout: "TCMP" | u32 version | u32 header length | JSON header | float32
// parameter blob in manifest order. The JSON header carries the NetConfig
// and a manifest of (name, shape, byte offset) per parameter.
inline void save_model(const TcmpModel& model, const std::filesystem::path& path) {
  nlohmann::json manifest = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& p : model.params) {
    manifest.push_back({{"name", p.name}, {"shape", p.value.shape}, {"offset", offset}});
    offset += p.value.numel() * sizeof(float);
  }
  nlohmann::json header = {{"config", detail::config_to_json(model.config)},
                           {"params", manifest}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("save_model: cannot open " + path.string());
  out.write("TCMP", 4);
  const uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint32_t header_len = static_cast<uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& p : model.params) {
    out.write(reinterpret_cast<const char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.numel() * sizeof(float)));
  }
  if (!out) throw Error("save_model: write failed for " + path.string());
}

inline TcmpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("load_model: cannot open " + path.string());

  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TCMP", 4) != 0) {
    throw CorruptCheckpoint("load_model: bad magic in " + path.string());
  }
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kCheckpointVersion) {
    throw CorruptCheckpoint("load_model: unsupported version in " + path.string());
  }
  uint32_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in) throw CorruptCheckpoint("load_model: truncated header length");
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw CorruptCheckpoint("load_model: truncated header");

  nlohmann::json header;
  NetConfig cfg;
  try {
    header = nlohmann::json::parse(header_str);
    cfg = detail::config_from_json(header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("load_model: bad header: ") + e.what());
  }

  Rng rng(0);
  TcmpModel model = make_model<float>(cfg, rng);
  const auto& manifest = header.at("params");
  if (manifest.size() != model.params.size()) {
    throw CorruptCheckpoint("load_model: parameter manifest size mismatch");
  }
  uint64_t expected_offset = 0;
  for (size_t i = 0; i < model.params.size(); ++i) {
    auto& p = model.params[i];
    const auto& entry = manifest[i];
    if (entry.at("name").get<std::string>() != p.name ||
        entry.at("shape").get<std::vector<int>>() != p.value.shape ||
        entry.at("offset").get<uint64_t>() != expected_offset) {
      throw CorruptCheckpoint("load_model: manifest entry mismatch for " + p.name);
    }
    in.read(reinterpret_cast<char*>(p.value.data.data()),
            static_cast<std::streamsize>(p.value.numel() * sizeof(float)));
    if (!in) throw CorruptCheckpoint("load_model: truncated parameter blob at " + p.name);
    expected_offset += p.value.numel() * sizeof(float);
  }
  in.peek();
  if (!in.eof()) throw CorruptCheckpoint("load_model: trailing bytes after parameter blob");
  return model;
}

}  // namespace tcmp
