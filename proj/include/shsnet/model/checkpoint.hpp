#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "shsnet/error.hpp"
#include "shsnet/model/config.hpp"
#include "shsnet/model/params.hpp"

namespace shsnet::model {

// Layout: 8-byte magic, u32 format version, u32 manifest length, JSON
// manifest, then every tensor as little-endian float32 in manifest order.
inline constexpr std::string_view kCheckpointMagic{"SHSCKPT\0", 8};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const ModelConfig& config, const ModelParams& params) {
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["config"] = config.to_key_values();
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.size() * 4;
  }
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();

  std::string out(kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& [_, t] : params.tensors)
    for (double v : t.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
  const std::size_t header = kCheckpointMagic.size() + 8;
  if (bytes.size() < header || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw IoError("not a checkpoint file");
  const std::uint32_t version = detail::get_u32(bytes, kCheckpointMagic.size());
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t len = detail::get_u32(bytes, kCheckpointMagic.size() + 4);
  if (bytes.size() < header + len) throw IoError("truncated checkpoint manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(header, len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint manifest: ") + e.what());
  }
  const std::string_view data = bytes.substr(header + len);

  Checkpoint ck;
  try {
    ck.config = ModelConfig::from_key_values(manifest.at("config").get<KeyValues>());
    for (const auto& entry : manifest.at("tensors")) {
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::size_t n = ad::numel(shape);
      if (offset + n * 4 > data.size()) throw IoError("checkpoint tensor data out of range");
      Tensor t = Tensor::zeros(shape, true);
      for (std::size_t i = 0; i < n; ++i)
        t.data[i] = std::bit_cast<float>(detail::get_u32(data, offset + 4 * i));
      ck.params.tensors[entry.at("name").get<std::string>()] = std::move(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint manifest: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams& params) {
  const std::string bytes = serialize_checkpoint(config, params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  return parse_checkpoint(bytes);
}

}  // namespace shsnet::model
