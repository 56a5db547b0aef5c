#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "shsnet/config_file.hpp"
#include "shsnet/error.hpp"

namespace shsnet::model {

// How the global point set is drawn around a query.
enum class SamplingMode {
  mixed,          // distance-gradient weights plus a uniform random subset at weight 1
  gradient_only,  // no random subset
  random_only,    // uniform weights everywhere
};

inline const char* to_string(SamplingMode m) {
  switch (m) {
    case SamplingMode::mixed: return "mixed";
    case SamplingMode::gradient_only: return "gradient_only";
    case SamplingMode::random_only: return "random_only";
  }
  return "?";
}

struct ModelConfig {
  std::size_t patch_size = 128;    // k
  std::size_t global_size = 256;   // N_P
  std::size_t feature_dim = 128;   // c
  std::size_t heads = 64;          // m
  std::vector<std::size_t> scales;  // per-block pooling sizes; empty means {k, k/2, k/4}
  std::size_t blocks = 3;
  double random_ratio = 1.0 / 1.5;  // zeta
  SamplingMode sampling = SamplingMode::mixed;

  // Ablation switches.
  bool use_patch_encoding = true;
  bool use_shape_encoding = true;
  bool use_distance_weight = true;
  bool use_attention_head = true;
  // Regress the oriented normal directly instead of (direction, sign).
  bool direct_oriented = false;

  static ModelConfig desk() { return ModelConfig{}; }

  static ModelConfig full() {
    ModelConfig c;
    c.patch_size = 700;
    c.global_size = 1200;
    return c;
  }

  static ModelConfig tiny() {
    ModelConfig c;
    c.patch_size = 16;
    c.global_size = 16;
    c.feature_dim = 16;
    c.heads = 4;
    return c;
  }

  std::vector<std::size_t> patch_scales() const {
    if (!scales.empty()) return scales;
    std::vector<std::size_t> s;
    std::size_t n = patch_size;
    for (std::size_t b = 0; b < blocks; ++b) {
      s.push_back(std::max<std::size_t>(n, 1));
      n /= 2;
    }
    return s;
  }

  // Same proportions as the patch schedule, applied to the global set.
  std::vector<std::size_t> global_scales() const {
    std::vector<std::size_t> s;
    for (std::size_t v : patch_scales()) s.push_back(std::max<std::size_t>(1, v * global_size / patch_size));
    return s;
  }

  // Number of patch points that survive the encoder and reach the head.
  std::size_t head_points() const { return patch_scales().back(); }

  void validate() const {
    const auto s = patch_scales();
    if (patch_size == 0 || global_size == 0) throw InvalidArgument("patch and global sizes must be positive");
    if (s.size() != blocks || blocks == 0) throw InvalidArgument("scales must list one size per encoder block");
    if (s.front() != patch_size) throw InvalidArgument("first scale must equal the patch size");
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] > s[i - 1] || s[i] == 0) throw InvalidArgument("scales must be positive and non-increasing");
    if (heads < 1 || feature_dim < heads) throw InvalidArgument("need heads >= 1 and feature_dim >= heads");
    if (feature_dim < 2) throw InvalidArgument("feature_dim must be >= 2");
    if (!(random_ratio >= 0.0 && random_ratio <= 1.0)) throw InvalidArgument("random_ratio must lie in [0, 1]");
  }

  // Applies one `key = value` entry; returns false for keys it does not own.
  bool apply(const std::string& key, const std::string& value) {
    if (key == "patch_size") patch_size = parse_count(key, value);
    else if (key == "global_size") global_size = parse_count(key, value);
    else if (key == "feature_dim") feature_dim = parse_count(key, value);
    else if (key == "heads") heads = parse_count(key, value);
    else if (key == "scales") scales = parse_count_list(key, value);
    else if (key == "blocks") blocks = parse_count(key, value);
    else if (key == "random_ratio") random_ratio = parse_real(key, value);
    else if (key == "sampling") {
      if (value == "mixed") sampling = SamplingMode::mixed;
      else if (value == "gradient_only") sampling = SamplingMode::gradient_only;
      else if (value == "random_only") sampling = SamplingMode::random_only;
      else throw InvalidArgument("unknown sampling mode '" + value + "'");
    } else if (key == "use_patch_encoding") use_patch_encoding = parse_flag(key, value);
    else if (key == "use_shape_encoding") use_shape_encoding = parse_flag(key, value);
    else if (key == "use_distance_weight") use_distance_weight = parse_flag(key, value);
    else if (key == "use_attention_head") use_attention_head = parse_flag(key, value);
    else if (key == "direct_oriented") direct_oriented = parse_flag(key, value);
    else return false;
    return true;
  }

  KeyValues to_key_values() const {
    return {
        {"patch_size", std::to_string(patch_size)},
        {"global_size", std::to_string(global_size)},
        {"feature_dim", std::to_string(feature_dim)},
        {"heads", std::to_string(heads)},
        {"scales", join_list(patch_scales())},
        {"blocks", std::to_string(blocks)},
        {"random_ratio", format_real(random_ratio)},
        {"sampling", to_string(sampling)},
        {"use_patch_encoding", use_patch_encoding ? "true" : "false"},
        {"use_shape_encoding", use_shape_encoding ? "true" : "false"},
        {"use_distance_weight", use_distance_weight ? "true" : "false"},
        {"use_attention_head", use_attention_head ? "true" : "false"},
        {"direct_oriented", direct_oriented ? "true" : "false"},
    };
  }

  static ModelConfig from_key_values(const KeyValues& kv) {
    ModelConfig c;
    for (const auto& [k, v] : kv)
      if (!c.apply(k, v)) throw InvalidArgument("unknown model key '" + k + "'");
    c.validate();
    return c;
  }
};

}  // namespace shsnet::model
