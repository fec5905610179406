#pragma once

// Model file format: "MAIR" magic, little-endian uint32 header length, a JSON
// header (format version, config, tensor manifest with shapes and byte
// offsets), then the raw little-endian float32 payload. Saving the same model
// twice is byte-identical.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mair/net.hpp"

namespace mair {

inline constexpr char kModelMagic[4] = {'M', 'A', 'I', 'R'};
inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"channels", c.channels},
                        {"n_groups", c.n_groups},
                        {"n_blocks", c.n_blocks},
                        {"stripe_width", c.stripe_width},
                        {"ssm_state", c.ssm_state},
                        {"expansion", c.expansion},
                        {"head", to_string(c.head)},
                        {"sr_scale", c.sr_scale},
                        {"in_channels", c.in_channels},
                        {"ssa_norm", to_string(c.ssa_norm)},
                        {"aggregation", to_string(c.aggregation)},
                        {"strategy", to_string(c.strategy)},
                        {"shift_stripes", c.shift_stripes}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.channels = j.at("channels").get<int>();
  c.n_groups = j.at("n_groups").get<int>();
  c.n_blocks = j.at("n_blocks").get<int>();
  c.stripe_width = j.at("stripe_width").get<int>();
  c.ssm_state = j.at("ssm_state").get<int>();
  c.expansion = j.at("expansion").get<int>();
  c.head = head_from_string(j.at("head").get<std::string>());
  c.sr_scale = j.at("sr_scale").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.ssa_norm = ssa_norm_from_string(j.at("ssa_norm").get<std::string>());
  c.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
  c.strategy = scan_strategy_from_string(j.at("strategy").get<std::string>());
  c.shift_stripes = j.at("shift_stripes").get<bool>();
  return c;
}

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32_le(out, bits);
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

template <typename T>
std::string serialize_model(Model<T>& model) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string payload;
  std::size_t offset = 0;
  model.visit([&](const std::string& name, Tensor<T>& t) {
    manifest.push_back(
        nlohmann::json{{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.numel()}});
    for (const T& v : t.data) detail::put_f32_le(payload, static_cast<float>(v));
    offset += t.numel() * 4;
  });
  nlohmann::json header{{"version", kModelFormatVersion},
                        {"config", config_to_json(model.cfg)},
                        {"tensors", manifest}};
  const std::string htext = header.dump();

  std::string out;
  out.append(kModelMagic, 4);
  detail::put_u32_le(out, static_cast<std::uint32_t>(htext.size()));
  out += htext;
  out += payload;
  return out;
}

template <typename T>
void save_model(Model<T>& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_model: cannot open '" + path + "' for writing");
  const std::string bytes = serialize_model(model);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("save_model: write failed for '" + path + "'");
}

template <typename T>
Model<T> deserialize_model(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw std::runtime_error("load_model: not a model file (bad magic)");
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t hlen = static_cast<std::uint32_t>(p[4]) | (static_cast<std::uint32_t>(p[5]) << 8) |
                             (static_cast<std::uint32_t>(p[6]) << 16) |
                             (static_cast<std::uint32_t>(p[7]) << 24);
  if (bytes.size() < 8 + hlen) throw std::runtime_error("load_model: truncated header");
  const nlohmann::json header = nlohmann::json::parse(bytes.substr(8, hlen));
  if (header.at("version").get<int>() != kModelFormatVersion)
    throw std::runtime_error("load_model: unsupported format version");

  Model<T> model = build_model<T>(config_from_json(header.at("config")), 0);
  const std::size_t payload_base = 8 + hlen;
  std::size_t idx = 0;
  const auto& tensors = header.at("tensors");
  model.visit([&](const std::string& name, Tensor<T>& t) {
    if (idx >= tensors.size()) throw std::runtime_error("load_model: manifest shorter than model");
    const auto& entry = tensors[idx++];
    if (entry.at("name").get<std::string>() != name)
      throw std::runtime_error("load_model: manifest entry '" + entry.at("name").get<std::string>() +
                               "' does not match expected tensor '" + name + "'");
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (shape != t.shape)
      throw std::runtime_error("load_model: tensor '" + name + "' has shape " + shape_str(shape) +
                               ", expected " + shape_str(t.shape));
    const std::size_t off = payload_base + entry.at("offset").get<std::size_t>();
    if (off + t.numel() * 4 > bytes.size()) throw std::runtime_error("load_model: truncated payload");
    const unsigned char* src = reinterpret_cast<const unsigned char*>(bytes.data()) + off;
    for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = static_cast<T>(detail::get_f32_le(src + i * 4));
  });
  if (idx != tensors.size()) throw std::runtime_error("load_model: manifest longer than model");
  return model;
}

template <typename T>
Model<T> load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_model: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_model<T>(bytes);
}

}  // namespace mair
