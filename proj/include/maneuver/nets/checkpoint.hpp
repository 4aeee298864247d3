#pragma once

#include <json.hpp>

#include "maneuver/core/binary_io.hpp"
#include "maneuver/nets/model.hpp"

namespace maneuver {

// Checkpoint container. Layout, little-endian:
//   byte 0..3   magic "MNCK"
//   byte 4..7   uint32 header length
//   header      JSON: format_version, model, config echo, seed, step,
//               params/buffers as ordered name lists
//   payload     one embedded tensor per name, params then buffers, in
//               header order
// The name lists double as a structural check at load time: a checkpoint
// only loads into a model with exactly the same parameter registry.

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string model;
  nlohmann::json config = nlohmann::json::object();
  uint64_t seed = 0;
  int64_t step = 0;
};

inline std::string encode_checkpoint(const CheckpointMeta& meta, const ParamStore<float>& store) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["model"] = meta.model;
  header["config"] = meta.config;
  header["seed"] = meta.seed;
  header["step"] = meta.step;
  auto params = nlohmann::json::array();
  for (const auto& e : store.params()) params.push_back(e.name);
  header["params"] = params;
  auto buffers = nlohmann::json::array();
  for (const auto& e : store.buffers()) buffers.push_back(e.name);
  header["buffers"] = buffers;

  std::string out = "MNCK";
  const std::string header_str = header.dump();
  detail::put_u32(out, static_cast<uint32_t>(header_str.size()));
  out += header_str;
  for (const auto& e : store.params()) out += encode_tensor(e.var.node()->value);
  for (const auto& e : store.buffers()) out += encode_tensor(*e.tensor);
  return out;
}

inline void write_checkpoint(const std::string& path, const CheckpointMeta& meta, const ParamStore<float>& store) {
  write_binary_file(path, encode_checkpoint(meta, store));
}

inline CheckpointMeta read_checkpoint_meta(const std::vector<uint8_t>& bytes, const std::string& what,
                                           nlohmann::json* header_out = nullptr, size_t* payload_offset = nullptr) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "MNCK", 4) != 0) format_error(what + ": not a checkpoint file");
  const uint32_t header_len = detail::get_u32(bytes.data() + 4);
  if (8 + static_cast<size_t>(header_len) > bytes.size()) format_error(what + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    format_error(what + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointVersion)
    format_error(what + ": unsupported checkpoint version");
  CheckpointMeta meta;
  meta.model = header.value("model", "");
  meta.config = header.value("config", nlohmann::json::object());
  meta.seed = header.value("seed", uint64_t(0));
  meta.step = header.value("step", int64_t(0));
  if (header_out) *header_out = header;
  if (payload_offset) *payload_offset = 8 + header_len;
  return meta;
}

inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
  return read_checkpoint_meta(read_binary_file(path), path);
}

// Loads tensor values into an existing model's registry. The registry must
// match the checkpoint name-for-name in order, and every shape must agree.
inline CheckpointMeta load_checkpoint(const std::string& path, ParamStore<float>& store) {
  const std::vector<uint8_t> bytes = read_binary_file(path);
  nlohmann::json header;
  size_t pos = 0;
  CheckpointMeta meta = read_checkpoint_meta(bytes, path, &header, &pos);

  const auto& params = header["params"];
  const auto& buffers = header["buffers"];
  if (params.size() != store.params().size() || buffers.size() != store.buffers().size())
    validation_error(path + ": checkpoint has " + std::to_string(params.size()) + " params / " +
                     std::to_string(buffers.size()) + " buffers, model expects " +
                     std::to_string(store.params().size()) + " / " + std::to_string(store.buffers().size()));
  for (size_t i = 0; i < store.params().size(); ++i) {
    auto& entry = store.params()[i];
    if (params[i].get<std::string>() != entry.name)
      validation_error(path + ": parameter " + std::to_string(i) + " is '" + params[i].get<std::string>() +
                       "', model expects '" + entry.name + "'");
    Tensor<float> t = decode_tensor<float>(bytes.data(), bytes.size(), &pos, path + ":" + entry.name);
    check_shape(t, entry.var.node()->value.shape, path + ":" + entry.name);
    entry.var.node()->value = std::move(t);
  }
  for (size_t i = 0; i < store.buffers().size(); ++i) {
    auto& entry = store.buffers()[i];
    if (buffers[i].get<std::string>() != entry.name)
      validation_error(path + ": buffer " + std::to_string(i) + " is '" + buffers[i].get<std::string>() +
                       "', model expects '" + entry.name + "'");
    Tensor<float> t = decode_tensor<float>(bytes.data(), bytes.size(), &pos, path + ":" + entry.name);
    check_shape(t, entry.tensor->shape, path + ":" + entry.name);
    *entry.tensor = std::move(t);
  }
  if (pos != bytes.size()) format_error(path + ": trailing bytes after checkpoint payload");
  return meta;
}

}  // namespace maneuver
