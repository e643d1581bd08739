#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   [0, 8)          u64 header length L
//   [8, 8 + L)      UTF-8 JSON header
//   ...             zero padding up to the next multiple of 64 (payload base)
//   payload         tensors in manifest order; each starts at
//                   payload base + byte_offset, byte_offset a multiple of 64
//
// Header fields: magic "PARC2", format_version 1, config (ModelConfig echo),
// manifest [{name, dtype "f32"|"f64", shape, byte_offset, byte_length}].

#include <cstring>
#include <fstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "parc2/blocks.hpp"

namespace parc2 {

inline constexpr const char *kCheckpointMagic = "PARC2";
inline constexpr int kCheckpointVersion = 1;
inline constexpr std::size_t kPayloadAlign = 64;

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json config_to_json(const ModelConfig &c) {
  return {{"variant", c.variant},
          {"channels", c.channels},
          {"blocks", c.blocks},
          {"input_size", {c.input_h, c.input_w}},
          {"alpha_tilde", c.alpha_tilde},
          {"num_classes", c.num_classes},
          {"in_channels", c.in_channels}};
}

inline ModelConfig config_from_json(const nlohmann::json &j) {
  ModelConfig c;
  c.variant = j.value("variant", std::string("custom"));
  c.channels = j.at("channels").get<std::array<std::size_t, 4>>();
  c.blocks = j.at("blocks").get<std::array<std::size_t, 4>>();
  const auto size = j.at("input_size").get<std::array<std::size_t, 2>>();
  c.input_h = size[0];
  c.input_w = size[1];
  c.alpha_tilde = j.value("alpha_tilde", 2.5);
  c.num_classes = j.value("num_classes", std::size_t{1000});
  c.in_channels = j.value("in_channels", std::size_t{3});
  return c;
}

template <class T> constexpr const char *dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

namespace detail {

inline std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

} // namespace detail

template <class T> std::vector<char> serialize_checkpoint(const Model<T> &m) {
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for_each_tensor(m, [&](const std::string &name, const std::vector<T> &v, const auto &shape) {
    manifest.push_back({{"name", name},
                        {"dtype", dtype_name<T>()},
                        {"shape", shape},
                        {"byte_offset", offset},
                        {"byte_length", v.size() * sizeof(T)}});
    offset = detail::align_up(offset + v.size() * sizeof(T), kPayloadAlign);
  });
  const nlohmann::json header = {{"magic", kCheckpointMagic},
                                 {"format_version", kCheckpointVersion},
                                 {"config", config_to_json(m.config)},
                                 {"manifest", manifest}};
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  const std::size_t base = detail::align_up(8 + text.size(), kPayloadAlign);
  std::vector<char> bytes(base + offset, 0);
  std::memcpy(bytes.data(), &len, 8);
  std::memcpy(bytes.data() + 8, text.data(), text.size());
  std::size_t i = 0;
  for_each_tensor(m, [&](const std::string &, const std::vector<T> &v, const auto &) {
    const std::size_t off = manifest[i++]["byte_offset"].template get<std::size_t>();
    if (!v.empty())
      std::memcpy(bytes.data() + base + off, v.data(), v.size() * sizeof(T));
  });
  return bytes;
}

struct CheckpointHeader {
  ModelConfig config;
  nlohmann::json manifest;
  std::size_t payload_base = 0;
};

/// Validates magic, version and manifest bounds / alignment / overlap.
inline CheckpointHeader parse_checkpoint_header(const std::vector<char> &bytes) {
  if (bytes.size() < 8)
    throw CheckpointError("checkpoint: file shorter than the 8-byte header length");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data(), 8);
  if (len > bytes.size() - 8)
    throw CheckpointError(detail::concat("checkpoint: header length ", len,
                                         " exceeds file size ", bytes.size()));
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError(std::string("checkpoint: malformed JSON header: ") + e.what());
  }
  if (!h.is_object() || h.value("magic", std::string()) != kCheckpointMagic)
    throw CheckpointError("checkpoint: bad magic (expected \"PARC2\")");
  if (h.value("format_version", -1) != kCheckpointVersion)
    throw CheckpointError(detail::concat("checkpoint: unsupported format_version ",
                                         h.value("format_version", -1)));
  CheckpointHeader out;
  try {
    out.config = config_from_json(h.at("config"));
    out.manifest = h.at("manifest");
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError(std::string("checkpoint: incomplete header: ") + e.what());
  }
  out.payload_base = detail::align_up(8 + len, kPayloadAlign);
  std::size_t prev_end = 0;
  for (const auto &t : out.manifest) {
    const std::string name = t.value("name", std::string("<unnamed>"));
    const std::size_t off = t.value("byte_offset", std::size_t{0});
    const std::size_t n = t.value("byte_length", std::size_t{0});
    if (off % kPayloadAlign != 0)
      throw CheckpointError("checkpoint: tensor '" + name + "' is not 64-byte aligned");
    if (off < prev_end)
      throw CheckpointError("checkpoint: tensor '" + name + "' overlaps the previous tensor");
    if (out.payload_base + off + n > bytes.size())
      throw CheckpointError(detail::concat("checkpoint: tensor '", name, "' [", off, ", ", off + n,
                                           ") lies beyond the end of the file (truncated?)"));
    prev_end = off + n;
  }
  return out;
}

/// Loads into a model of the requested precision. The manifest must list
/// exactly the tensors the header's config implies, with matching shapes.
template <class T> Model<T> deserialize_checkpoint(const std::vector<char> &bytes) {
  const CheckpointHeader h = parse_checkpoint_header(bytes);
  Model<T> m;
  try {
    m = allocate_model<T>(h.config);
  } catch (const std::exception &e) {
    throw CheckpointError(std::string("checkpoint: invalid config: ") + e.what());
  }
  std::size_t i = 0;
  for_each_tensor(m, [&](const std::string &name, std::vector<T> &v, const auto &shape) {
    if (i >= h.manifest.size())
      throw CheckpointError("checkpoint: tensor '" + name + "' missing from manifest");
    const auto &t = h.manifest[i++];
    const std::string got = t.value("name", std::string());
    if (got != name)
      throw CheckpointError("checkpoint: expected tensor '" + name + "' but manifest has '" + got + "'");
    if (t.value("dtype", std::string()) != dtype_name<T>())
      throw CheckpointError("checkpoint: tensor '" + name + "' has dtype " +
                            t.value("dtype", std::string("?")) + ", expected " + dtype_name<T>());
    const auto file_shape = t.value("shape", std::vector<std::size_t>{});
    if (file_shape != shape)
      throw CheckpointError(detail::concat("checkpoint: tensor '", name,
                                           "' shape mismatch with config (file has ",
                                           file_shape.size(), "-d shape ",
                                           nlohmann::json(file_shape).dump(), ", config implies ",
                                           nlohmann::json(shape).dump(), ")"));
    const std::size_t n = t.value("byte_length", std::size_t{0});
    if (n != v.size() * sizeof(T))
      throw CheckpointError("checkpoint: tensor '" + name + "' byte_length disagrees with its shape");
    if (n)
      std::memcpy(v.data(), bytes.data() + h.payload_base + t.value("byte_offset", std::size_t{0}), n);
  });
  if (i != h.manifest.size())
    throw CheckpointError("checkpoint: manifest lists extra tensors not implied by the config");
  return m;
}

inline std::vector<char> read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError("cannot open '" + path + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string &path, const std::vector<char> &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw CheckpointError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw CheckpointError("short write to '" + path + "'");
}

template <class T> void checkpoint_save(const Model<T> &m, const std::string &path) {
  write_file(path, serialize_checkpoint(m));
}

template <class T> Model<T> checkpoint_load(const std::string &path) {
  return deserialize_checkpoint<T>(read_file(path));
}

/// Load with an expected config; mismatches name the first offending tensor.
template <class T> Model<T> checkpoint_load(const std::string &path, const ModelConfig &expected) {
  const std::vector<char> bytes = read_file(path);
  const CheckpointHeader h = parse_checkpoint_header(bytes);
  const auto want = tensor_specs(expected);
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= h.manifest.size())
      throw CheckpointError("checkpoint: tensor '" + want[i].name + "' missing from manifest");
    const auto &t = h.manifest[i];
    if (t.value("name", std::string()) != want[i].name ||
        t.value("shape", std::vector<std::size_t>{}) != want[i].shape)
      throw CheckpointError("checkpoint: tensor '" + want[i].name +
                            "' does not match the requested config");
  }
  if (h.manifest.size() != want.size())
    throw CheckpointError("checkpoint: manifest size differs from the requested config");
  return deserialize_checkpoint<T>(bytes);
}

} // namespace parc2
