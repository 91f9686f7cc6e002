#pragma once

// Checkpoint layout:
//   8 bytes   magic "GLNRCKPT"
//   8 bytes   header length H, little-endian u64
//   H bytes   UTF-8 JSON header: format_version, model_config, vocab (id order),
//             lineage, tensors [{name, shape, bytes}] in payload order
//   payload   each tensor as little-endian IEEE-754 binary32, row-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"

#include "gliner/app/records.hpp"
#include "gliner/error.hpp"
#include "gliner/params.hpp"
#include "gliner/tokenizer.hpp"

namespace gliner::app {

inline constexpr std::array<char, 8> kCheckpointMagic{'G', 'L', 'N', 'R', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams<float> params;
  Vocab vocab;
  json lineage = json::object();  // seeds and provenance of the run
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json tensors = json::array();
  for (const auto& e : ckpt.params.entries()) {
    tensors.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"bytes", e.tensor.size() * 4}});
  }
  const json header = {{"format_version", kCheckpointVersion},
                       {"model_config", to_json(ckpt.params.config())},
                       {"vocab", ckpt.vocab.tokens()},
                       {"lineage", ckpt.lineage},
                       {"tensors", tensors}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  const auto length = static_cast<std::uint64_t>(text.size());
  detail::put_u32_le(out, static_cast<std::uint32_t>(length & 0xffffffffu));
  detail::put_u32_le(out, static_cast<std::uint32_t>(length >> 32));
  out += text;
  for (const auto& e : ckpt.params.entries()) {
    for (float v : e.tensor.data()) detail::put_u32_le(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
    throw FormatError("app", "not a checkpoint (bad magic)");
  }
  const std::uint64_t length = std::uint64_t(detail::get_u32_le(raw + 8)) | (std::uint64_t(detail::get_u32_le(raw + 12)) << 32);
  if (length > bytes.size() - 16) throw FormatError("app", "checkpoint header is truncated");
  json header;
  try {
    header = json::parse(bytes.substr(16, length));
  } catch (const json::parse_error& e) {
    throw FormatError("app", std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointVersion) {
    throw FormatError("app", "unsupported checkpoint format version " + header.value("format_version", json()).dump());
  }

  Checkpoint ckpt;
  try {
    ckpt.vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    const ModelConfig config = model_config_from_json(header.at("model_config"));
    ckpt.lineage = header.value("lineage", json::object());
    const auto specs = param_specs(config);
    const auto& listed = header.at("tensors");
    if (listed.size() != specs.size()) throw FormatError("app", "checkpoint lists " + std::to_string(listed.size()) +
                                                                    " tensors, model needs " + std::to_string(specs.size()));
    std::size_t offset = 16 + length;
    std::vector<nn::Tensor<float>> tensors;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto name = listed[i].at("name").get<std::string>();
      const auto shape = listed[i].at("shape").get<nn::Shape>();
      const auto nbytes = listed[i].at("bytes").get<std::size_t>();
      if (name != specs[i].name || shape != specs[i].shape || nbytes != nn::shape_size(shape) * 4) {
        throw FormatError("app", "checkpoint tensor #" + std::to_string(i) + " '" + name + "' does not match the model");
      }
      if (offset + nbytes > bytes.size()) throw FormatError("app", "checkpoint payload is truncated at '" + name + "'");
      std::vector<float> values(nbytes / 4);
      for (std::size_t k = 0; k < values.size(); ++k) {
        values[k] = std::bit_cast<float>(detail::get_u32_le(raw + offset + 4 * k));
      }
      offset += nbytes;
      tensors.emplace_back(shape, std::move(values));
    }
    if (offset != bytes.size()) throw FormatError("app", "checkpoint has trailing bytes");
    if (config.vocab_size != ckpt.vocab.size()) throw FormatError("app", "checkpoint vocab size disagrees with model config");
    ckpt.params = ModelParams<float>::from_tensors(config, std::move(tensors));
  } catch (const json::exception& e) {
    throw FormatError("app", std::string("checkpoint header: ") + e.what());
  }
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("app", "cannot write checkpoint '" + path + "'");
  const auto bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("app", "failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("app", "cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError("app", path + ": " + e.message());
  }
}

}  // namespace gliner::app
