// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Checkpoint layout:
//   "STUCKPT1"                          8 bytes
//   metadata length N                   uint32, little-endian
//   metadata                            N bytes of JSON {arch, seed, step, mode}
//   parameters                          float64 little-endian, canonical order

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stu/errors.hpp"
#include "stu/model.hpp"

namespace stu {

inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'U', 'C', 'K', 'P', 'T', '1'};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string mode;
  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  ParamVector params;
  CheckpointMeta meta;
};

inline nlohmann::ordered_json arch_to_json(const Architecture& a) {
  nlohmann::ordered_json j;
  j["feature_dim"] = a.feature_dim;
  j["context"] = a.context;
  j["hidden_sizes"] = a.hidden_sizes;
  j["vocab_size"] = a.vocab_size;
  return j;
}

inline Architecture arch_from_json(const nlohmann::json& j) {
  Architecture a;
  a.feature_dim = j.at("feature_dim").get<int>();
  a.context = j.at("context").get<int>();
  a.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
  a.vocab_size = j.at("vocab_size").get<int>();
  a.validate();
  return a;
}

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline std::string checkpoint_to_bytes(const ParamVector& p, const CheckpointMeta& meta) {
  check_params(p);
  nlohmann::ordered_json j;
  j["arch"] = arch_to_json(p.arch);
  j["seed"] = meta.seed;
  j["step"] = meta.step;
  j["mode"] = meta.mode;
  const std::string header = j.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32_le(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  out.reserve(out.size() + 8 * p.values.size());
  for (double v : p.values) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw ParseError("not a checkpoint (bad magic)");
  const std::uint32_t len = static_cast<std::uint32_t>(b[8]) | static_cast<std::uint32_t>(b[9]) << 8 |
                            static_cast<std::uint32_t>(b[10]) << 16 | static_cast<std::uint32_t>(b[11]) << 24;
  if (bytes.size() < 12 + static_cast<std::size_t>(len)) throw ParseError("checkpoint metadata truncated");
  Checkpoint c;
  try {
    const auto j = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
    c.params.arch = arch_from_json(j.at("arch"));
    c.meta.seed = j.at("seed").get<std::uint64_t>();
    c.meta.step = j.at("step").get<std::int64_t>();
    c.meta.mode = j.at("mode").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
  const std::size_t n = c.params.arch.param_count();
  const std::size_t blob = bytes.size() - 12 - len;
  if (blob != 8 * n)
    throw ParseError("checkpoint holds " + std::to_string(blob) + " parameter bytes, architecture needs " +
                     std::to_string(8 * n));
  c.params.values.resize(n);
  const unsigned char* p = b + 12 + len;
  for (std::size_t i = 0; i < n; ++i) c.params.values[i] = std::bit_cast<double>(detail::get_u64_le(p + 8 * i));
  return c;
}

inline void write_checkpoint(const std::string& path, const ParamVector& p, const CheckpointMeta& meta) {
  const auto bytes = checkpoint_to_bytes(p, meta);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write to '" + path + "' failed");
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

}  // namespace stu
