/*
 * Copyright 2026 The safemarl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Checkpoint file layout:
//
//   <manifest JSON on one line>\n<parameter blob>
//
// The manifest carries "format_version", one entry per network (name, layer
// sizes, activations, offset and count into the blob, in doubles) and a free
// "state" object for scalars such as multipliers and step counters. The blob
// is the concatenation of every network's parameters as little-endian IEEE
// 754 binary64, per layer weights row-major followed by biases.

#pragma once

#include "safemarl/nn.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safemarl::nn {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  std::vector<std::pair<std::string, Mlp>> networks;
  nlohmann::json state = nlohmann::json::object();

  void add(std::string name, const Mlp& net) { networks.emplace_back(std::move(name), net); }

  [[nodiscard]] const Mlp& network(const std::string& name) const {
    for (const auto& [n, net] : networks) {
      if (n == name) return net;
    }
    throw std::out_of_range("checkpoint has no network named " + name);
  }
};

namespace detail {

inline void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffU));
}

inline double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["format"] = "safemarl-checkpoint";
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["encoding"] = "float64-le";
  manifest["networks"] = nlohmann::json::array();
  manifest["state"] = ckpt.state;

  std::string blob;
  std::size_t offset = 0;
  for (const auto& [name, net] : ckpt.networks) {
    const std::size_t count = net.parameter_count();
    manifest["networks"].push_back({{"name", name},
                                    {"layer_sizes", net.layer_sizes()},
                                    {"hidden_activation", to_string(net.hidden_activation())},
                                    {"output_activation", to_string(net.output_activation())},
                                    {"offset", offset},
                                    {"count", count}});
    net.for_each_parameter([&](const double& p) { detail::put_le(blob, p); });
    offset += count;
  }
  return manifest.dump() + "\n" + blob;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw std::runtime_error("checkpoint has no manifest line");
  const auto manifest = nlohmann::json::parse(bytes.substr(0, newline));
  if (manifest.value("format", "") != "safemarl-checkpoint") {
    throw std::runtime_error("not a safemarl checkpoint");
  }
  if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version");
  }
  const auto* blob = reinterpret_cast<const unsigned char*>(bytes.data() + newline + 1);
  const std::size_t blob_doubles = (bytes.size() - newline - 1) / 8;

  Checkpoint ckpt;
  ckpt.state = manifest.value("state", nlohmann::json::object());
  for (const auto& entry : manifest.at("networks")) {
    Mlp net(entry.at("layer_sizes").get<std::vector<std::size_t>>(),
            activation_from_string(entry.at("output_activation").get<std::string>()),
            activation_from_string(entry.at("hidden_activation").get<std::string>()));
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    if (count != net.parameter_count() || offset + count > blob_doubles) {
      throw std::runtime_error("checkpoint blob does not match manifest");
    }
    std::size_t k = offset;
    net.for_each_parameter([&](double& p) { p = detail::get_le(blob + 8 * k++); });
    ckpt.networks.emplace_back(entry.at("name").get<std::string>(), std::move(net));
  }
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace safemarl::nn
