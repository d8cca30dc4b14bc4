// Copyright 2026 The metamf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Binary checkpoint layout (all integers little-endian):
//
//   "MMF1"
//   u32 manifest length, manifest bytes ("key=value\n" lines)
//   u32 tensor count
//   per tensor: u32 name length, name, u32 rank, u64 dims[rank],
//               float32 payload[product(dims)]

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "metamf/errors.hpp"
#include "metamf/model.hpp"

namespace metamf {

namespace detail {

template <class U>
void put_le(std::ostream& os, U v) {
  for (std::size_t k = 0; k < sizeof(U); ++k) os.put(static_cast<char>((v >> (8 * k)) & 0xff));
}

template <class U>
U get_le(std::istream& is) {
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw IoError("checkpoint: truncated file");
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * k);
  }
  return v;
}

inline std::string checkpoint_manifest(const ModelConfig& c, std::uint64_t seed, std::size_t n_users,
                                       std::size_t n_items) {
  std::ostringstream os;
  os << "d_user=" << c.d_user << "\n"
     << "d_collab=" << c.d_collab << "\n"
     << "d_hidden_meta=" << c.d_hidden_meta << "\n"
     << "d_item=" << c.d_item << "\n"
     << "d_rp_hidden=" << c.d_rp_hidden << "\n"
     << "r_lowrank=" << c.r_lowrank << "\n"
     << "variant=" << to_string(c.variant) << "\n"
     << "seed=" << seed << "\n"
     << "n_users=" << n_users << "\n"
     << "n_items=" << n_items << "\n";
  return os.str();
}

}  // namespace detail

template <class T>
void save_checkpoint(std::ostream& os, const MetaParams<T>& p) {
  os.write("MMF1", 4);
  const std::string manifest = detail::checkpoint_manifest(p.config, p.seed, p.n_users, p.n_items);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(manifest.size()));
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  const auto tensors = p.named();
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (auto [name, t] : tensors) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t->shape.size()));
    for (auto d : t->shape) detail::put_le<std::uint64_t>(os, d);
    for (T v : t->values) detail::put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!os) throw IoError("checkpoint: write failed");
}

template <class T>
void save_checkpoint(const std::string& path, const MetaParams<T>& p) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_checkpoint(os, p);
}

// Reads a checkpoint. When `expected` is given, its widths and variant must
// match the stored manifest.
template <class T>
MetaParams<T> load_checkpoint(std::istream& is, const std::optional<ModelConfig>& expected = {}) {
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, "MMF1", 4) != 0)
    throw IoError("checkpoint: bad magic (expected MMF1)");
  const auto mlen = detail::get_le<std::uint32_t>(is);
  std::string manifest(mlen, '\0');
  if (!is.read(manifest.data(), mlen)) throw IoError("checkpoint: truncated manifest");
  std::map<std::string, std::string> kv;
  {
    std::istringstream ms(manifest);
    std::string line;
    while (std::getline(ms, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw IoError("checkpoint: malformed manifest line '" + line + "'");
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  auto field = [&kv](const char* key) -> std::uint64_t {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError(std::string("checkpoint: manifest lacks '") + key + "'");
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw IoError(std::string("checkpoint: bad manifest value for '") + key + "'");
    }
  };
  ModelConfig c;
  c.d_user = field("d_user");
  c.d_collab = field("d_collab");
  c.d_hidden_meta = field("d_hidden_meta");
  c.d_item = field("d_item");
  c.d_rp_hidden = field("d_rp_hidden");
  c.r_lowrank = field("r_lowrank");
  if (!kv.count("variant")) throw IoError("checkpoint: manifest lacks 'variant'");
  c.variant = parse_variant(kv["variant"]);
  const auto seed = field("seed");
  const auto n_users = field("n_users");
  const auto n_items = field("n_items");
  if (expected && !(*expected == c))
    throw ContractError("checkpoint: stored model configuration differs from the requested one");

  // Shapes come from a fresh initialisation with the stored dimensions.
  MetaParams<T> p = MetaParams<T>::initialize(c, n_users, n_items, seed);
  auto tensors = p.named();
  const auto count = detail::get_le<std::uint32_t>(is);
  if (count != tensors.size()) throw IoError("checkpoint: unexpected tensor count");
  for (auto [name, t] : tensors) {
    const auto nlen = detail::get_le<std::uint32_t>(is);
    std::string stored(nlen, '\0');
    if (!is.read(stored.data(), nlen)) throw IoError("checkpoint: truncated tensor name");
    if (stored != name) throw IoError("checkpoint: expected tensor '" + std::string(name) + "', found '" + stored + "'");
    const auto rank = detail::get_le<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_le<std::uint64_t>(is);
    if (shape != t->shape)
      throw IoError("checkpoint: tensor '" + stored + "' has shape " + shape_string(shape) +
                    ", expected " + shape_string(t->shape));
    for (T& v : t->values) v = static_cast<T>(std::bit_cast<float>(detail::get_le<std::uint32_t>(is)));
  }
  return p;
}

template <class T>
MetaParams<T> load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  return load_checkpoint<T>(is, expected);
}

}  // namespace metamf
