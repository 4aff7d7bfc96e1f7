// Copyright 2026 The reverbswap Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "reverbswap/checkpoint.h"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <system_error>

namespace reverbswap {

namespace {

constexpr std::array<char, 8> kMagic{'R', 'V', 'S', 'W', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::filesystem::path& path) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(U))) {
    throw CheckpointError(path.string() + ": truncated header");
  }
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["meta"] = ckpt.meta;
  auto& index = header["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const std::string text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, ckpt.version);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    out.flush();
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw CheckpointError("cannot move checkpoint into place at " +
                          path.string() + ": " + ec.message());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError(path.string() + " is not a reverbswap checkpoint");
  }
  Checkpoint ckpt;
  ckpt.version = get<std::uint32_t>(in, path);
  if (ckpt.version == 0 || ckpt.version > kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported format version " +
                          std::to_string(ckpt.version));
  }
  const auto len = get<std::uint64_t>(in, path);
  if (len > (std::uint64_t{1} << 32)) {
    throw CheckpointError(path.string() + ": implausible header length");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw CheckpointError(path.string() + ": truncated header");
  }
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  ckpt.meta = header.value("meta", nlohmann::ordered_json::object());

  const auto data_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    for (int d : shape) {
      if (d < 0) throw CheckpointError(path.string() + ": negative dimension");
    }
    Tensor<float> t(shape);
    const auto offset = entry.at("offset").get<std::uint64_t>();
    in.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(float)));
    if (!in.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(float)))) {
      throw CheckpointError(path.string() + ": truncated tensor " +
                            entry.at("name").get<std::string>());
    }
    ckpt.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

}  // namespace reverbswap
