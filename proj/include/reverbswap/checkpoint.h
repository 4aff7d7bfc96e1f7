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

// Checkpoint container:
//
//   "RVSWCKPT"  8-byte magic
//   uint32      format version (little endian)
//   uint64      header length N
//   N bytes     JSON header: {"meta": {...}, "tensors": [{name, shape,
//               offset}, ...]}
//   float32[]   tensor payload, offsets counted in elements
//
// Tensors are looked up by name, so readers tolerate added entries.

#ifndef REVERBSWAP_CHECKPOINT_H_
#define REVERBSWAP_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "reverbswap/tensor.h"

namespace reverbswap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  std::map<std::string, Tensor<float>> tensors;
};

// Writes to a sibling temporary file and renames it over `path`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace reverbswap

#endif  // REVERBSWAP_CHECKPOINT_H_
