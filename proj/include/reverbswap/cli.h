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

// Command-line front end. Every command is also callable in-process through
// run_cli, which returns the process exit code:
//   0 success, 1 user error (bad flags, files or data), 2 internal error.
//
// A dataset directory written by synth-data holds
//   corpus.txt           dry source list
//   presets_train.jsonl  36 training presets
//   presets_val.jsonl    4 validation presets
//   quads_train.jsonl    training quad manifest
//   quads_val.jsonl      validation quad manifest
//   dataset.json         profile, clip length and seed
// and the other commands locate these files next to the manifest they are
// given.

#ifndef REVERBSWAP_CLI_H_
#define REVERBSWAP_CLI_H_

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "reverbswap/model.h"
#include "reverbswap/stft.h"

namespace reverbswap {

// Errors the user can fix: bad flags, missing or inconsistent inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Paired STFT and network configuration.
struct Profile {
  std::string name;
  StftConfig stft;
  ModelConfig model;

  std::size_t clip_samples() const {
    return static_cast<std::size_t>(model.input_frames) * stft.hop;
  }
};

// "full" (2048-point STFT, 1024 x 640 input) or "tiny" (512-point STFT,
// 256 x 128 input).
Profile profile_named(const std::string& name);

nlohmann::ordered_json to_json(const StftConfig& c);
StftConfig stft_config_from_json(const nlohmann::json& j, StftConfig base = {});

inline constexpr const char* kDatasetInfoName = "dataset.json";
inline constexpr const char* kRunLogName = "run.log";
// Minimum length of the clips scored by evaluate: 2 s at 44.1 kHz.
inline constexpr std::size_t kMinEvalSamples = 88200;

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace reverbswap

#endif  // REVERBSWAP_CLI_H_
