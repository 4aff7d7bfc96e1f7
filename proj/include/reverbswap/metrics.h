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

// Objective quality metrics and the evaluation report.
//
//   si_sdr  scale-invariant SDR in dB, per channel then averaged,
//           clamped to [-100, 100].
//   stoi    short-time objective intelligibility on the mid downmix;
//           follows the common reference implementation (10 kHz,
//           15 third-octave bands from 150 Hz, 30-frame segments,
//           -15 dB clipping, 40 dB silent-frame removal).
//   srmr    speech-to-reverberation modulation energy ratio on the mid
//           downmix at 16 kHz, returned as a plain (linear) ratio.
//
// PESQ is not implemented; an external scorer can be plugged in.

#ifndef REVERBSWAP_METRICS_H_
#define REVERBSWAP_METRICS_H_

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "reverbswap/audio_io.h"

namespace reverbswap {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kSiSdrClampDb = 100.0;

double si_sdr(const Waveform& est, const Waveform& ref);
double stoi(const Waveform& est, const Waveform& ref);
double srmr(const Waveform& x);

// Runs `command ref.wav deg.wav` on 16 kHz copies and parses the first
// number printed. Returns nullopt when no command is configured; throws
// MetricError when the command fails or prints no number.
class PesqScorer {
 public:
  PesqScorer() = default;
  explicit PesqScorer(std::string command) : command_(std::move(command)) {}
  bool available() const { return !command_.empty(); }
  std::optional<double> score(const Waveform& ref, const Waveform& deg) const;

 private:
  std::string command_;
};

struct MetricResult {
  std::string name;  // si_sdr, stoi, srmr, pesq
  double value = 0.0;
  std::string clip_id;
};

// STOI (and PESQ when available) of `output` against the reverberant
// target rather than the dry source.
std::vector<MetricResult> eval_conversion(const Waveform& output,
                                          const Waveform& target,
                                          const std::string& clip_id,
                                          const PesqScorer& pesq = {});

// SRMR, STOI, SI-SDR (and PESQ) of `signal` against the dry source.
std::vector<MetricResult> eval_dereverb(const Waveform& signal,
                                        const Waveform& dry,
                                        const std::string& clip_id,
                                        const PesqScorer& pesq = {});

// Mean metric values per (condition, gamma) cell.
class EvalReport {
 public:
  explicit EvalReport(std::string mode) : mode_(std::move(mode)) {}

  void add(const std::string& condition, std::optional<double> gamma,
           const std::vector<MetricResult>& results);

  struct Row {
    std::string condition;
    std::optional<double> gamma;
    std::map<std::string, double> mean;
    std::map<std::string, int> count;
  };
  std::vector<Row> rows() const;
  const std::string& mode() const { return mode_; }

  // Fixed-width text table; metrics with no samples print as "n/a".
  std::string table(const std::vector<std::string>& columns) const;
  std::vector<std::string> json_lines() const;
  // Writes `path` (table) and `path` + ".jsonl".
  void write(const std::filesystem::path& path,
             const std::vector<std::string>& columns) const;

 private:
  struct Cell {
    std::map<std::string, double> sum;
    std::map<std::string, int> count;
  };
  std::string mode_;
  std::vector<std::pair<std::string, std::optional<double>>> order_;
  std::map<std::pair<std::string, double>, Cell> cells_;
};

}  // namespace reverbswap

#endif  // REVERBSWAP_METRICS_H_
