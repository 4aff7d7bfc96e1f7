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

#include "reverbswap/reverb.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"
#include "reverbswap/rng.h"

namespace reverbswap {

namespace {

constexpr double kRate = kCanonicalSampleRate;
constexpr double kMinDelayMs = 20.0;
constexpr double kMaxDelayMs = 90.0;
// Input diffuser allpass delays (ms); gain is 0.7 * diffusion.
constexpr double kDiffuserMs[] = {4.77, 3.59, 12.73, 9.31};

int ms_to_samples(double ms) {
  return static_cast<int>(std::lround(ms * kRate / 1000.0));
}

bool is_prime(int n) {
  if (n < 2) return false;
  for (int d = 2; d * d <= n; ++d) {
    if (n % d == 0) return false;
  }
  return true;
}

// Decay time at Nyquist relative to the broadband rt60, from 0.6 at the
// lowest damping cutoff to 1.0 at the highest.
double hf_decay_ratio(double damping_cutoff) {
  return 0.6 + 0.4 * (damping_cutoff - 2000.0) / 10000.0;
}

// The absorption pole must stay well inside the unit circle for short
// decays on long lines.
constexpr double kMaxAbsorptionPole = 0.6;

// +-1 sign patterns for injection and the two output taps; the output rows
// are mutually orthogonal for N a multiple of 4.
double input_sign(int i) { return (std::popcount(unsigned(i) * 5u + 3u) & 1) ? -1.0 : 1.0; }
double left_sign(int i) { return (i & 1) ? -1.0 : 1.0; }
double right_sign(int i) { return (i & 2) ? -1.0 : 1.0; }

}  // namespace

void ReverbPreset::validate() const {
  auto fail = [this](const std::string& what) {
    throw ReverbError("preset '" + preset_id + "': " + what);
  };
  if (!(rt60 >= 0.3 && rt60 <= 6.0)) fail("rt60 outside [0.3, 6.0] s");
  if (!(pre_delay_ms >= 0.0 && pre_delay_ms <= 120.0)) {
    fail("pre_delay outside [0, 120] ms");
  }
  if (fdn_size != 8 && fdn_size != 16) fail("fdn_size must be 8 or 16");
  if (static_cast<int>(delay_lengths.size()) != fdn_size) {
    fail("delay_lengths count differs from fdn_size");
  }
  const int lo = ms_to_samples(kMinDelayMs);
  const int hi = ms_to_samples(kMaxDelayMs);
  for (std::size_t i = 0; i < delay_lengths.size(); ++i) {
    if (delay_lengths[i] < lo || delay_lengths[i] > hi) {
      fail("delay length outside 20-90 ms");
    }
    for (std::size_t j = i + 1; j < delay_lengths.size(); ++j) {
      if (delay_lengths[i] == delay_lengths[j]) fail("delay lengths repeat");
      if (std::gcd(delay_lengths[i], delay_lengths[j]) != 1) {
        fail("delay lengths not mutually co-prime");
      }
    }
  }
  if (!(damping_cutoff >= 2000.0 && damping_cutoff <= 12000.0)) {
    fail("damping_cutoff outside [2000, 12000] Hz");
  }
  if (!(diffusion >= 0.0 && diffusion <= 1.0)) fail("diffusion outside [0, 1]");
  if (!(stereo_width >= 0.0 && stereo_width <= 1.0)) {
    fail("stereo_width outside [0, 1]");
  }
  for (const auto& tap : early_reflection_taps) {
    if (!(tap.delay_ms >= 0.0 && tap.delay_ms <= 200.0) ||
        !(std::abs(tap.gain) <= 1.0)) {
      fail("early reflection tap out of range");
    }
  }
}

PresetSpace PresetSpace::train() { return PresetSpace{}; }

PresetSpace PresetSpace::validation() {
  PresetSpace s;
  s.split = SplitTag::kVal;
  s.fdn_sizes = {16};
  return s;
}

void PresetSpace::validate() const {
  auto check = [](const ParamRange& r, double lo, double hi, const char* n) {
    if (!(r.lo <= r.hi && r.lo >= lo && r.hi <= hi)) {
      throw ReverbError(std::string("preset space: bad range for ") + n);
    }
  };
  check(rt60, 0.3, 6.0, "rt60");
  check(pre_delay_ms, 0.0, 120.0, "pre_delay_ms");
  check(delay_ms, kMinDelayMs, kMaxDelayMs, "delay_ms");
  check(damping_cutoff, 2000.0, 12000.0, "damping_cutoff");
  check(diffusion, 0.0, 1.0, "diffusion");
  check(stereo_width, 0.0, 1.0, "stereo_width");
  check(early_gain, 0.0, 1.0, "early_gain");
  check(early_delay_ms, 0.0, 200.0, "early_delay_ms");
  if (fdn_sizes.empty()) throw ReverbError("preset space: no fdn sizes");
  for (int n : fdn_sizes) {
    if (n != 8 && n != 16) throw ReverbError("preset space: fdn size");
  }
  if (max_early_taps < 0) throw ReverbError("preset space: early taps");
}

ReverbPreset sample_preset(const PresetSpace& space, std::uint64_t seed) {
  space.validate();
  Rng rng(mix_seed({seed, static_cast<std::uint64_t>(space.split), 0x7265ULL}));
  ReverbPreset p;
  p.preset_id = space.split_name() + "-" + std::to_string(seed);
  p.rt60 = std::exp(
      rng.uniform(std::log(space.rt60.lo), std::log(space.rt60.hi)));
  p.pre_delay_ms = rng.uniform(space.pre_delay_ms.lo, space.pre_delay_ms.hi);
  p.fdn_size = space.fdn_sizes[rng.index(space.fdn_sizes.size())];

  // Geometrically spread lengths, each snapped to an unused prime so the
  // set is pairwise co-prime.
  const int lo = ms_to_samples(space.delay_ms.lo);
  const int hi = ms_to_samples(space.delay_ms.hi);
  std::set<int> used;
  const double ratio = space.delay_ms.hi / space.delay_ms.lo;
  for (int i = 0; i < p.fdn_size; ++i) {
    double pos = (i + rng.uniform(0.15, 0.85)) / p.fdn_size;
    int target = ms_to_samples(space.delay_ms.lo * std::pow(ratio, pos));
    int up = target, down = target;
    int chosen = 0;
    while (chosen == 0) {
      if (up <= hi && is_prime(up) && !used.count(up)) {
        chosen = up;
      } else if (down >= lo && is_prime(down) && !used.count(down)) {
        chosen = down;
      }
      ++up;
      --down;
      if (up > hi && down < lo) throw ReverbError("delay range exhausted");
    }
    used.insert(chosen);
    p.delay_lengths.push_back(chosen);
  }

  p.damping_cutoff =
      rng.uniform(space.damping_cutoff.lo, space.damping_cutoff.hi);
  p.diffusion = rng.uniform(space.diffusion.lo, space.diffusion.hi);
  p.stereo_width = rng.uniform(space.stereo_width.lo, space.stereo_width.hi);
  const auto taps = rng.index(static_cast<std::uint64_t>(space.max_early_taps) + 1);
  for (std::uint64_t k = 0; k < taps; ++k) {
    EarlyTap tap;
    tap.delay_ms =
        rng.uniform(space.early_delay_ms.lo, space.early_delay_ms.hi);
    tap.gain = rng.uniform(space.early_gain.lo, space.early_gain.hi);
    p.early_reflection_taps.push_back(tap);
  }
  std::sort(p.early_reflection_taps.begin(), p.early_reflection_taps.end(),
            [](const EarlyTap& a, const EarlyTap& b) {
              return a.delay_ms < b.delay_ms;
            });
  p.validate();
  return p;
}

std::vector<ReverbPreset> generate_presets(const PresetSpace& space, int count,
                                           std::uint64_t seed) {
  std::vector<ReverbPreset> out;
  for (int i = 0; i < count; ++i) {
    ReverbPreset p = sample_preset(space, mix_seed(seed, i));
    char name[32];
    std::snprintf(name, sizeof(name), "%s-%02d", space.split_name().c_str(),
                  i);
    p.preset_id = name;
    out.push_back(std::move(p));
  }
  return out;
}

ReverbEngine::ReverbEngine(ReverbPreset preset) : preset_(std::move(preset)) {
  preset_.validate();
  const double alpha = hf_decay_ratio(preset_.damping_cutoff);
  for (int m : preset_.delay_lengths) {
    // Jot's first-order absorptive filter: DC decay rt60, Nyquist decay
    // alpha * rt60.
    double g = std::pow(10.0, -3.0 * m / (preset_.rt60 * kRate));
    double b = std::log(10.0) / 4.0 * std::log10(g) *
               (1.0 - 1.0 / (alpha * alpha));
    b = std::min(b, kMaxAbsorptionPole);
    loop_gain_.push_back(g);
    loop_pole_.push_back(b);
  }
  // Unit-energy late tail, measured past the point where it has decayed by
  // more than 70 dB.
  const auto len = static_cast<std::size_t>(
      std::ceil(1.2 * preset_.rt60 * kRate) +
      ms_to_samples(preset_.pre_delay_ms + 200.0));
  std::vector<double> impulse(len, 0.0);
  impulse[0] = 1.0;
  Waveform late = run(impulse, true);
  double energy = 0.0;
  for (double s : late.data()) energy += s * s;
  late_scale_ = energy > 0.0 ? 1.0 / std::sqrt(energy / 2.0) : 1.0;
}

double ReverbEngine::max_loop_gain() const {
  double m = 0.0;
  for (std::size_t i = 0; i < loop_gain_.size(); ++i) {
    // |H| peaks at DC for 0 <= b < 1.
    double b = loop_pole_[i];
    double dc = loop_gain_[i];
    double nyq = loop_gain_[i] * (1.0 - b) / (1.0 + b);
    m = std::max({m, dc, nyq});
  }
  return m;
}

std::vector<double> ReverbEngine::feedback_matrix() const {
  const int n = preset_.fdn_size;
  std::vector<double> a(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      a[r * n + c] = (r == c ? 1.0 : 0.0) - 2.0 / n;
    }
  }
  return a;
}

Waveform ReverbEngine::run(std::span<const double> mono,
                           bool late_only) const {
  const std::size_t frames = mono.size();
  const int n_lines = preset_.fdn_size;
  const std::size_t pre = ms_to_samples(preset_.pre_delay_ms);

  struct DelayLine {
    std::vector<double> buf;
    std::size_t pos = 0;
    double read() const { return buf[pos]; }
    void write(double v) {
      buf[pos] = v;
      pos = (pos + 1) % buf.size();
    }
  };
  std::vector<DelayLine> lines(n_lines);
  for (int i = 0; i < n_lines; ++i) {
    lines[i].buf.assign(preset_.delay_lengths[i], 0.0);
  }
  std::vector<DelayLine> diffusers;
  for (double ms : kDiffuserMs) {
    DelayLine d;
    d.buf.assign(ms_to_samples(ms), 0.0);
    diffusers.push_back(std::move(d));
  }
  const double ap_gain = 0.7 * preset_.diffusion;

  std::vector<std::size_t> tap_delay;
  for (const auto& tap : preset_.early_reflection_taps) {
    tap_delay.push_back(pre + ms_to_samples(tap.delay_ms));
  }

  const double in_norm = 1.0 / std::sqrt(static_cast<double>(n_lines));
  const double tone_pole =
      std::exp(-2.0 * M_PI * preset_.damping_cutoff / kRate);
  const double w = preset_.stereo_width;
  std::vector<double> filt_state(n_lines, 0.0), filt(n_lines);
  double tone_l = 0.0, tone_r = 0.0;

  Waveform out(2, frames, kCanonicalSampleRate);
  auto out_l = out.channel(0);
  auto out_r = out.channel(1);
  for (std::size_t n = 0; n < frames; ++n) {
    double x = n >= pre ? mono[n - pre] : 0.0;

    // Schroeder allpass chain: y = -g x + z^-m (x + g y).
    for (auto& d : diffusers) {
      double delayed = d.read();
      double v = x + ap_gain * delayed;
      double y = delayed - ap_gain * v;
      d.write(v);
      x = y;
    }

    double sum = 0.0;
    for (int i = 0; i < n_lines; ++i) {
      double o = lines[i].read();
      double b = loop_pole_[i];
      filt_state[i] = loop_gain_[i] * (1.0 - b) * o + b * filt_state[i];
      filt[i] = filt_state[i];
      sum += filt[i];
    }
    // Householder reflection I - (2/N) 1 1^T.
    const double shared = 2.0 / n_lines * sum;
    double late_l = 0.0, late_r = 0.0;
    for (int i = 0; i < n_lines; ++i) {
      lines[i].write(filt[i] - shared + input_sign(i) * in_norm * x);
      late_l += left_sign(i) * filt[i];
      late_r += right_sign(i) * filt[i];
    }
    late_l *= in_norm * late_scale_;
    late_r *= in_norm * late_scale_;
    const double mid = 0.5 * (late_l + late_r);
    const double side = 0.5 * (late_l - late_r);
    double l = mid + w * side;
    double r = mid - w * side;

    if (!late_only) {
      for (std::size_t k = 0; k < tap_delay.size(); ++k) {
        if (n < tap_delay[k]) continue;
        double v = preset_.early_reflection_taps[k].gain * mono[n - tap_delay[k]];
        // Alternate taps lean left and right by the stereo width.
        if (k % 2 == 0) {
          l += v;
          r += (1.0 - w) * v;
        } else {
          l += (1.0 - w) * v;
          r += v;
        }
      }
    }
    tone_l = (1.0 - tone_pole) * l + tone_pole * tone_l;
    tone_r = (1.0 - tone_pole) * r + tone_pole * tone_r;
    out_l[n] = tone_l;
    out_r[n] = tone_r;
  }
  return out;
}

Waveform ReverbEngine::process(const Waveform& dry) const {
  if (dry.sample_rate() != kCanonicalSampleRate) {
    throw ReverbError("reverb renders require 44100 Hz input, got " +
                      std::to_string(dry.sample_rate()));
  }
  if (dry.channels() == 1) return run(dry.channel(0), false);
  Waveform mono = dry.downmix();
  return run(mono.channel(0), false);
}

Waveform ReverbEngine::impulse_response(std::size_t length) const {
  if (static_cast<double>(length) < preset_.rt60 * kRate) {
    throw ReverbError("impulse response length shorter than rt60");
  }
  std::vector<double> impulse(length, 0.0);
  impulse[0] = 1.0;
  return run(impulse, false);
}

Waveform impulse_response(const ReverbPreset& p, std::size_t length) {
  return ReverbEngine(p).impulse_response(length);
}

Waveform render_wet(const Waveform& dry, const ReverbPreset& p) {
  return ReverbEngine(p).process(dry);
}

std::vector<double> schroeder_decay_db(const Waveform& ir) {
  std::vector<double> edc(ir.frames(), 0.0);
  double acc = 0.0;
  for (std::size_t i = ir.frames(); i-- > 0;) {
    for (int c = 0; c < ir.channels(); ++c) acc += ir.at(c, i) * ir.at(c, i);
    edc[i] = acc;
  }
  const double total = acc > 0.0 ? acc : 1.0;
  for (double& e : edc) {
    e = 10.0 * std::log10(std::max(e / total, 1e-300));
  }
  return edc;
}

double estimate_rt60(const Waveform& ir, double from_db, double to_db) {
  const auto edc = schroeder_decay_db(ir);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < edc.size(); ++i) {
    if (edc[i] > from_db || edc[i] < to_db) continue;
    double t = static_cast<double>(i) / ir.sample_rate();
    sx += t;
    sy += edc[i];
    sxx += t * t;
    sxy += t * edc[i];
    ++n;
  }
  if (n < 2) throw ReverbError("decay curve does not span the fit range");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (slope >= 0.0) throw ReverbError("decay curve is not decreasing");
  return -60.0 / slope;
}

std::string preset_to_json_line(const ReverbPreset& p) {
  nlohmann::ordered_json j;
  j["preset_id"] = p.preset_id;
  j["rt60"] = p.rt60;
  j["pre_delay_ms"] = p.pre_delay_ms;
  j["fdn_size"] = p.fdn_size;
  j["delay_lengths"] = p.delay_lengths;
  j["damping_cutoff"] = p.damping_cutoff;
  j["diffusion"] = p.diffusion;
  j["stereo_width"] = p.stereo_width;
  auto taps = nlohmann::ordered_json::array();
  for (const auto& t : p.early_reflection_taps) {
    taps.push_back({{"delay_ms", t.delay_ms}, {"gain", t.gain}});
  }
  j["early_reflection_taps"] = taps;
  return j.dump();
}

ReverbPreset preset_from_json_line(const std::string& line) {
  try {
    auto j = nlohmann::json::parse(line);
    ReverbPreset p;
    p.preset_id = j.at("preset_id").get<std::string>();
    p.rt60 = j.at("rt60").get<double>();
    p.pre_delay_ms = j.at("pre_delay_ms").get<double>();
    p.fdn_size = j.at("fdn_size").get<int>();
    p.delay_lengths = j.at("delay_lengths").get<std::vector<int>>();
    p.damping_cutoff = j.at("damping_cutoff").get<double>();
    p.diffusion = j.at("diffusion").get<double>();
    p.stereo_width = j.at("stereo_width").get<double>();
    for (const auto& t : j.at("early_reflection_taps")) {
      p.early_reflection_taps.push_back(
          {t.at("delay_ms").get<double>(), t.at("gain").get<double>()});
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ReverbError(std::string("malformed preset record: ") + e.what());
  }
}

void write_presets(const std::vector<ReverbPreset>& presets,
                   const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ReverbError("cannot write " + path.string());
  for (const auto& p : presets) f << preset_to_json_line(p) << '\n';
  if (!f) throw ReverbError("write failed for " + path.string());
}

std::vector<ReverbPreset> read_presets(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ReverbError("cannot open " + path.string());
  std::vector<ReverbPreset> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(preset_from_json_line(line));
  }
  return out;
}

}  // namespace reverbswap
