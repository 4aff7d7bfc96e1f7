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

#include "reverbswap/metrics.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "reverbswap/fft.h"

namespace reverbswap {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

std::vector<double> mono_at(const Waveform& w, int rate) {
  Waveform m = w.channels() == 1 ? w : w.downmix();
  if (m.sample_rate() != rate) m = resample(m, rate);
  auto c = m.channel(0);
  return {c.begin(), c.end()};
}

// Symmetric Hann of length n without its zero end points.
std::vector<double> hann_inner(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * (i + 1) / (n + 1));
  }
  return w;
}

}  // namespace

double si_sdr(const Waveform& est, const Waveform& ref) {
  if (est.channels() != ref.channels() || est.frames() != ref.frames()) {
    throw MetricError("si_sdr: estimate and reference differ in shape");
  }
  if (ref.empty()) throw MetricError("si_sdr: empty input");
  double total = 0.0;
  for (int c = 0; c < ref.channels(); ++c) {
    auto s = ref.channel(c);
    auto e = est.channel(c);
    double ss = 0.0, es = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      ss += s[i] * s[i];
      es += e[i] * s[i];
    }
    if (ss <= 0.0) throw MetricError("si_sdr: zero reference");
    const double alpha = es / ss;
    double target = 0.0, resid = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double t = alpha * s[i];
      target += t * t;
      resid += (t - e[i]) * (t - e[i]);
    }
    double db;
    if (resid <= 0.0) {
      db = kSiSdrClampDb;
    } else if (target <= 0.0) {
      db = -kSiSdrClampDb;
    } else {
      db = std::clamp(10.0 * std::log10(target / resid), -kSiSdrClampDb,
                      kSiSdrClampDb);
    }
    total += db;
  }
  return total / ref.channels();
}

// ---------------------------------------------------------------------------
// STOI

namespace {

constexpr int kStoiRate = 10000;
constexpr int kStoiFrame = 256;
constexpr int kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr int kStoiSegment = 30;
constexpr double kStoiBetaDb = -15.0;
constexpr double kStoiDynRange = 40.0;

// Drops frames of x more than the dynamic range below its loudest frame and
// re-synthesizes both signals from the frames kept.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const int len = kStoiFrame, hop = kStoiFrame / 2;
  const auto w = hann_inner(len);
  const std::size_t n = std::min(x.size(), y.size());
  if (n < static_cast<std::size_t>(len)) {
    throw MetricError("stoi: input shorter than one analysis frame");
  }
  const std::size_t frames = (n - len) / hop + 1;
  std::vector<double> energy(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double e = 0.0;
    for (int i = 0; i < len; ++i) {
      const double v = w[i] * x[f * hop + i];
      e += v * v;
    }
    energy[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double top = *std::max_element(energy.begin(), energy.end());
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < frames; ++f) {
    if (top - kStoiDynRange - energy[f] < 0.0) keep.push_back(f);
  }
  const std::size_t out_len = keep.empty() ? 0 : (keep.size() - 1) * hop + len;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const std::size_t src = keep[k] * hop, dst = k * hop;
    for (int i = 0; i < len; ++i) {
      xs[dst + i] += w[i] * x[src + i];
      ys[dst + i] += w[i] * y[src + i];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

// Third-octave band envelopes, [band][frame].
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x,
                                                const RealFft& fft) {
  const int hop = kStoiFrame / 2;
  const auto w = hann_inner(kStoiFrame);
  const int bins = kStoiFft / 2 + 1;
  static const auto bands = [] {
    std::array<std::pair<int, int>, kStoiBands> b{};
    std::vector<double> f(bins);
    for (int i = 0; i < bins; ++i) f[i] = double(kStoiRate) * i / kStoiFft;
    auto nearest = [&](double target) {
      int best = 0;
      for (int i = 1; i < bins; ++i) {
        if ((f[i] - target) * (f[i] - target) <
            (f[best] - target) * (f[best] - target)) {
          best = i;
        }
      }
      return best;
    };
    for (int k = 0; k < kStoiBands; ++k) {
      b[k] = {nearest(kStoiMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0)),
              nearest(kStoiMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0))};
    }
    return b;
  }();

  const std::size_t frames =
      x.size() < static_cast<std::size_t>(kStoiFrame)
          ? 0
          : (x.size() - kStoiFrame) / hop + 1;
  std::vector<std::vector<double>> env(kStoiBands, std::vector<double>(frames));
  std::vector<double> buf(kStoiFft);
  std::vector<std::complex<double>> spec(bins);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int i = 0; i < kStoiFrame; ++i) buf[i] = w[i] * x[f * hop + i];
    fft.forward(buf, spec);
    for (int k = 0; k < kStoiBands; ++k) {
      double e = 0.0;
      for (int i = bands[k].first; i < bands[k].second; ++i) e += std::norm(spec[i]);
      env[k][f] = std::sqrt(e);
    }
  }
  return env;
}

}  // namespace

double stoi(const Waveform& est, const Waveform& ref) {
  if (est.frames() != ref.frames() || est.sample_rate() != ref.sample_rate()) {
    throw MetricError("stoi: estimate and reference differ in length or rate");
  }
  if (ref.peak() == 0.0) throw MetricError("stoi: all-silent reference");
  std::vector<double> x = mono_at(ref, kStoiRate);
  std::vector<double> y = mono_at(est, kStoiRate);
  const std::size_t min_len =
      static_cast<std::size_t>(kStoiSegment - 1) * (kStoiFrame / 2) + kStoiFrame;
  if (x.size() < min_len) {
    throw MetricError("stoi: input shorter than 384 ms");
  }
  remove_silent_frames(x, y);

  RealFft fft(kStoiFft);
  const auto xe = band_envelopes(x, fft);
  const auto ye = band_envelopes(y, fft);
  const std::size_t frames = xe[0].size();
  if (frames < static_cast<std::size_t>(kStoiSegment)) {
    throw MetricError("stoi: fewer than 30 active frames");
  }

  const double clip = std::pow(10.0, -kStoiBetaDb / 20.0);
  double total = 0.0;
  std::size_t count = 0;
  std::array<double, kStoiSegment> xs{}, ys{};
  for (std::size_t m = kStoiSegment; m <= frames; ++m) {
    for (int k = 0; k < kStoiBands; ++k) {
      double nx = 0.0, ny = 0.0;
      for (int j = 0; j < kStoiSegment; ++j) {
        xs[j] = xe[k][m - kStoiSegment + j];
        ys[j] = ye[k][m - kStoiSegment + j];
        nx += xs[j] * xs[j];
        ny += ys[j] * ys[j];
      }
      const double g = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      double mx = 0.0, my = 0.0;
      for (int j = 0; j < kStoiSegment; ++j) {
        ys[j] = std::min(ys[j] * g, xs[j] * (1.0 + clip));
        mx += xs[j];
        my += ys[j];
      }
      mx /= kStoiSegment;
      my /= kStoiSegment;
      double sx = 0.0, sy = 0.0, sxy = 0.0;
      for (int j = 0; j < kStoiSegment; ++j) {
        xs[j] -= mx;
        ys[j] -= my;
        sx += xs[j] * xs[j];
        sy += ys[j] * ys[j];
        sxy += xs[j] * ys[j];
      }
      total += sxy / ((std::sqrt(sx) + kEps) * (std::sqrt(sy) + kEps));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// SRMR

namespace {

constexpr int kSrmrRate = 16000;
constexpr int kCochlearChannels = 23;
constexpr double kCochlearLowHz = 125.0;
constexpr int kModChannels = 8;
constexpr double kModLowHz = 4.0;
constexpr double kModHighHz = 128.0;
constexpr double kModQ = 2.0;
constexpr double kSrmrWindowS = 0.256;
constexpr double kSrmrHopS = 0.064;
constexpr double kEarQ = 9.26449;
constexpr double kMinBw = 24.7;

double erb(double f) { return f / kEarQ + kMinBw; }

// ERB-rate spaced centre frequencies from low_hz to rate/2, ascending.
std::vector<double> cochlear_centres() {
  const double hi = kSrmrRate / 2.0;
  std::vector<double> cf(kCochlearChannels);
  for (int i = 0; i < kCochlearChannels; ++i) {
    // Same spacing as the usual gammatone design, listed low to high.
    const int k = kCochlearChannels - i;
    cf[i] = -(kEarQ * kMinBw) +
            std::exp(k * (-std::log(hi + kEarQ * kMinBw) +
                          std::log(kCochlearLowHz + kEarQ * kMinBw)) /
                     kCochlearChannels) *
                (hi + kEarQ * kMinBw);
  }
  return cf;
}

std::array<double, kModChannels> modulation_centres() {
  std::array<double, kModChannels> cf{};
  const double step = std::pow(kModHighHz / kModLowHz, 1.0 / (kModChannels - 1));
  for (int i = 0; i < kModChannels; ++i) cf[i] = kModLowHz * std::pow(step, i);
  return cf;
}

// Temporal envelope of one gammatone channel: four cascaded complex
// one-pole resonators give an analytic band signal whose magnitude is the
// envelope.
std::vector<double> gammatone_envelope(const std::vector<double>& x, double cf) {
  const double b = 1.019 * 2.0 * M_PI * erb(cf) / kSrmrRate;
  const std::complex<double> pole =
      std::exp(-b) * std::polar(1.0, 2.0 * M_PI * cf / kSrmrRate);
  const double gain = 1.0 - std::exp(-b);
  std::array<std::complex<double>, 4> state{};
  std::vector<double> env(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    std::complex<double> v = x[n];
    for (auto& s : state) {
      s = gain * v + pole * s;
      v = s;
    }
    env[n] = std::abs(v);
  }
  return env;
}

struct Biquad {
  double b0, b1, b2, a1, a2;
};

Biquad modulation_filter(double cf) {
  const double w0 = std::tan(M_PI * cf / kSrmrRate);
  const double bw = w0 / kModQ;
  const double a0 = 1.0 + bw + w0 * w0;
  return {bw / a0, 0.0, -bw / a0, (2.0 * w0 * w0 - 2.0) / a0,
          (1.0 - bw + w0 * w0) / a0};
}

std::vector<double> filter(const Biquad& f, const std::vector<double>& x) {
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double v = f.b0 * x[n] + f.b1 * x1 + f.b2 * x2 - f.a1 * y1 - f.a2 * y2;
    x2 = x1;
    x1 = x[n];
    y2 = y1;
    y1 = v;
    y[n] = v;
  }
  return y;
}

}  // namespace

double srmr(const Waveform& w) {
  const std::vector<double> x = mono_at(w, kSrmrRate);
  double energy_in = 0.0;
  for (double v : x) energy_in += v * v;
  if (!(energy_in > 0.0)) throw MetricError("srmr: zero-energy input");

  const int win = static_cast<int>(std::lround(kSrmrWindowS * kSrmrRate));
  const int hop = static_cast<int>(std::lround(kSrmrHopS * kSrmrRate));
  if (x.size() < static_cast<std::size_t>(win)) {
    throw MetricError("srmr: input shorter than one 256 ms frame");
  }
  const std::size_t frames = (x.size() - win) / hop + 1;
  std::vector<double> hw(win);
  for (int i = 0; i < win; ++i) {
    hw[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));
  }

  const auto cfs = cochlear_centres();
  const auto mcf = modulation_centres();
  std::array<Biquad, kModChannels> mod{};
  for (int k = 0; k < kModChannels; ++k) mod[k] = modulation_filter(mcf[k]);

  // Frame-averaged modulation energy per [cochlear][modulation] channel.
  std::vector<std::array<double, kModChannels>> avg(kCochlearChannels);
  for (int j = 0; j < kCochlearChannels; ++j) {
    const auto env = gammatone_envelope(x, cfs[j]);
    for (int k = 0; k < kModChannels; ++k) {
      const auto y = filter(mod[k], env);
      double sum = 0.0;
      for (std::size_t f = 0; f < frames; ++f) {
        const double* p = y.data() + f * hop;
        for (int i = 0; i < win; ++i) sum += (hw[i] * p[i]) * (hw[i] * p[i]);
      }
      avg[j][k] = sum / static_cast<double>(frames);
    }
  }

  // Highest modulation band counted as reverberant follows the bandwidth of
  // the cochlear channel below which 90% of the energy lies.
  double total = 0.0;
  std::vector<double> per_channel(kCochlearChannels, 0.0);
  for (int j = 0; j < kCochlearChannels; ++j) {
    for (int k = 0; k < kModChannels; ++k) per_channel[j] += avg[j][k];
    total += per_channel[j];
  }
  double cum = 0.0;
  int k90 = kCochlearChannels - 1;
  for (int j = 0; j < kCochlearChannels; ++j) {
    cum += per_channel[j];
    if (cum * 100.0 / total > 90.0) {
      k90 = j;
      break;
    }
  }
  const double bw = erb(cfs[k90]);
  std::array<double, kModChannels> lower{};
  for (int k = 0; k < kModChannels; ++k) {
    const double b0 = std::tan(M_PI * mcf[k] / kSrmrRate) / kModQ;
    lower[k] = mcf[k] - b0 * kSrmrRate / (2.0 * M_PI);
  }
  int k_star = 5;
  if (bw > lower[7]) {
    k_star = 8;
  } else if (bw > lower[6]) {
    k_star = 7;
  } else if (bw > lower[5]) {
    k_star = 6;
  }

  double low = 0.0, high = 0.0;
  for (int j = 0; j < kCochlearChannels; ++j) {
    for (int k = 0; k < 4; ++k) low += avg[j][k];
    for (int k = 4; k < k_star; ++k) high += avg[j][k];
  }
  if (!(high > 0.0)) throw MetricError("srmr: no high-modulation energy");
  return low / high;
}

// ---------------------------------------------------------------------------
// PESQ hook

std::optional<double> PesqScorer::score(const Waveform& ref,
                                        const Waveform& deg) const {
  if (!available()) return std::nullopt;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("reverbswap_pesq_" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  const auto ref_path = dir / "ref.wav";
  const auto deg_path = dir / "deg.wav";
  save_wav(resample(ref.downmix(), 16000), ref_path);
  save_wav(resample(deg.downmix(), 16000), deg_path);
  const std::string cmd = command_ + " '" + ref_path.string() + "' '" +
                          deg_path.string() + "'";
  std::string output;
  int status = -1;
  if (FILE* pipe = popen(cmd.c_str(), "r")) {
    char buf[256];
    while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
    status = pclose(pipe);
  }
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  if (status != 0) throw MetricError("PESQ command failed: " + command_);
  std::istringstream in(output);
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used == tok.size()) return v;
    } catch (const std::exception&) {
    }
  }
  throw MetricError("PESQ command printed no score");
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<MetricResult> eval_conversion(const Waveform& output,
                                          const Waveform& target,
                                          const std::string& clip_id,
                                          const PesqScorer& pesq) {
  if (output.frames() != target.frames() ||
      output.sample_rate() != target.sample_rate()) {
    throw MetricError("eval_conversion: output and target are misaligned");
  }
  std::vector<MetricResult> out{{"stoi", stoi(output, target), clip_id}};
  if (auto p = pesq.score(target, output)) out.push_back({"pesq", *p, clip_id});
  return out;
}

std::vector<MetricResult> eval_dereverb(const Waveform& signal,
                                        const Waveform& dry,
                                        const std::string& clip_id,
                                        const PesqScorer& pesq) {
  if (signal.frames() != dry.frames() ||
      signal.sample_rate() != dry.sample_rate()) {
    throw MetricError("eval_dereverb: signal and dry source are misaligned");
  }
  std::vector<MetricResult> out{
      {"srmr", srmr(signal), clip_id},
      {"stoi", stoi(signal, dry), clip_id},
      {"si_sdr", si_sdr(signal, dry.channels() == signal.channels()
                                    ? dry
                                    : dry.to_stereo()),
       clip_id},
  };
  if (auto p = pesq.score(dry, signal)) out.push_back({"pesq", *p, clip_id});
  return out;
}

void EvalReport::add(const std::string& condition, std::optional<double> gamma,
                     const std::vector<MetricResult>& results) {
  const std::pair<std::string, double> key{condition, gamma.value_or(-1.0)};
  if (!cells_.count(key)) order_.emplace_back(condition, gamma);
  Cell& c = cells_[key];
  for (const auto& r : results) {
    c.sum[r.name] += r.value;
    c.count[r.name] += 1;
  }
}

std::vector<EvalReport::Row> EvalReport::rows() const {
  std::vector<Row> out;
  for (const auto& [cond, gamma] : order_) {
    const Cell& c = cells_.at({cond, gamma.value_or(-1.0)});
    Row r{cond, gamma, {}, c.count};
    for (const auto& [name, s] : c.sum) r.mean[name] = s / c.count.at(name);
    out.push_back(std::move(r));
  }
  return out;
}

std::string EvalReport::table(const std::vector<std::string>& columns) const {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-12s %6s", "condition", "gamma");
  out << buf;
  for (const auto& c : columns) {
    std::snprintf(buf, sizeof(buf), " %9s", c.c_str());
    out << buf;
  }
  out << '\n';
  for (const auto& r : rows()) {
    std::snprintf(buf, sizeof(buf), "%-12s %6s", r.condition.c_str(),
                  r.gamma ? (std::to_string(*r.gamma).substr(0, 4)).c_str() : "-");
    out << buf;
    for (const auto& c : columns) {
      auto it = r.mean.find(c);
      if (it == r.mean.end()) {
        std::snprintf(buf, sizeof(buf), " %9s", "n/a");
      } else {
        // STOI is reported as a percentage.
        const double v = c == "stoi" ? 100.0 * it->second : it->second;
        std::snprintf(buf, sizeof(buf), " %9.3f", v);
      }
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> EvalReport::json_lines() const {
  std::vector<std::string> out;
  for (const auto& r : rows()) {
    nlohmann::ordered_json j;
    j["mode"] = mode_;
    j["condition"] = r.condition;
    j["gamma"] = r.gamma ? nlohmann::ordered_json(*r.gamma) : nlohmann::ordered_json();
    for (const auto& [name, v] : r.mean) j[name] = v;
    j["clips"] = r.count.empty() ? 0 : r.count.begin()->second;
    out.push_back(j.dump());
  }
  return out;
}

void EvalReport::write(const std::filesystem::path& path,
                       const std::vector<std::string>& columns) const {
  std::ofstream table_out(path, std::ios::trunc);
  if (!table_out) throw MetricError("cannot write report " + path.string());
  table_out << table(columns);
  auto jsonl = path;
  jsonl += ".jsonl";
  std::ofstream lines(jsonl, std::ios::trunc);
  if (!lines) throw MetricError("cannot write report " + jsonl.string());
  for (const auto& l : json_lines()) lines << l << '\n';
}

}  // namespace reverbswap
