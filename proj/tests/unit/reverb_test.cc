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

#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "reverbswap/reverb.h"
#include "reverbswap/rng.h"
#include "synth_vocal.h"

namespace rs = reverbswap;
using rs::testing::TempDir;

namespace {

// Independent Schroeder integration and least-squares T30 fit.
double t30_rt60(const rs::Waveform& ir) {
  std::vector<double> e(ir.frames());
  double acc = 0.0;
  for (std::size_t i = ir.frames(); i-- > 0;) {
    acc += ir.at(0, i) * ir.at(0, i) + ir.at(1, i) * ir.at(1, i);
    e[i] = acc;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double db = 10.0 * std::log10(e[i] / acc);
    if (db > -5.0 || db < -35.0) continue;
    const double t = i / 44100.0;
    sx += t;
    sy += db;
    sxx += t * t;
    sxy += t * db;
    n += 1;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -60.0 / slope;
}

double max_abs_diff(const rs::Waveform& a, const rs::Waveform& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

// Fraction of energy held by the largest `frac` share of samples.
double energy_concentration(const rs::Waveform& ir, std::size_t from,
                            std::size_t to, double frac) {
  std::vector<double> e;
  double total = 0.0;
  for (std::size_t i = from; i < to; ++i) {
    const double v = ir.at(0, i) * ir.at(0, i) + ir.at(1, i) * ir.at(1, i);
    e.push_back(v);
    total += v;
  }
  std::sort(e.rbegin(), e.rend());
  double top = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(frac * e.size()); ++i) {
    top += e[i];
  }
  return top / total;
}

}  // namespace

TEST_CASE("sampling is deterministic and stays in range") {
  const auto space = rs::PresetSpace::train();
  CHECK(rs::sample_preset(space, 42) == rs::sample_preset(space, 42));
  CHECK_FALSE(rs::sample_preset(space, 42) == rs::sample_preset(space, 43));
  const auto presets = rs::generate_presets(space, rs::kTrainPresetCount, 9);
  REQUIRE(presets.size() == 36);
  std::set<std::string> ids;
  for (const auto& p : presets) {
    ids.insert(p.preset_id);
    CHECK(space.rt60.contains(p.rt60));
    CHECK(space.pre_delay_ms.contains(p.pre_delay_ms));
    CHECK(space.damping_cutoff.contains(p.damping_cutoff));
    CHECK(space.diffusion.contains(p.diffusion));
    CHECK(space.stereo_width.contains(p.stereo_width));
    CHECK(p.fdn_size == 8);
    CHECK(std::set<int>(p.delay_lengths.begin(), p.delay_lengths.end()).size() ==
          p.delay_lengths.size());
    CHECK_NOTHROW(p.validate());
  }
  CHECK(ids.size() == 36);
}

TEST_CASE("rt60 draws cover the configured span") {
  const auto space = rs::PresetSpace::train();
  double lo = 1e9, hi = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double r = rs::sample_preset(space, i).rt60;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  CHECK((hi - lo) / (space.rt60.hi - space.rt60.lo) >= 0.9);
}

TEST_CASE("train and validation spaces differ in network size") {
  const auto train = rs::generate_presets(rs::PresetSpace::train(), 36, 1);
  const auto val = rs::generate_presets(rs::PresetSpace::validation(), 4, 1);
  std::set<int> train_sizes, val_sizes;
  for (const auto& p : train) train_sizes.insert(p.fdn_size);
  for (const auto& p : val) val_sizes.insert(p.fdn_size);
  for (int n : val_sizes) CHECK(train_sizes.count(n) == 0);
  CHECK(val.front().preset_id == "val-00");
}

TEST_CASE("feedback matrix is orthogonal and the network is stable") {
  for (const auto& space : {rs::PresetSpace::train(), rs::PresetSpace::validation()}) {
    for (const auto& p : rs::generate_presets(space, 10, 3)) {
      const rs::ReverbEngine eng(p);
      const auto a = eng.feedback_matrix();
      const int n = p.fdn_size;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          double dot = 0.0;
          for (int k = 0; k < n; ++k) dot += a[i * n + k] * a[j * n + k];
          CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
        }
      }
      CHECK(eng.max_loop_gain() < 1.0);
    }
  }
}

TEST_CASE("preset validation rejects out-of-range fields") {
  auto p = rs::sample_preset(rs::PresetSpace::train(), 5);
  auto bad = p;
  bad.rt60 = 10.0;
  CHECK_THROWS_AS(bad.validate(), rs::ReverbError);
  bad = p;
  bad.delay_lengths[1] = bad.delay_lengths[0];
  CHECK_THROWS_AS(bad.validate(), rs::ReverbError);
  bad = p;
  bad.fdn_size = 12;
  CHECK_THROWS_AS(bad.validate(), rs::ReverbError);
}

TEST_CASE("impulse response: pre-delay silence and rt60") {
  const auto presets = rs::generate_presets(rs::PresetSpace::train(), 6, 17);
  for (const auto& p : presets) {
    const std::size_t len = static_cast<std::size_t>(2.0 * p.rt60 * 44100) + 8820;
    const rs::Waveform ir = rs::impulse_response(p, len);
    const auto pre = static_cast<std::size_t>(std::lround(p.pre_delay_ms * 44.1));
    for (std::size_t i = 0; i < pre; ++i) {
      REQUIRE(ir.at(0, i) == 0.0);
      REQUIRE(ir.at(1, i) == 0.0);
    }
    const double measured = t30_rt60(ir);
    CHECK(std::abs(measured - p.rt60) <= 0.15 * p.rt60);
    // The library's estimator agrees with the independent fit.
    CHECK(rs::estimate_rt60(ir, -5.0, -35.0) ==
          doctest::Approx(measured).epsilon(1e-6));
  }
}

TEST_CASE("no diffusion with one tap gives a sparse impulse train") {
  auto p = rs::sample_preset(rs::PresetSpace::train(), 23);
  p.rt60 = 1.0;
  p.damping_cutoff = 12000.0;
  p.early_reflection_taps = {{5.0, 0.3}};
  p.diffusion = 0.0;
  const auto pre = static_cast<std::size_t>(std::lround(p.pre_delay_ms * 44.1));
  const std::size_t span = 3 * *std::max_element(p.delay_lengths.begin(),
                                                 p.delay_lengths.end());
  const rs::Waveform sparse = rs::impulse_response(p, 88200);
  p.diffusion = 1.0;
  const rs::Waveform dense = rs::impulse_response(p, 88200);
  const double c_sparse = energy_concentration(sparse, pre, pre + span, 0.05);
  const double c_dense = energy_concentration(dense, pre, pre + span, 0.05);
  CHECK(c_sparse > 0.8);
  CHECK(c_sparse > c_dense);
  // Decaying: each later window carries less energy.
  double prev = 1e300;
  for (int k = 0; k < 4; ++k) {
    double e = 0.0;
    for (std::size_t i = pre + k * 11025; i < pre + (k + 1) * 11025; ++i) {
      e += sparse.at(0, i) * sparse.at(0, i) + sparse.at(1, i) * sparse.at(1, i);
    }
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("render_wet is a linear time-invariant filter") {
  const auto p = rs::sample_preset(rs::PresetSpace::train(), 31);
  const rs::Waveform x = rs::testing::synth_vocal(30000, 1);
  const rs::Waveform y = rs::testing::synth_vocal(30000, 2);

  SUBCASE("unit impulse reproduces the impulse response") {
    rs::Waveform imp(1, 30000, 44100);
    imp.at(0, 0) = 1.0;
    const rs::Waveform ir = rs::impulse_response(p, 30000 > p.rt60 * 44100
                                                        ? 30000
                                                        : p.rt60 * 44100 + 1);
    const rs::Waveform wet = rs::render_wet(imp, p);
    CHECK(max_abs_diff(wet, ir.slice(0, 30000)) == 0.0);
  }
  SUBCASE("wet output is truncated to the dry length") {
    CHECK(rs::render_wet(x, p).frames() == x.frames());
  }
  SUBCASE("homogeneity") {
    rs::Waveform ax = x;
    for (double& v : ax.data()) v *= 0.37;
    rs::Waveform expect = rs::render_wet(x, p);
    for (double& v : expect.data()) v *= 0.37;
    CHECK(max_abs_diff(rs::render_wet(ax, p), expect) < 1e-6);
  }
  SUBCASE("superposition") {
    rs::Waveform sum = x;
    for (std::size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] += y.data()[i];
    rs::Waveform expect = rs::render_wet(x, p);
    const rs::Waveform wy = rs::render_wet(y, p);
    for (std::size_t i = 0; i < expect.data().size(); ++i) expect.data()[i] += wy.data()[i];
    CHECK(max_abs_diff(rs::render_wet(sum, p), expect) < 1e-6);
  }
  SUBCASE("shift invariance") {
    const std::size_t d = 777;
    rs::Waveform shifted(2, x.frames(), 44100);
    for (int c = 0; c < 2; ++c) {
      for (std::size_t i = d; i < x.frames(); ++i) shifted.at(c, i) = x.at(c, i - d);
    }
    const rs::Waveform a = rs::render_wet(x, p);
    const rs::Waveform b = rs::render_wet(shifted, p);
    double worst = 0.0;
    for (int c = 0; c < 2; ++c) {
      for (std::size_t i = d; i < x.frames(); ++i) {
        worst = std::max(worst, std::abs(b.at(c, i) - a.at(c, i - d)));
      }
    }
    CHECK(worst < 1e-9);
  }
  SUBCASE("finite energy for every preset") {
    for (const auto& q : rs::generate_presets(rs::PresetSpace::validation(), 4, 2)) {
      CHECK(rs::impulse_response(q, 6 * 44100 + 10).all_finite());
    }
  }
  SUBCASE("other sample rates are rejected") {
    CHECK_THROWS_AS(rs::render_wet(rs::Waveform(1, 100, 16000), p), rs::ReverbError);
  }
}

TEST_CASE("preset manifest round trip is exact") {
  TempDir dir("presets");
  const auto presets = rs::generate_presets(rs::PresetSpace::train(), 36, 4);
  rs::write_presets(presets, dir / "p.jsonl");
  CHECK(rs::read_presets(dir / "p.jsonl") == presets);
  CHECK_THROWS_AS(rs::preset_from_json_line("{\"rt60\": 1"), rs::ReverbError);
}
