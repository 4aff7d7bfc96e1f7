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

#include <cmath>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "reverbswap/metrics.h"
#include "reverbswap/reverb.h"
#include "synth_vocal.h"

namespace rs = reverbswap;
using rs::Waveform;
using rs::testing::TempDir;

namespace {

constexpr std::size_t kThreeSeconds = 3 * 44100;

Waveform plus(const Waveform& a, const Waveform& b, double k = 1.0) {
  Waveform out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += k * b.data()[i];
  return out;
}

Waveform scaled(const Waveform& a, double k) {
  Waveform out = a;
  for (double& v : out.data()) v *= k;
  return out;
}

double energy(const Waveform& w) {
  double e = 0.0;
  for (double v : w.data()) e += v * v;
  return e;
}

// Noise at the requested SNR against `ref`.
Waveform noisy(const Waveform& ref, double snr_db, std::uint64_t seed) {
  const Waveform n = rs::testing::white_noise(ref, 1.0, seed);
  const double k = std::sqrt(energy(ref) / energy(n) / std::pow(10.0, snr_db / 10.0));
  return plus(ref, n, k);
}

// Direct per-channel SI-SDR, averaged.
double reference_si_sdr(const Waveform& est, const Waveform& ref) {
  double total = 0.0;
  for (int c = 0; c < ref.channels(); ++c) {
    double dot = 0.0, rr = 0.0;
    for (std::size_t i = 0; i < ref.frames(); ++i) {
      dot += est.at(c, i) * ref.at(c, i);
      rr += ref.at(c, i) * ref.at(c, i);
    }
    const double a = dot / rr;
    double t = 0.0, e = 0.0;
    for (std::size_t i = 0; i < ref.frames(); ++i) {
      const double target = a * ref.at(c, i);
      t += target * target;
      e += (est.at(c, i) - target) * (est.at(c, i) - target);
    }
    total += 10.0 * std::log10(t / e);
  }
  return total / ref.channels();
}

}  // namespace

TEST_CASE("si_sdr") {
  const Waveform ref = rs::testing::synth_vocal(20000, 1);
  const Waveform est = noisy(ref, 5.0, 2);

  SUBCASE("matches direct computation") {
    CHECK(rs::si_sdr(est, ref) == doctest::Approx(reference_si_sdr(est, ref)).epsilon(1e-9));
    CHECK(rs::si_sdr(est, ref) == doctest::Approx(5.0).epsilon(0.05));
  }
  SUBCASE("scale invariant") {
    for (double k : {0.01, 0.5, 3.0, -2.0}) {
      CHECK(std::abs(rs::si_sdr(scaled(est, k), ref) - rs::si_sdr(est, ref)) < 1e-6);
    }
  }
  SUBCASE("identical and rescaled signals hit the clamp") {
    CHECK(rs::si_sdr(ref, ref) == rs::kSiSdrClampDb);
    CHECK(rs::si_sdr(scaled(ref, 0.3), ref) == rs::kSiSdrClampDb);
  }
  SUBCASE("orthogonal noise of equal energy is 0 dB") {
    const Waveform n = rs::testing::white_noise(ref, 0.5, 3);
    Waveform e = ref;
    for (int c = 0; c < 2; ++c) {
      double dot = 0.0, rr = 0.0, nn = 0.0;
      for (std::size_t i = 0; i < ref.frames(); ++i) {
        dot += n.at(c, i) * ref.at(c, i);
        rr += ref.at(c, i) * ref.at(c, i);
      }
      std::vector<double> o(ref.frames());
      for (std::size_t i = 0; i < ref.frames(); ++i) {
        o[i] = n.at(c, i) - dot / rr * ref.at(c, i);
        nn += o[i] * o[i];
      }
      const double k = std::sqrt(rr / nn);
      for (std::size_t i = 0; i < ref.frames(); ++i) e.at(c, i) += k * o[i];
    }
    CHECK(std::abs(rs::si_sdr(e, ref)) < 1e-6);
  }
  SUBCASE("misuse is rejected") {
    CHECK_THROWS_AS(rs::si_sdr(ref.slice(0, 100), ref), rs::MetricError);
    CHECK_THROWS_AS(rs::si_sdr(ref, Waveform(2, 20000, 44100)), rs::MetricError);
  }
}

TEST_CASE("stoi") {
  const Waveform ref = rs::testing::synth_vocal(kThreeSeconds, 1);

  SUBCASE("identity and gain") {
    CHECK(std::abs(rs::stoi(ref, ref) - 1.0) < 1e-6);
    CHECK(std::abs(rs::stoi(scaled(ref, 0.5), ref) - 1.0) < 1e-6);
  }
  SUBCASE("decreases as noise rises") {
    const double s20 = rs::stoi(noisy(ref, 20.0, 4), ref);
    const double s10 = rs::stoi(noisy(ref, 10.0, 4), ref);
    const double s0 = rs::stoi(noisy(ref, 0.0, 4), ref);
    CHECK(1.0 > s20);
    CHECK(s20 > s10);
    CHECK(s10 > s0);
  }
  SUBCASE("agrees with an independent implementation") {
    // Reference values from the pystoi package on the same mono downmixes.
    const Waveform d1 = plus(ref, rs::testing::white_noise(ref, 0.05, 2));
    const Waveform d2 = plus(ref, rs::testing::white_noise(ref, 0.3, 3));
    const Waveform d3 = rs::render_wet(ref, rs::sample_preset(rs::PresetSpace::train(), 4));
    CHECK(std::abs(rs::stoi(d1, ref) - 0.7999891) < 5e-3);
    CHECK(std::abs(rs::stoi(d2, ref) - 0.5687175) < 5e-3);
    CHECK(std::abs(rs::stoi(d3, ref) - -0.0258597) < 5e-3);
  }
  SUBCASE("too short or silent input is rejected") {
    CHECK_THROWS_AS(rs::stoi(ref.slice(0, 10000), ref.slice(0, 10000)), rs::MetricError);
    CHECK_THROWS_AS(rs::stoi(ref, ref.slice(0, 50000)), rs::MetricError);
    CHECK_THROWS_AS(rs::stoi(ref, Waveform(2, kThreeSeconds, 44100)), rs::MetricError);
  }
}

TEST_CASE("srmr") {
  const Waveform dry = rs::testing::synth_vocal(kThreeSeconds, 5);

  SUBCASE("gain and channel order do not matter") {
    const double base = rs::srmr(dry);
    CHECK(base > 0.0);
    CHECK(std::abs(rs::srmr(scaled(dry, 0.25)) - base) < 1e-6 * base);
    Waveform swapped = dry;
    for (std::size_t i = 0; i < dry.frames(); ++i) {
      swapped.at(0, i) = dry.at(1, i);
      swapped.at(1, i) = dry.at(0, i);
    }
    CHECK(std::abs(rs::srmr(swapped) - base) < 1e-9 * base);
  }
  SUBCASE("dry speech scores above its 3 s reverberant render") {
    int ordered = 0;
    for (std::uint64_t k = 0; k < 20; ++k) {
      const Waveform v = rs::testing::synth_vocal(2 * 44100, 100 + k);
      auto p = rs::sample_preset(rs::PresetSpace::train(), 200 + k);
      p.rt60 = 3.0;
      ordered += rs::srmr(v) > rs::srmr(rs::render_wet(v, p));
    }
    CHECK(ordered >= 18);
  }
  SUBCASE("silence and short input are rejected") {
    CHECK_THROWS_AS(rs::srmr(Waveform(2, kThreeSeconds, 44100)), rs::MetricError);
    CHECK_THROWS_AS(rs::srmr(dry.slice(0, 100)), rs::MetricError);
  }
}

TEST_CASE("evaluation bundles") {
  const Waveform dry = rs::testing::synth_vocal(kThreeSeconds, 6);
  const Waveform wet = noisy(dry, 10.0, 7);

  const auto conv = rs::eval_conversion(wet, dry, "c1");
  REQUIRE(conv.size() == 1);
  CHECK(conv[0].name == "stoi");
  CHECK(conv[0].clip_id == "c1");
  CHECK(conv[0].value == rs::stoi(wet, dry));

  const auto der = rs::eval_dereverb(wet, dry, "c2");
  REQUIRE(der.size() == 3);
  CHECK(der[0].name == "srmr");
  CHECK(der[1].name == "stoi");
  CHECK(der[2].name == "si_sdr");
  CHECK(der[2].value == rs::si_sdr(wet, dry));
  CHECK_THROWS_AS(rs::eval_dereverb(wet.slice(0, 90000), dry, "x"), rs::MetricError);

  SUBCASE("external PESQ scorer") {
    CHECK_FALSE(rs::PesqScorer().score(dry, wet).has_value());
    const rs::PesqScorer echo("echo 3.25");
    REQUIRE(echo.available());
    CHECK(*echo.score(dry, wet) == 3.25);
    const auto with = rs::eval_conversion(wet, dry, "c3", echo);
    REQUIRE(with.size() == 2);
    CHECK(with[1].name == "pesq");
    CHECK_THROWS_AS(rs::PesqScorer("false").score(dry, wet), rs::MetricError);
    CHECK_THROWS_AS(rs::PesqScorer("true").score(dry, wet), rs::MetricError);
  }
}

TEST_CASE("report aggregates per condition and gamma") {
  rs::EvalReport rep("dereverb");
  rep.add("input", 0.4, {{"stoi", 0.5, "a"}, {"si_sdr", 2.0, "a"}});
  rep.add("input", 0.4, {{"stoi", 0.7, "b"}, {"si_sdr", 4.0, "b"}});
  rep.add("model", 0.4, {{"stoi", 0.9, "a"}});
  rep.add("input", std::nullopt, {{"stoi", 0.1, "a"}});

  const auto rows = rep.rows();
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].condition == "input");
  CHECK(*rows[0].gamma == 0.4);
  CHECK(rows[0].mean.at("stoi") == doctest::Approx(0.6));
  CHECK(rows[0].mean.at("si_sdr") == doctest::Approx(3.0));
  CHECK(rows[0].count.at("stoi") == 2);
  CHECK(rows[1].condition == "model");
  CHECK_FALSE(rows[2].gamma.has_value());

  const std::string table = rep.table({"stoi", "si_sdr"});
  CHECK(table.find("condition") != std::string::npos);
  CHECK(table.find("60.000") != std::string::npos);  // STOI in percent
  CHECK(table.find("n/a") != std::string::npos);

  const auto lines = rep.json_lines();
  REQUIRE(lines.size() == 3);
  const auto j = nlohmann::json::parse(lines[0]);
  CHECK(j["mode"] == "dereverb");
  CHECK(j["clips"] == 2);
  CHECK(nlohmann::json::parse(lines[2])["gamma"].is_null());

  TempDir dir("report");
  rep.write(dir / "r.txt", {"stoi"});
  CHECK(std::filesystem::exists(dir / "r.txt"));
  CHECK(std::filesystem::exists(dir / "r.txt.jsonl"));
}
