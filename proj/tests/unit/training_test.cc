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
#include <string>
#include <vector>

#include "doctest.h"
#include "reverbswap/training.h"
#include "synth_vocal.h"

namespace rs = reverbswap;
using rs::Tensor;
using rs::testing::TempDir;

namespace {

// Small enough to take many optimizer steps per second.
const rs::StftConfig kStft{128, 32, 128, true};
constexpr std::size_t kClip = 1024;

rs::ModelConfig small_model() {
  rs::ModelConfig m;
  m.channels = {4, 8, 16};
  m.input_bins = 64;
  m.input_frames = 32;
  return m;
}

rs::TrainConfig small_train() {
  rs::TrainConfig c;
  c.adv_start_epoch = 2;
  c.total_epochs = 3;
  c.batch_size = 2;
  c.seed = 7;
  return c;
}

rs::QuadTensors<float> make_quad(std::uint64_t seed, double g1, double g2) {
  const rs::Waveform a = rs::testing::synth_vocal(kClip, seed);
  const rs::Waveform b = rs::testing::synth_vocal(kClip, seed + 100);
  const auto presets = rs::generate_presets(rs::PresetSpace::train(), 2, seed);
  const auto q = rs::build_quad(a, b, presets[0], presets[1], g1, g2,
                                rs::QuadOptions{kClip, "a", "b"});
  return rs::quad_tensors<float>(q, kStft);
}

std::vector<rs::QuadTensors<float>> make_batch() {
  return {make_quad(1, 0.3, 0.7), make_quad(2, 0.05, 0.5)};
}

std::map<std::string, Tensor<float>> params_of(rs::ReverbSwapNet<float>& net,
                                               bool discriminator) {
  std::map<std::string, Tensor<float>> out;
  for (auto* p : discriminator ? net.discriminator_params() : net.generator_params()) {
    out[p->name] = p->value;
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(f, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("spectral loss is mean L1 plus mean squared error") {
  const Tensor<float> t({1, 2, 2}, {1, 2, 3, 4});
  CHECK(rs::spec_loss(t, t) == 0.0);
  // Two of four entries off by eps: eps/2 + eps^2/2.
  for (double eps : {0.5, 0.25, 2.0}) {
    const Tensor<float> p({1, 2, 2}, {1, 2 + float(eps), 3, 4 - float(eps)});
    CHECK(rs::spec_loss(p, t) == doctest::Approx(eps / 2 + eps * eps / 2).epsilon(1e-12));
  }
  CHECK_THROWS_AS(rs::spec_loss(t, Tensor<float>({1, 4, 1})), rs::ShapeError);

  rs::Tape<float> tape;
  const Tensor<float> p({1, 2, 2}, {0, 2, 5, 4});
  const rs::Var v = rs::spec_loss(tape, tape.constant(p), tape.constant(t));
  CHECK(tape.value(v)[0] == doctest::Approx(rs::spec_loss(p, t)));
}

TEST_CASE("latent loss compares only the reverb halves") {
  rs::LatentStack<double> x, y;
  for (int c : {4, 8}) {
    x.layers.emplace_back(rs::Shape{c, 2, 2}, 1.0);
    Tensor<double> t({c, 2, 2}, 1.0);
    for (std::size_t i = 0; i < t.size() / 2; ++i) t[i] = -9.0;  // source half
    y.layers.push_back(t);
  }
  CHECK(rs::latent_loss(x, y) == 0.0);
  // Shift every reverb entry by c: |c| + c^2 per layer.
  for (double c : {0.5, -1.5}) {
    auto y2 = y;
    for (auto& l : y2.layers) {
      for (std::size_t i = l.size() / 2; i < l.size(); ++i) l[i] += c;
    }
    CHECK(rs::latent_loss(x, y2) == doctest::Approx(2 * (std::abs(c) + c * c)));

    rs::Tape<double> t;
    std::vector<rs::Var> vx, vy;
    for (auto& l : x.layers) vx.push_back(t.constant(l));
    for (auto& l : y2.layers) vy.push_back(t.constant(l));
    CHECK(t.value(rs::latent_loss(t, vx, vy))[0] == doctest::Approx(rs::latent_loss(x, y2)));
  }
  auto shallow = y;
  shallow.layers.pop_back();
  CHECK_THROWS_AS(rs::latent_loss(x, shallow), rs::ShapeError);
}

TEST_CASE("adversarial losses") {
  const std::vector<double> half{0.5, 0.5};
  const auto l = rs::adversarial_losses(half, half);
  CHECK(l.l_disc == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(l.l_disc == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(l.l_gen == doctest::Approx(std::log(0.5)));
  // Confident and correct discriminator: near-zero loss; saturated values
  // stay finite.
  const std::vector<double> real{1.0}, fake{0.0};
  CHECK(rs::adversarial_losses(real, fake).l_disc < 1e-6);
  const auto sat = rs::adversarial_losses(fake, real);
  CHECK(std::isfinite(sat.l_disc));
  CHECK(std::isfinite(sat.l_gen));
  CHECK_THROWS_AS(rs::adversarial_losses(half, real), rs::TrainingError);
}

TEST_CASE("rectified Adam matches a scalar reference") {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  rs::Param<double> p("w", Tensor<double>({1}, {1.0}));
  rs::RAdam<double> opt({&p}, lr, b1, b2, eps);
  double w = 1.0, m = 0.0, v = 0.0;
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  bool saw_plain = false, saw_rectified = false;
  for (int t = 1; t <= 12; ++t) {
    const double g = std::sin(t) + 0.3;
    p.grad[0] = g;
    opt.step();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double m_hat = m / (1 - std::pow(b1, t));
    const double rho = rho_inf - 2.0 * t * std::pow(b2, t) / (1 - std::pow(b2, t));
    if (rho > 5.0) {
      const double r = std::sqrt((rho - 4) * (rho - 2) * rho_inf /
                                 ((rho_inf - 4) * (rho_inf - 2) * rho));
      w -= lr * r * m_hat / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
      saw_rectified = true;
    } else {
      w -= lr * m_hat;
      saw_plain = true;
    }
    CHECK(p.value[0] == doctest::Approx(w).epsilon(1e-12));
    if (t == 1) CHECK(p.value[0] == doctest::Approx(1.0 - lr * g).epsilon(1e-12));
  }
  CHECK(saw_plain);
  CHECK(saw_rectified);
  CHECK(opt.steps() == 12);
}

TEST_CASE("gradient norm clipping") {
  rs::Param<double> a("a", Tensor<double>({1})), b("b", Tensor<double>({1}));
  a.grad[0] = 3.0;
  b.grad[0] = 4.0;
  CHECK(rs::clip_grad_norm<double>({&a, &b}, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == 3.0);
  CHECK(rs::clip_grad_norm<double>({&a, &b}, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(b.grad[0] == doctest::Approx(0.8));
  a.grad[0] = 30.0;
  rs::clip_grad_norm<double>({&a, &b}, 0.0);
  CHECK(a.grad[0] == 30.0);
}

TEST_CASE("config validation and serialization") {
  const rs::TrainConfig c = small_train();
  const auto back = rs::train_config_from_json(rs::to_json(c));
  CHECK(rs::to_json(back) == rs::to_json(c));
  CHECK(rs::train_config_from_json(nlohmann::json::object()).lr == 1e-3);
  for (auto bad : {nlohmann::json{{"lr", -1}}, nlohmann::json{{"batch_size", 0}},
                   nlohmann::json{{"beta2", 1.0}}, nlohmann::json{{"w_adv", -1}}}) {
    CHECK_THROWS_AS(rs::train_config_from_json(bad), rs::TrainingError);
  }
  rs::LossReport r;
  r.l_spec = 1.25;
  r.epoch = 4;
  r.step = 99;
  r.adv_active = true;
  const auto r2 = rs::LossReport::from_json_line(r.to_json_line());
  CHECK(r2.l_spec == 1.25);
  CHECK(r2.step == 99);
  CHECK(r2.adv_active);
  CHECK_THROWS_AS(rs::Trainer(rs::ModelConfig::tiny(), kStft, small_train()),
                  rs::TrainingError);
}

TEST_CASE("generator objective leaves frozen discriminator parameters untouched") {
  rs::ReverbSwapNet<float> net(small_model(), 3);
  const auto q = make_quad(5, 0.2, 0.6);
  rs::Tape<float> t;
  t.freeze(net.discriminator_params());
  const auto g = rs::generator_objective(t, net, q, small_train(), true);
  REQUIRE(g.adv.valid());
  t.backward(g.total);
  double gen_norm = 0.0;
  for (auto* p : net.generator_params()) {
    for (float v : p->grad.vec()) gen_norm += std::abs(v);
  }
  CHECK(gen_norm > 0.0);
  for (auto* p : net.discriminator_params()) {
    for (float v : p->grad.vec()) REQUIRE(v == 0.0f);
  }
  // Components add up to the total.
  const double total = t.value(g.spec)[0] + t.value(g.latent)[0] + t.value(g.adv)[0];
  CHECK(t.value(g.total)[0] == doctest::Approx(total).epsilon(1e-5));
}

TEST_CASE("swapping the roles of A and B leaves the losses unchanged") {
  rs::ReverbSwapNet<float> net(small_model(), 4);
  const auto q = make_quad(6, 0.15, 0.75);
  const rs::QuadTensors<float> swapped{q.in_b, q.in_a, q.gt_b, q.gt_a};
  rs::Tape<float> t1, t2;
  const auto g1 = rs::generator_objective(t1, net, q, small_train(), false);
  const auto g2 = rs::generator_objective(t2, net, swapped, small_train(), false);
  CHECK(t1.value(g1.spec)[0] == t2.value(g2.spec)[0]);
  CHECK(t1.value(g1.latent)[0] == t2.value(g2.latent)[0]);
  CHECK(t1.value(g1.out_a).vec() == t2.value(g2.out_b).vec());
}

TEST_CASE("adversarial schedule") {
  rs::Trainer tr(small_model(), kStft, small_train());
  const auto batch = make_batch();
  const auto disc0 = params_of(tr.net(), true);
  const auto gen0 = params_of(tr.net(), false);

  const auto r0 = tr.step(batch, 0);
  CHECK_FALSE(r0.adv_active);
  CHECK(r0.l_gen_adv == 0.0);
  CHECK(r0.l_disc == 0.0);
  CHECK(r0.l_spec > 0.0);
  CHECK(r0.l_latent >= 0.0);
  tr.step(batch, 1);
  CHECK(params_of(tr.net(), true) == disc0);
  CHECK_FALSE(params_of(tr.net(), false) == gen0);

  const auto r2 = tr.step(batch, 2);
  CHECK(r2.adv_active);
  CHECK(r2.l_gen_adv < 0.0);
  CHECK(r2.l_disc > 0.0);
  CHECK_FALSE(params_of(tr.net(), true) == disc0);
  CHECK(tr.global_step() == 3);
}

TEST_CASE("zero learning rate changes no parameter") {
  auto cfg = small_train();
  cfg.lr = 0.0;
  cfg.adv_start_epoch = 0;
  rs::Trainer tr(small_model(), kStft, cfg);
  const auto before = tr.net().export_params();
  const auto r = tr.step(make_batch(), 0);
  CHECK(r.adv_active);
  CHECK(tr.net().export_params() == before);
}

TEST_CASE("steps are deterministic and survive a checkpoint round trip") {
  const auto batch = make_batch();
  rs::Trainer a(small_model(), kStft, small_train());
  rs::Trainer b(small_model(), kStft, small_train());
  for (int e = 0; e < 3; ++e) {
    const auto ra = a.step(batch, e), rb = b.step(batch, e);
    CHECK(ra.l_spec == rb.l_spec);
    CHECK(ra.l_disc == rb.l_disc);
  }
  CHECK(a.net().export_params() == b.net().export_params());

  TempDir dir("trainer_ckpt");
  a.mark_epoch_done(2);
  rs::save_checkpoint(a.to_checkpoint(), dir / "c.bin");
  rs::Trainer c = rs::Trainer::from_checkpoint(rs::load_checkpoint(dir / "c.bin"));
  CHECK(c.next_epoch() == 3);
  CHECK(c.global_step() == 3);
  const auto ra = a.step(batch, 3), rc = c.step(batch, 3);
  CHECK(ra.l_spec == rc.l_spec);
  CHECK(ra.l_gen_adv == rc.l_gen_adv);
  CHECK(a.net().export_params() == c.net().export_params());
}

TEST_CASE("non-finite input aborts before the update") {
  rs::Trainer tr(small_model(), kStft, small_train());
  auto batch = make_batch();
  batch[0].in_a[5] = std::nanf("");
  const auto before = tr.net().export_params();
  CHECK_THROWS_AS(tr.step(batch, 0), rs::TrainingError);
  CHECK(tr.net().export_params() == before);
  CHECK_THROWS_AS(tr.step({}, 0), rs::TrainingError);
}

TEST_CASE("training loop: checkpoints, log and resume") {
  TempDir dir("train_loop");
  const auto list = rs::testing::write_vocal_corpus(dir.path(), 3, 2 * kClip, 21);
  auto sources = rs::load_sources(rs::read_corpus(list));
  std::vector<std::string> ids;
  for (const auto& [id, w] : sources) ids.push_back(id);
  const auto presets = rs::generate_presets(rs::PresetSpace::train(), 3, 5);
  const auto quads = rs::make_dataset(ids, presets, 5, 9);
  rs::QuadMaterializer data(sources, presets, kClip);

  SUBCASE("zero epochs writes only the initial checkpoint") {
    auto cfg = small_train();
    cfg.total_epochs = 0;
    rs::Trainer tr(small_model(), kStft, cfg);
    const auto out = dir / "zero";
    CHECK(rs::train(tr, data, quads, {out}).empty());
    CHECK(std::filesystem::exists(out / "ckpt_init.bin"));
    CHECK(read_lines(out / rs::kLossLogName).empty());
    CHECK(rs::latest_checkpoint(out) == out / "ckpt_init.bin");
  }
  SUBCASE("full epochs, retention and resume") {
    auto cfg = small_train();
    cfg.total_epochs = 2;
    rs::Trainer tr(small_model(), kStft, cfg);
    const auto out = dir / "run";
    int seen = 0;
    const auto reports = rs::train(tr, data, quads, {out, 1, [&](const rs::LossReport&) { ++seen; }});
    // 5 quads, batch 2: 3 steps per epoch.
    CHECK(reports.size() == 6);
    CHECK(seen == 6);
    CHECK(read_lines(out / rs::kLossLogName).size() == 6);
    CHECK_FALSE(std::filesystem::exists(rs::checkpoint_path(out, 0)));
    CHECK(rs::latest_checkpoint(out) == rs::checkpoint_path(out, 1));
    CHECK(rs::checkpoint_path(out, 1).filename() == "ckpt_epoch_0001.bin");

    rs::Trainer resumed = rs::Trainer::from_checkpoint(
        rs::load_checkpoint(*rs::latest_checkpoint(out)));
    resumed.config().total_epochs = 3;
    const auto more = rs::train(resumed, data, quads, {out});
    REQUIRE(more.size() == 3);
    CHECK(more.front().epoch == 2);
    CHECK(more.front().step == 6);
    CHECK(more.front().adv_active);
    CHECK(read_lines(out / rs::kLossLogName).size() == 9);

    // A fresh run of three epochs reaches the same state.
    auto cfg3 = cfg;
    cfg3.total_epochs = 3;
    rs::Trainer straight(small_model(), kStft, cfg3);
    const auto all = rs::train(straight, data, quads, {});
    CHECK(all.back().l_spec == more.back().l_spec);
    CHECK(straight.net().export_params() == resumed.net().export_params());
  }
  SUBCASE("fixed steps per epoch cycle through the data") {
    auto cfg = small_train();
    cfg.total_epochs = 1;
    cfg.steps_per_epoch = 4;
    rs::Trainer tr(small_model(), kStft, cfg);
    CHECK(rs::train(tr, data, quads, {}).size() == 4);
  }
  CHECK_THROWS_AS(
      [&] {
        rs::Trainer tr(small_model(), kStft, small_train());
        rs::train(tr, data, {}, {});
      }(),
      rs::TrainingError);
}
