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

#include "reverbswap/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <regex>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "reverbswap/rng.h"

namespace reverbswap {

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw TrainingError("lr must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw TrainingError("betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw TrainingError("eps must be positive");
  if (total_epochs < 0) throw TrainingError("total_epochs must be >= 0");
  if (adv_start_epoch < 0) throw TrainingError("adv_start_epoch must be >= 0");
  if (batch_size <= 0) throw TrainingError("batch_size must be positive");
  if (steps_per_epoch < 0) throw TrainingError("steps_per_epoch must be >= 0");
  if (w_spec < 0 || w_latent < 0 || w_adv < 0) {
    throw TrainingError("loss weights must be nonnegative");
  }
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["adv_start_epoch"] = c.adv_start_epoch;
  j["total_epochs"] = c.total_epochs;
  j["batch_size"] = c.batch_size;
  j["steps_per_epoch"] = c.steps_per_epoch;
  j["w_spec"] = c.w_spec;
  j["w_latent"] = c.w_latent;
  j["w_adv"] = c.w_adv;
  j["grad_clip"] = c.grad_clip;
  j["redraw_gamma"] = c.redraw_gamma;
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.adv_start_epoch = j.value("adv_start_epoch", c.adv_start_epoch);
  c.total_epochs = j.value("total_epochs", c.total_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.w_spec = j.value("w_spec", c.w_spec);
  c.w_latent = j.value("w_latent", c.w_latent);
  c.w_adv = j.value("w_adv", c.w_adv);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.redraw_gamma = j.value("redraw_gamma", c.redraw_gamma);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::string LossReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["l_spec"] = l_spec;
  j["l_latent"] = l_latent;
  j["l_gen_adv"] = l_gen_adv;
  j["l_disc"] = l_disc;
  j["adv_active"] = adv_active;
  return j.dump();
}

LossReport LossReport::from_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  LossReport r;
  r.epoch = j.at("epoch").get<int>();
  r.step = j.at("step").get<std::int64_t>();
  r.l_spec = j.at("l_spec").get<double>();
  r.l_latent = j.at("l_latent").get<double>();
  r.l_gen_adv = j.at("l_gen_adv").get<double>();
  r.l_disc = j.at("l_disc").get<double>();
  r.adv_active = j.at("adv_active").get<bool>();
  return r;
}

template <typename T>
QuadTensors<T> quad_tensors(const TrainingQuad& q, const StftConfig& stft_cfg) {
  auto mag = [&](const MixedTrack& t) {
    return to_tensor<T>(stft(t.audio, stft_cfg).magnitude);
  };
  return {mag(q.in_a), mag(q.in_b), mag(q.gt_a), mag(q.gt_b)};
}

template <typename T>
double spec_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("spec_loss: " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    l1 += std::abs(d);
    l2 += d * d;
  }
  const auto n = static_cast<double>(pred.size());
  return l1 / n + l2 / n;
}

template <typename T>
double latent_loss(const LatentStack<T>& x, const LatentStack<T>& y) {
  if (x.layers.size() != y.layers.size()) {
    throw ShapeError("latent_loss: stacks differ in depth");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x.layers.size(); ++i) {
    total += spec_loss(reverb_half(x.layers[i]), reverb_half(y.layers[i]));
  }
  return total;
}

AdversarialLosses adversarial_losses(std::span<const double> d_real,
                                     std::span<const double> d_fake) {
  if (d_real.empty() || d_real.size() != d_fake.size()) {
    throw TrainingError("adversarial_losses: need matching nonempty batches");
  }
  auto clamp = [](double p) {
    return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  };
  AdversarialLosses out;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    const double r = clamp(d_real[i]);
    const double f = clamp(d_fake[i]);
    out.l_disc += -(std::log(r) + std::log(1.0 - f));
    out.l_gen += std::log(1.0 - f);
  }
  out.l_disc /= static_cast<double>(d_real.size());
  out.l_gen /= static_cast<double>(d_real.size());
  return out;
}

template <typename T>
Var spec_loss(Tape<T>& t, Var pred, Var target) {
  return ops::l1_l2_distance(t, pred, target);
}

template <typename T>
Var latent_loss(Tape<T>& t, const std::vector<Var>& x,
                const std::vector<Var>& y) {
  if (x.size() != y.size() || x.empty()) {
    throw ShapeError("latent_loss: stacks differ in depth");
  }
  Var total;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int c = t.value(x[i]).dim(0);
    Var term = ops::l1_l2_distance(t, ops::slice_channels(t, x[i], c / 2, c),
                                   ops::slice_channels(t, y[i], c / 2, c));
    total = total.valid() ? ops::add(t, total, term) : term;
  }
  return total;
}

template <typename T>
GeneratorGraph<T> generator_objective(Tape<T>& t, ReverbSwapNet<T>& net,
                                      const QuadTensors<T>& q,
                                      const TrainConfig& cfg, bool adversarial) {
  Var in_a = t.constant(q.in_a), in_b = t.constant(q.in_b);
  Var gt_a = t.constant(q.gt_a), gt_b = t.constant(q.gt_b);
  auto e_in_a = net.encode(t, in_a);
  auto e_in_b = net.encode(t, in_b);
  auto e_gt_a = net.encode(t, gt_a);
  auto e_gt_b = net.encode(t, gt_b);

  GeneratorGraph<T> g;
  g.out_a = net.swap_and_decode(t, e_in_a, e_in_b);
  g.out_b = net.swap_and_decode(t, e_in_b, e_in_a);
  g.spec = ops::add(t, spec_loss(t, g.out_a, gt_a), spec_loss(t, g.out_b, gt_b));
  // Inputs and ground truths that share a reverb are pulled together.
  g.latent = ops::add(t, latent_loss(t, e_in_a, e_gt_b),
                      latent_loss(t, e_in_b, e_gt_a));
  g.total = ops::add(t, ops::scale(t, g.spec, static_cast<T>(cfg.w_spec)),
                     ops::scale(t, g.latent, static_cast<T>(cfg.w_latent)));
  if (adversarial) {
    const T eps = static_cast<T>(kProbEpsilon);
    g.adv = ops::add(t, ops::log1m_clamped(t, net.discriminate(t, g.out_a), eps),
                     ops::log1m_clamped(t, net.discriminate(t, g.out_b), eps));
    g.total = ops::add(t, g.total, ops::scale(t, g.adv, static_cast<T>(cfg.w_adv)));
  }
  return g;
}

template <typename T>
RAdam<T>::RAdam(ParamList<T> params, double lr, double beta1, double beta2,
                double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <typename T>
void RAdam<T>::zero_grad() {
  for (auto* p : params_) p->grad.zero();
}

template <typename T>
void RAdam<T>::step() {
  ++t_;
  const double b1t = std::pow(beta1_, static_cast<double>(t_));
  const double b2t = std::pow(beta2_, static_cast<double>(t_));
  const double rho_inf = 2.0 / (1.0 - beta2_) - 1.0;
  const double rho_t = rho_inf - 2.0 * t_ * b2t / (1.0 - b2t);
  const bool rectify = rho_t > 5.0;
  double r = 0.0;
  if (rectify) {
    r = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                  ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
  }
  const double step_size = lr_ / (1.0 - b1t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& w = params_[k]->value.vec();
    const auto& g = params_[k]->grad.vec();
    auto& m = m_[k].vec();
    auto& v = v_[k].vec();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
      v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * double(g[i]) * g[i]);
      if (rectify) {
        const double v_hat = std::sqrt(v[i] / (1.0 - b2t));
        w[i] -= static_cast<T>(step_size * r * m[i] / (v_hat + eps_));
      } else {
        w[i] -= static_cast<T>(step_size * m[i]);
      }
    }
  }
}

template <typename T>
void RAdam<T>::export_state(const std::string& prefix,
                            std::map<std::string, Tensor<float>>& out) const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out[prefix + "m/" + params_[k]->name] = m_[k].template cast<float>();
    out[prefix + "v/" + params_[k]->name] = v_[k].template cast<float>();
  }
}

template <typename T>
void RAdam<T>::import_state(const std::string& prefix,
                            const std::map<std::string, Tensor<float>>& in,
                            std::int64_t steps) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto m = in.find(prefix + "m/" + params_[k]->name);
    auto v = in.find(prefix + "v/" + params_[k]->name);
    if (m == in.end() || v == in.end() ||
        m->second.shape() != m_[k].shape() || v->second.shape() != v_[k].shape()) {
      throw CheckpointError("optimizer state missing or mismatched for " +
                            params_[k]->name);
    }
    m_[k] = m->second.template cast<T>();
    v_[k] = v->second.template cast<T>();
  }
  t_ = steps;
}

template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (T g : p->grad.vec()) sq += double(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const auto k = static_cast<T>(max_norm / norm);
    for (auto* p : params) {
      for (auto& g : p->grad.vec()) g *= k;
    }
  }
  return norm;
}

void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    // Activations and gradients are large, short-lived buffers. Serving
    // them from the heap instead of fresh mappings avoids re-faulting and
    // re-zeroing pages on every step.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
    return true;
  }();
  (void)done;
#endif
}

Trainer::Trainer(ModelConfig model, StftConfig stft, TrainConfig cfg)
    : model_cfg_(std::move(model)),
      stft_(stft),
      cfg_(cfg),
      net_(model_cfg_, mix_seed(cfg.seed, 0x4e4554ULL)) {
  cfg_.validate();
  stft_.validate();
  tune_allocator();
  if (stft_.model_bins() != model_cfg_.input_bins) {
    throw TrainingError("STFT yields " + std::to_string(stft_.model_bins()) +
                        " bins but the model expects " +
                        std::to_string(model_cfg_.input_bins));
  }
  gen_opt_ = RAdam<float>(net_.generator_params(), cfg_.lr, cfg_.beta1,
                          cfg_.beta2, cfg_.eps);
  disc_opt_ = RAdam<float>(net_.discriminator_params(), cfg_.lr, cfg_.beta1,
                           cfg_.beta2, cfg_.eps);
}

namespace {

bool grads_finite(const ParamList<float>& params) {
  for (const auto* p : params) {
    for (float g : p->grad.vec()) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

[[noreturn]] void diverged(int epoch, std::int64_t step, const std::string& what,
                           double value) {
  throw TrainingError("non-finite " + what + " (" + std::to_string(value) +
                      ") at epoch " + std::to_string(epoch) + ", step " +
                      std::to_string(step) + "; aborting");
}

}  // namespace

LossReport Trainer::step(const std::vector<QuadTensors<float>>& batch,
                         int epoch) {
  if (batch.empty()) throw TrainingError("empty batch");
  if (epoch < 0) throw TrainingError("epoch must be nonnegative");
  LossReport rep;
  rep.epoch = epoch;
  rep.step = step_;
  rep.adv_active = epoch >= cfg_.adv_start_epoch;
  const auto inv_b = 1.0f / static_cast<float>(batch.size());

  std::vector<Tensor<float>> fakes;
  gen_opt_.zero_grad();
  for (const auto& q : batch) {
    Tape<float> t;
    t.freeze(net_.discriminator_params());
    auto g = generator_objective(t, net_, q, cfg_, rep.adv_active);
    const double total = t.value(g.total)[0];
    if (!std::isfinite(total)) diverged(epoch, step_, "generator loss", total);
    t.backward(g.total, inv_b);
    rep.l_spec += t.value(g.spec)[0] * inv_b;
    rep.l_latent += t.value(g.latent)[0] * inv_b;
    if (rep.adv_active) {
      rep.l_gen_adv += t.value(g.adv)[0] * inv_b;
      fakes.push_back(t.value(g.out_a));
      fakes.push_back(t.value(g.out_b));
    }
  }
  auto gen_params = net_.generator_params();
  if (!grads_finite(gen_params)) {
    diverged(epoch, step_, "generator gradient", NAN);
  }
  clip_grad_norm(gen_params, cfg_.grad_clip);
  gen_opt_.step();

  if (rep.adv_active) {
    disc_opt_.zero_grad();
    const auto eps = static_cast<float>(kProbEpsilon);
    const float scale = 0.5f * inv_b;  // mean over both (real, fake) pairs
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Tape<float> t;
      t.freeze(net_.generator_params());
      const Tensor<float>* reals[2] = {&batch[i].gt_a, &batch[i].gt_b};
      Var loss;
      for (int k = 0; k < 2; ++k) {
        Var d_real = net_.discriminate(t, t.constant(*reals[k]));
        Var d_fake = net_.discriminate(t, t.constant(fakes[2 * i + k]));
        Var term = ops::scale(t, ops::add(t, ops::log_clamped(t, d_real, eps),
                                          ops::log1m_clamped(t, d_fake, eps)),
                              -1.0f);
        loss = loss.valid() ? ops::add(t, loss, term) : term;
      }
      const double v = t.value(loss)[0];
      if (!std::isfinite(v)) diverged(epoch, step_, "discriminator loss", v);
      t.backward(loss, scale);
      rep.l_disc += v * scale;
    }
    auto disc_params = net_.discriminator_params();
    if (!grads_finite(disc_params)) {
      diverged(epoch, step_, "discriminator gradient", NAN);
    }
    clip_grad_norm(disc_params, cfg_.grad_clip);
    disc_opt_.step();
  }
  ++step_;
  return rep;
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint c;
  c.meta["model"] = to_json(model_cfg_);
  c.meta["stft"] = {{"win_len", stft_.win_len},
                    {"hop", stft_.hop},
                    {"fft_size", stft_.fft_size},
                    {"center", stft_.center}};
  c.meta["train"] = to_json(cfg_);
  c.meta["next_epoch"] = next_epoch_;
  c.meta["global_step"] = step_;
  c.meta["gen_opt_steps"] = gen_opt_.steps();
  c.meta["disc_opt_steps"] = disc_opt_.steps();
  for (auto& [name, t] : net_.export_params()) c.tensors.emplace(name, t);
  gen_opt_.export_state("opt/gen/", c.tensors);
  disc_opt_.export_state("opt/disc/", c.tensors);
  return c;
}

Trainer Trainer::from_checkpoint(const Checkpoint& c) {
  StftConfig stft;
  const auto& s = c.meta.at("stft");
  stft.win_len = s.at("win_len").get<int>();
  stft.hop = s.at("hop").get<int>();
  stft.fft_size = s.at("fft_size").get<int>();
  stft.center = s.at("center").get<bool>();
  Trainer t(model_config_from_json(c.meta.at("model")), stft,
            train_config_from_json(c.meta.at("train")));
  t.net_.import_params(c.tensors);
  t.next_epoch_ = c.meta.value("next_epoch", 0);
  t.step_ = c.meta.value("global_step", std::int64_t{0});
  if (c.tensors.count("opt/gen/m/" + t.net_.generator_params()[0]->name)) {
    t.gen_opt_.import_state("opt/gen/", c.tensors,
                            c.meta.value("gen_opt_steps", std::int64_t{0}));
    t.disc_opt_.import_state("opt/disc/", c.tensors,
                             c.meta.value("disc_opt_steps", std::int64_t{0}));
  }
  return t;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir,
                                      int epoch) {
  if (epoch < 0) return dir / "ckpt_init.bin";
  char name[32];
  std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.bin", epoch);
  return dir / name;
}

std::optional<std::filesystem::path> latest_checkpoint(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  static const std::regex pattern(R"(ckpt_epoch_(\d+)\.bin)");
  int best = -1;
  std::optional<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const int epoch = std::stoi(m[1].str());
      if (epoch > best) {
        best = epoch;
        out = e.path();
      }
    }
  }
  if (!out && std::filesystem::exists(dir / "ckpt_init.bin")) {
    out = dir / "ckpt_init.bin";
  }
  return out;
}

std::vector<LossReport> train(Trainer& trainer, QuadMaterializer& data,
                              const std::vector<QuadDescriptor>& quads,
                              const TrainIo& io) {
  if (quads.empty()) throw TrainingError("training manifest is empty");
  const TrainConfig& cfg = trainer.config();
  const bool persist = !io.out_dir.empty();
  std::ofstream log;
  if (persist) {
    std::filesystem::create_directories(io.out_dir);
    const bool fresh = trainer.next_epoch() == 0 && trainer.global_step() == 0;
    log.open(io.out_dir / kLossLogName,
             fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw TrainingError("cannot open loss log in " + io.out_dir.string());
    if (fresh) save_checkpoint(trainer.to_checkpoint(), checkpoint_path(io.out_dir, -1));
  }

  const std::size_t n = quads.size();
  const std::size_t bsz = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps =
      cfg.steps_per_epoch > 0 ? static_cast<std::size_t>(cfg.steps_per_epoch)
                              : (n + bsz - 1) / bsz;
  std::vector<LossReport> reports;
  for (int epoch = trainer.next_epoch(); epoch < cfg.total_epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed({cfg.seed, static_cast<std::uint64_t>(epoch), 0x5eedULL}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    std::size_t cursor = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<QuadTensors<float>> batch;
      for (std::size_t k = 0; k < bsz && (cfg.steps_per_epoch > 0 || cursor < n);
           ++k, ++cursor) {
        QuadDescriptor d = quads[order[cursor % n]];
        if (cfg.redraw_gamma) d = with_epoch_gammas(d, epoch);
        batch.push_back(quad_tensors<float>(data.materialize(d), trainer.stft()));
      }
      LossReport r = trainer.step(batch, epoch);
      if (persist) log << r.to_json_line() << '\n' << std::flush;
      if (io.on_step) io.on_step(r);
      reports.push_back(r);
    }
    trainer.mark_epoch_done(epoch);
    if (persist) {
      save_checkpoint(trainer.to_checkpoint(), checkpoint_path(io.out_dir, epoch));
      if (io.keep_checkpoints > 0 && epoch - io.keep_checkpoints >= 0) {
        std::filesystem::remove(
            checkpoint_path(io.out_dir, epoch - io.keep_checkpoints));
      }
    }
  }
  return reports;
}

template QuadTensors<float> quad_tensors(const TrainingQuad&, const StftConfig&);
template QuadTensors<double> quad_tensors(const TrainingQuad&, const StftConfig&);
template double spec_loss(const Tensor<float>&, const Tensor<float>&);
template double spec_loss(const Tensor<double>&, const Tensor<double>&);
template double latent_loss(const LatentStack<float>&, const LatentStack<float>&);
template double latent_loss(const LatentStack<double>&, const LatentStack<double>&);
template Var spec_loss(Tape<float>&, Var, Var);
template Var spec_loss(Tape<double>&, Var, Var);
template Var latent_loss(Tape<float>&, const std::vector<Var>&, const std::vector<Var>&);
template Var latent_loss(Tape<double>&, const std::vector<Var>&, const std::vector<Var>&);
template GeneratorGraph<float> generator_objective(Tape<float>&, ReverbSwapNet<float>&,
                                                   const QuadTensors<float>&,
                                                   const TrainConfig&, bool);
template GeneratorGraph<double> generator_objective(Tape<double>&, ReverbSwapNet<double>&,
                                                    const QuadTensors<double>&,
                                                    const TrainConfig&, bool);
template class RAdam<float>;
template class RAdam<double>;
template double clip_grad_norm(const ParamList<float>&, double);
template double clip_grad_norm(const ParamList<double>&, double);

}  // namespace reverbswap
