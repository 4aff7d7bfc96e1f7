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

// Losses, the rectified Adam optimizer and the alternating
// generator/discriminator training loop.

#ifndef REVERBSWAP_TRAINING_H_
#define REVERBSWAP_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "reverbswap/checkpoint.h"
#include "reverbswap/databus.h"
#include "reverbswap/model.h"
#include "reverbswap/stft.h"

namespace reverbswap {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbEpsilon = 1e-7;

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int adv_start_epoch = 20;
  int total_epochs = 100;
  int batch_size = 4;
  // 0 runs every quad of the dataset once per epoch.
  int steps_per_epoch = 0;
  double w_spec = 1.0;
  double w_latent = 1.0;
  double w_adv = 1.0;
  // Global-norm gradient clip; <= 0 disables it.
  double grad_clip = 5.0;
  // Redraw each quad's gammas every epoch from its descriptor seed.
  bool redraw_gamma = true;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
// Missing keys keep `base` values.
TrainConfig train_config_from_json(const nlohmann::json& j,
                                   TrainConfig base = {});

struct LossReport {
  double l_spec = 0.0;
  double l_latent = 0.0;
  double l_gen_adv = 0.0;
  double l_disc = 0.0;
  int epoch = 0;
  std::int64_t step = 0;
  bool adv_active = false;

  std::string to_json_line() const;
  static LossReport from_json_line(const std::string& line);
};

// Network-domain view of a quad.
template <typename T>
struct QuadTensors {
  Tensor<T> in_a, in_b, gt_a, gt_b;
};

template <typename T>
QuadTensors<T> quad_tensors(const TrainingQuad& q, const StftConfig& stft);

// Value-level losses.
template <typename T>
double spec_loss(const Tensor<T>& pred, const Tensor<T>& target);
template <typename T>
double latent_loss(const LatentStack<T>& x, const LatentStack<T>& y);
struct AdversarialLosses {
  double l_disc = 0.0;
  double l_gen = 0.0;
};
AdversarialLosses adversarial_losses(std::span<const double> d_real,
                                     std::span<const double> d_fake);

// Graph-level losses.
template <typename T>
Var spec_loss(Tape<T>& t, Var pred, Var target);
template <typename T>
Var latent_loss(Tape<T>& t, const std::vector<Var>& x,
                const std::vector<Var>& y);

template <typename T>
struct GeneratorGraph {
  Var total, spec, latent, adv;  // adv invalid when inactive
  Var out_a, out_b;
};

// Full generator objective of one quad. The discriminator parameters must
// be frozen on `t` by the caller when `adversarial` is set.
template <typename T>
GeneratorGraph<T> generator_objective(Tape<T>& t, ReverbSwapNet<T>& net,
                                      const QuadTensors<T>& q,
                                      const TrainConfig& cfg, bool adversarial);

// Rectified Adam; the variance correction engages once the approximated
// SMA length exceeds 5, before that the update is plain momentum SGD.
template <typename T>
class RAdam {
 public:
  RAdam() = default;
  RAdam(ParamList<T> params, double lr, double beta1, double beta2, double eps);

  void step();
  void zero_grad();
  std::int64_t steps() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }

  // State tensors keyed "<prefix>m/<name>", "<prefix>v/<name>".
  void export_state(const std::string& prefix,
                    std::map<std::string, Tensor<float>>& out) const;
  void import_state(const std::string& prefix,
                    const std::map<std::string, Tensor<float>>& in,
                    std::int64_t steps);

 private:
  ParamList<T> params_;
  std::vector<Tensor<T>> m_, v_;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
};

// Global L2 norm of the gradients; rescales them to `max_norm` when above.
template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm);

// Keeps large freed buffers in the process heap (glibc only; no-op
// elsewhere). Called by the Trainer constructor.
void tune_allocator();

// Owns the network, both optimizers and the step counters.
class Trainer {
 public:
  Trainer(ModelConfig model, StftConfig stft, TrainConfig cfg);
  // The optimizers point into the network's parameter storage, which a
  // move preserves and a copy would not.
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;
  Trainer(Trainer&&) = default;

  ReverbSwapNet<float>& net() { return net_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& config() { return cfg_; }
  const StftConfig& stft() const { return stft_; }
  int next_epoch() const { return next_epoch_; }
  std::int64_t global_step() const { return step_; }

  // One optimization step on a batch (one generator update, plus one
  // discriminator update when epoch >= adv_start_epoch). Throws
  // TrainingError on a non-finite loss or gradient before the update it
  // would feed.
  LossReport step(const std::vector<QuadTensors<float>>& batch, int epoch);

  Checkpoint to_checkpoint() const;
  static Trainer from_checkpoint(const Checkpoint& c);
  void mark_epoch_done(int epoch) { next_epoch_ = epoch + 1; }

 private:
  ModelConfig model_cfg_;
  StftConfig stft_;
  TrainConfig cfg_;
  ReverbSwapNet<float> net_;
  RAdam<float> gen_opt_;
  RAdam<float> disc_opt_;
  int next_epoch_ = 0;
  std::int64_t step_ = 0;
};

struct TrainIo {
  std::filesystem::path out_dir;  // empty: no checkpoints, no log file
  // Keep only the newest N epoch checkpoints; 0 keeps all.
  int keep_checkpoints = 0;
  std::function<void(const LossReport&)> on_step;
};

inline constexpr const char* kLossLogName = "loss_log.jsonl";
std::filesystem::path checkpoint_path(const std::filesystem::path& dir,
                                      int epoch);
// Newest "ckpt_epoch_NNNN.bin" in dir, if any.
std::optional<std::filesystem::path> latest_checkpoint(
    const std::filesystem::path& dir);

// Runs epochs next_epoch() .. total_epochs-1. Before the first epoch of a
// fresh run an initial checkpoint (epoch -1) is written; afterwards one per
// epoch. Returns every step report.
std::vector<LossReport> train(Trainer& trainer, QuadMaterializer& data,
                              const std::vector<QuadDescriptor>& quads,
                              const TrainIo& io);

}  // namespace reverbswap

#endif  // REVERBSWAP_TRAINING_H_
