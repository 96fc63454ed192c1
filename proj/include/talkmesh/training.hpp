#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "talkmesh/data.hpp"
#include "talkmesh/losses.hpp"
#include "talkmesh/model.hpp"

namespace talkmesh {
namespace training {

struct TrainConfig {
  double learning_rate = 3e-4;
  std::int64_t stage1_steps = 300;
  std::int64_t stage2_steps = 700;
  std::int64_t batch_size = 8;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  double grl_ramp_fraction = 0.2;
  std::int64_t log_every = 10;
  losses::LossWeights weights;
  AblationFlags ablations;

  std::int64_t total_steps() const { return stage1_steps + stage2_steps; }
  void validate() const;
};

/// Gradient-reversal strength: linear ramp from zero to alpha_max over the
/// first ramp_fraction of training, then constant.
double grl_schedule(std::int64_t step, std::int64_t total_steps, double alpha_max,
                    double ramp_fraction = 0.2);

/// Adam with decoupled per-tensor state so the optimizer serializes into
/// plain named tensors.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  void step();

  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t t) { step_count_ = t; }

  /// name -> (first moment, second moment), aligned with the parameters.
  std::vector<std::pair<std::string, torch::Tensor>> state_entries() const;
  void load_state_entry(const std::string& name, const torch::Tensor& value);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> params_;
  std::vector<torch::Tensor> exp_avg_, exp_avg_sq_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t step_count_ = 0;
};

struct Checkpoint {
  std::vector<std::pair<std::string, torch::Tensor>> entries;
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
};

// Checkpoint container: magic "PTKC", version byte, little-endian header and
// manifest of (name, shape, offset), float32 payloads.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a hash used to stamp checkpoints with their generating config.
std::uint64_t fnv1a_hash(const std::string& text);

struct StepLog {
  std::int64_t step = 0;
  double reconstruction = 0, mouth = 0, velocity = 0, motion = 0;
  double adversarial = 0, style_similarity = 0, orthogonality = 0, mutual_info = 0;
  double contrastive = 0, total = 0;

  std::string line() const;
  static std::string header();
};

/// Two-stage trainer. Stage 1 freezes the style encoders (audio, motion,
/// identity); stage 2 unfreezes everything. Batch order is a pure function
/// of (seed, step), so resuming from a checkpoint reproduces the
/// uninterrupted trajectory exactly.
class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& config, const data::Corpus& corpus,
          std::uint64_t config_hash = 0);

  /// Runs steps [current, until); emits a log record per log_every steps.
  void run_until(std::int64_t until,
                 const std::function<void(const StepLog&)>& on_log = nullptr);

  void restore(const Checkpoint& ckpt);
  Checkpoint capture() const;

  std::int64_t current_step() const { return step_; }
  const std::vector<std::size_t>& train_indices() const { return train_indices_; }

  /// The deterministic batch for a given step (exposed for resume tests).
  std::vector<std::size_t> batch_indices(std::int64_t step) const;

 private:
  Batch make_batch(const std::vector<std::size_t>& indices) const;
  void apply_stage_freezing();

  Model& model_;
  TrainConfig config_;
  const data::Corpus& corpus_;
  std::uint64_t config_hash_;
  std::vector<std::size_t> train_indices_;
  std::vector<data::TrainingExample> cache_;
  Adam optimizer_;
  std::int64_t step_ = 0;
};

/// Stage-1 run from a fresh model state; returns the checkpoint at the
/// stage boundary.
Checkpoint train_stage1(Model& model, const TrainConfig& config, const data::Corpus& corpus,
                        const std::function<void(const StepLog&)>& on_log = nullptr,
                        std::uint64_t config_hash = 0);

/// Stage-2 run continuing from a checkpoint; returns the final checkpoint.
Checkpoint train_stage2(Model& model, const Checkpoint& start, const TrainConfig& config,
                        const data::Corpus& corpus,
                        const std::function<void(const StepLog&)>& on_log = nullptr,
                        std::uint64_t config_hash = 0);

/// Copies the parameter entries of a checkpoint into the model (optimizer
/// state ignored); used by generation and evaluation.
void load_model_parameters(Model& model, const Checkpoint& ckpt);

}  // namespace training
}  // namespace talkmesh
