#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsc/config.hpp"
#include "tsc/dataset.hpp"
#include "tsc/model.hpp"
#include "tsc/rng.hpp"

namespace tsc {

/// a = sqrt(6 / (fan_in + fan_out)). Conv weights [C_out, C_in, L] have
/// fan_in = C_in * L and fan_out = C_out * L; dense [K, F] has F and K.
double glorot_bound(const Shape& weight_shape);
void glorot_fill(Tensor& weight, Rng& rng);

/// Fresh Glorot-uniform weights, zero biases, BN gamma 1 / beta 0 and reset
/// running statistics. Parameters are drawn in name order from one stream.
ModelState glorot_uniform_init(ModelState state, std::uint64_t seed);

/// build_model followed by glorot_uniform_init.
ModelState make_model(const ModelSpec& spec, std::uint64_t seed);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ParameterMap m;
  ParameterMap v;
  long long t = 0;
};

/// One bias-corrected Adam step on every parameter that has a gradient.
/// Throws NumericError naming the first parameter with a non-finite gradient
/// (parameters are left untouched in that case).
void adam_step(ParameterMap& params, const ParameterMap& grads, AdamState& state, const AdamConfig& config);

/// Halves (by `factor`) the learning rate after `patience` consecutive
/// epochs without strict improvement, never going below `min_lr`.
struct PlateauConfig {
  double factor = 0.5;
  int patience = 50;
  double min_lr = 1e-4;
};

class PlateauScheduler {
 public:
  PlateauScheduler(double lr, PlateauConfig config) : lr_(lr), config_(config) {}

  /// Feeds one epoch's monitored loss; returns the learning rate to use next.
  double observe(double loss);
  double lr() const noexcept { return lr_; }

 private:
  double lr_;
  PlateauConfig config_;
  double best_ = 0.0;
  bool seen_ = false;
  int wait_ = 0;
};

enum class LossKind { cross_entropy, mse };
enum class Monitor { train_loss, val_loss };

struct TrainConfig {
  int epochs = 500;
  int batch_size = 16;
  AdamConfig adam;
  std::optional<PlateauConfig> lr_reduce = PlateauConfig{};
  LossKind loss = LossKind::cross_entropy;
  std::uint64_t seed = 0;
  Monitor checkpoint = Monitor::train_loss;
  double val_fraction = 0.0;
  /// Wall-clock budget; training stops after the epoch that exceeds it.
  std::optional<double> max_seconds;

  void validate() const;
  Config to_config() const;
  /// Keys: epochs, batch_size, lr, beta1, beta2, adam_epsilon, lr_reduce
  /// (true/false), lr_factor, lr_patience, min_lr, loss, seed, checkpoint
  /// (best_train_loss|best_val_loss), val_fraction, max_seconds.
  static TrainConfig from_config(const Config& config, const TrainConfig& defaults);
  static TrainConfig from_config(const Config& config);
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int checkpoint_epoch = 0;
  double wall_seconds = 0.0;
  bool stopped_by_budget = false;

  double monitored(const EpochRecord& r, Monitor m) const { return m == Monitor::val_loss ? *r.val_loss : r.train_loss; }
  /// Columns epoch, train_loss, val_loss, lr (val_loss empty when unused).
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  ModelState model;  // parameters at the checkpoint epoch
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Loss and parameter gradients of one forward/backward pass.
struct LossGradient {
  double loss = 0.0;
  ParameterMap gradients;
};

/// `labels` for cross-entropy, `targets` ([B, outputs]) for MSE.
LossGradient loss_gradient(const ModelState& state, const Tensor& batch, std::span<const int> labels,
                           const Tensor* targets, LossKind loss, const ForwardOptions& options,
                           ParameterMap* running_stats);

/// Mean loss over a dataset in eval mode.
double evaluate_loss(const ModelState& state, const LabeledDataset& dataset, LossKind loss);

/// Mini-batch Adam training. Batches come from a per-epoch shuffle seeded
/// by (seed, epoch); the last partial batch is kept. The epoch loss is the
/// size-weighted mean of the batch losses.
TrainResult train(ModelState state, const LabeledDataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Loss and gradients for one mini-batch at the current parameters. May
/// fold batch statistics into `running_stats`.
using BatchObjective = std::function<LossGradient(const ModelState& state, const Tensor& batch,
                                                  std::span<const int> labels, const Tensor* targets, Rng& rng,
                                                  ParameterMap* running_stats)>;

/// train() with a custom per-batch objective (adversarial training).
TrainResult train_with_objective(ModelState state, const LabeledDataset& dataset, const TrainConfig& config,
                                 const BatchObjective& objective, const EpochCallback& on_epoch = {});

/// Replaces the head by a freshly initialized one sized for `target`
/// (seeded by config.seed) and trains the whole network on it.
ModelState replace_head(const ModelState& pretrained, const LabeledDataset& target, std::uint64_t seed);
TrainResult fine_tune(const ModelState& pretrained, const LabeledDataset& target, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

}  // namespace tsc
