#pragma once

#include <span>
#include <string>
#include <vector>

#include "tsc/dataset.hpp"
#include "tsc/model.hpp"
#include "tsc/training.hpp"

namespace tsc {

enum class AttackMethod { fgsm, bim };

std::string to_string(AttackMethod method);
AttackMethod parse_attack_method(const std::string& name);

struct AttackConfig {
  AttackMethod method = AttackMethod::fgsm;
  double epsilon = 0.1;
  /// BIM only.
  int iterations = 10;
  /// BIM step; epsilon / 10 when unset.
  std::optional<double> alpha;

  double step() const { return alpha.value_or(epsilon / 10.0); }
  void validate() const;
};

/// d(loss)/d(input) of the batch-mean cross-entropy at `batch` [B, D, T]
/// with batch norm in eval mode.
Tensor input_gradient(const ModelState& model, const Tensor& batch, std::span<const int> labels);

/// Clips `candidate` into the L-infinity ball of radius epsilon around
/// `origin`, elementwise. Exact in floating point: |result - origin| never
/// exceeds epsilon as computed.
Tensor project_linf(const Tensor& origin, const Tensor& candidate, double epsilon);

/// x + epsilon * sign(grad), sign(0) = 0.
Tensor fgsm(const ModelState& model, const Tensor& batch, std::span<const int> labels, double epsilon);

/// `iterations` rounds of x' <- clip(x' + alpha * sign(grad at x')).
Tensor bim(const ModelState& model, const Tensor& batch, std::span<const int> labels, const AttackConfig& config);

/// Dispatches on config.method.
Tensor attack(const ModelState& model, const Tensor& batch, std::span<const int> labels, const AttackConfig& config);

double max_linf_distance(const Tensor& a, const Tensor& b);

struct AttackOutcome {
  /// Perturbed series, index-aligned with the source set, true labels kept.
  LabeledDataset adversarial;
  std::vector<bool> flipped;  // prediction changed
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
  double max_perturbation = 0.0;
};

/// Attacks every test series using the model's own clean predictions as
/// the loss labels; accuracies are measured against the true labels.
AttackOutcome attack_dataset(const ModelState& model, const LabeledDataset& test, const AttackConfig& config);

/// `<name>_adv_<method>_<eps>`.
std::string adversarial_name(const std::string& dataset_name, const AttackConfig& config);

/// Copy of `state` with a second, identical batch-norm parameter set for
/// adversarial inputs (no-op when it already has one).
ModelState with_dual_bn(const ModelState& state);

/// Per batch: craft adversarial twins with the current weights (true
/// labels, batch statistics, running statistics untouched), then minimize
/// the mean of the clean and adversarial losses. With `advprop`, twins pass
/// through their own batch-norm set; otherwise the two halves share one
/// batch. Prediction afterwards uses the clean set.
TrainResult adversarial_train(const ModelState& state, const LabeledDataset& dataset, const TrainConfig& train_config,
                              const AttackConfig& attack_config, bool advprop, const EpochCallback& on_epoch = {});

}  // namespace tsc
