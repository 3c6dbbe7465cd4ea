#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsc/autodiff.hpp"
#include "tsc/config.hpp"
#include "tsc/dataset.hpp"
#include "tsc/tensor.hpp"

namespace tsc {

enum class Architecture { mlp, fcn, resnet, inception };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

struct InceptionParams {
  int depth = 6;
  int n_filters = 32;
  std::vector<int> kernel_sizes{10, 20, 40};
  int bottleneck_size = 32;
  bool use_residual = true;
  bool use_bottleneck = true;
};

enum class HeadKind { classification, regression };

/// Declarative architecture description. Serializes to the flat
/// `key = value` grammar used by config files and model files.
struct ModelSpec {
  Architecture architecture = Architecture::fcn;
  int input_dims = 1;
  /// Required by the MLP; GAP-terminated nets accept any length.
  std::optional<int> input_length;
  int n_classes = 2;
  InceptionParams inception;
  HeadKind head = HeadKind::classification;
  /// Regression head width.
  int outputs = 1;
  /// Second batch-norm parameter set for adversarial inputs (AdvProp).
  bool dual_bn = false;

  void validate() const;
  /// Units of the final dense layer.
  int head_units() const { return head == HeadKind::classification ? n_classes : outputs; }
  bool gap_terminated() const { return architecture != Architecture::mlp; }

  Config to_config() const;
  static ModelSpec from_config(const Config& config);

  friend bool operator==(const ModelSpec&, const ModelSpec&);
};

/// Name -> tensor, iterated in sorted order.
using ParameterMap = std::map<std::string, Tensor>;

struct TrainMeta {
  int epochs_seen = 0;
  std::string checkpoint_tag;
};

struct ModelState {
  ModelSpec spec;
  ParameterMap parameters;
  ParameterMap running_stats;
  TrainMeta meta;

  std::size_t parameter_count() const;
};

/// Parameter shapes for a model spec with BN gamma = 1, beta = 0, running
/// mean 0 / var 1 and every weight and bias zero. See glorot_uniform_init
/// and make_model in training.hpp for usable weights.
ModelState build_model(const ModelSpec& spec);
ModelState build_fcn(const ModelSpec& spec);
ModelState build_resnet(const ModelSpec& spec);
ModelState build_inception(const ModelSpec& spec);
ModelState build_mlp(const ModelSpec& spec);

/// Kernel lengths along the longest stride-1 path through the network.
std::vector<int> receptive_kernels(const ModelSpec& spec);
/// 1 + sum(k_i - 1).
int receptive_field(std::span<const int> kernel_lengths);
int receptive_field(const ModelSpec& spec);

/// Number of convolution layers with a kernel longer than one along the
/// main path, plus GAP and the softmax layer (the usual layer count).
int layer_count(const ModelSpec& spec);
/// Number of residual additions in the network.
int residual_count(const ModelSpec& spec);

/// Which batch-norm parameter set a forward pass routes through.
enum class BnRoute { clean, adversarial };

struct ForwardOptions {
  ad::Mode mode = ad::Mode::eval;
  BnRoute route = BnRoute::clean;
  /// Train mode only: fold batch statistics into the running ones.
  bool update_running = true;
  Rng* dropout_rng = nullptr;
  ad::BatchNormOptions batch_norm{};
};

/// Tape variables for the model's parameters, created on first use so
/// several forward passes on one tape share (and accumulate into) them.
class ParameterBinding {
 public:
  ParameterBinding(ad::Tape& tape, const ModelState& state, bool trainable = true)
      : tape_(tape), state_(state), trainable_(trainable) {}

  ad::Var get(const std::string& name);
  const std::map<std::string, ad::Var>& bound() const noexcept { return vars_; }
  /// Gradients of every bound parameter after Tape::backward.
  ParameterMap gradients() const;
  ad::Tape& tape() const noexcept { return tape_; }

 private:
  ad::Tape& tape_;
  const ModelState& state_;
  bool trainable_;
  std::map<std::string, ad::Var> vars_;
};

struct ForwardResult {
  ad::Var output;           // probabilities (classification) or raw outputs
  ad::Var logits;           // pre-softmax dense output
  ad::Var features;         // GAP output [B, F]; invalid for the MLP
  ad::Var last_activation;  // input of GAP [B, F, T]; invalid for the MLP
};

/// Records one forward pass of `input` [B, D, T] on the binding's tape.
/// `running_stats` receives batch-norm updates in train mode (pass null to
/// leave statistics untouched).
ForwardResult forward(const ModelState& state, ParameterBinding& params, ad::Var input, const ForwardOptions& options,
                      ParameterMap* running_stats);

/// Eval-mode probabilities [B, K] (or regression outputs [B, outputs]).
Tensor predict(const ModelState& state, const Tensor& batch);
/// Eval-mode probabilities for every series of a dataset, processed in
/// fixed chunks of `batch_size`.
Tensor predict(const ModelState& state, const LabeledDataset& dataset, std::size_t batch_size = 64);
std::vector<int> predict_labels(const ModelState& state, const LabeledDataset& dataset);
std::vector<int> argmax_rows(const Tensor& probs);

/// Mean of the members' probabilities, accumulated in list order.
Tensor ensemble_predict(std::span<const ModelState> models, const Tensor& batch);
Tensor ensemble_predict(std::span<const ModelState> models, const LabeledDataset& dataset);

/// Binary model file: magic "TSCM", u32 version, spec block, parameter and
/// running-statistic sections, training metadata. Little-endian throughout.
void save_model(const ModelState& state, const std::filesystem::path& path);
ModelState load_model(const std::filesystem::path& path);
std::string serialize_model(const ModelState& state);
ModelState deserialize_model(const std::string& bytes);

inline constexpr std::uint32_t kModelFormatVersion = 1;

}  // namespace tsc
