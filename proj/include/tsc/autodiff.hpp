#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tsc/rng.hpp"
#include "tsc/tensor.hpp"

namespace tsc::ad {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  /// Accumulated gradient after Tape::backward; zeros if nothing reached the node.
  Tensor grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Accumulates one contribution into each input gradient. A null entry
/// means that input does not require a gradient and must be skipped.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> input_grads)>;

/// Define-by-run record of primitive operations.
///
/// Nodes are appended in execution order, so inputs always precede their
/// consumers and a reverse sweep is a valid topological traversal. A tape is
/// single-owner; build a fresh one per forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Appends an operation node. The node requires a gradient iff any input
  /// does; otherwise `backward` is dropped.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a one-element loss node. Seeds d(loss)/d(loss) = 1.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  Tensor grad(std::size_t id) const;
  bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Tensor& grad_slot(std::size_t id);

  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitive operations. Activations are laid out [batch, channels, time];
// dense inputs are [batch, features].

enum class Padding { same, valid };

struct Conv1dOptions {
  Padding padding = Padding::same;
  std::size_t stride = 1;
};

/// Cross-correlation of x [B, C_in, T] with w [C_out, C_in, L] plus an
/// optional bias [C_out]. `same` keeps T (stride 1 only) with zero padding;
/// even kernel lengths put the extra zero on the right. A rank-2 input
/// [C_in, T] is treated as a batch of one and returns rank 2.
Var conv1d(Var x, Var w, std::optional<Var> bias, Conv1dOptions options = {});

enum class Mode { train, eval };

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
  /// In train mode, whether the running statistics absorb the batch ones.
  bool update_running = true;
};

/// Per-channel running statistics, each [C].
struct RunningStats {
  Tensor mean;
  Tensor var;
};

/// Per-channel normalization over batch and time of x [B, C, T].
/// Train mode uses the batch statistics and, when options.update_running is
/// set, folds them into `stats` by exponential moving average (unbiased
/// variance). Eval mode normalizes with `stats` and leaves it untouched.
Var batch_norm1d(Var x, Var gamma, Var beta, RunningStats& stats, Mode mode, BatchNormOptions options = {});

Var relu(Var x);
Var max_pool1d(Var x, std::size_t window, std::size_t stride, Padding padding = Padding::valid);
/// [B, C, T] -> [B, C]; rank-2 [C, T] -> [C].
Var global_avg_pool(Var x);
/// x [B, F] times w [K, F] transposed, plus b [K].
Var dense(Var x, Var w, Var b);
/// Row-wise over the last axis of [B, K] (or a single [K] row).
Var softmax(Var logits);
/// Inverted dropout: identity in eval mode.
Var dropout(Var x, double rate, Mode mode, Rng& rng);
Var reshape(Var x, Shape shape);
Var add(Var a, Var b);
Var scale(Var x, double factor);
/// Concatenates [B, C_i, T] tensors along the channel axis.
Var concat_channels(const std::vector<Var>& parts);

inline constexpr double kProbabilityFloor = 1e-12;

/// Batch-mean categorical cross-entropy -sum_j y_j log(max(p_j, 1e-12)).
Var cross_entropy(Var probs, const Tensor& one_hot);
Var cross_entropy(Var probs, std::span<const int> labels);
/// Batch-mean of the per-sample mean squared error.
Var mse_loss(Var pred, const Tensor& target);

Tensor one_hot(std::span<const int> labels, std::size_t n_classes);

}  // namespace tsc::ad
