#include "tsc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "tsc/error.hpp"

namespace tsc {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

double glorot_bound(const Shape& s) {
  double fan_in = 0.0, fan_out = 0.0;
  if (s.size() == 3) {
    fan_in = static_cast<double>(s[1] * s[2]);
    fan_out = static_cast<double>(s[0] * s[2]);
  } else if (s.size() == 2) {
    fan_in = static_cast<double>(s[1]);
    fan_out = static_cast<double>(s[0]);
  } else {
    throw ShapeError("glorot_bound", "rank", "expected a dense or convolution weight, got " + shape_string(s));
  }
  return std::sqrt(6.0 / (fan_in + fan_out));
}

void glorot_fill(Tensor& weight, Rng& rng) {
  const double a = glorot_bound(weight.shape());
  for (double& v : weight.data()) v = rng.uniform(-a, a);
}

ModelState glorot_uniform_init(ModelState state, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : state.parameters) {
    if (ends_with(name, ".weight")) {
      glorot_fill(t, rng);
    } else if (ends_with(name, ".gamma")) {
      t.fill(1.0);
    } else {
      t.fill(0.0);
    }
  }
  for (auto& [name, t] : state.running_stats) t.fill(ends_with(name, ".var") ? 1.0 : 0.0);
  state.meta = TrainMeta{};
  return state;
}

ModelState make_model(const ModelSpec& spec, std::uint64_t seed) {
  return glorot_uniform_init(build_model(spec), seed);
}

void adam_step(ParameterMap& params, const ParameterMap& grads, AdamState& state, const AdamConfig& config) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
    if (!params.count(name)) throw UsageError("adam_step: gradient for unknown parameter '" + name + "'");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (g.shape() != p.shape()) throw ShapeError("adam_step", name, "gradient shape differs from the parameter");
    auto [mi, m_new] = state.m.try_emplace(name, Tensor::zeros_like(p));
    auto [vi, v_new] = state.v.try_emplace(name, Tensor::zeros_like(p));
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= config.lr * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

double PlateauScheduler::observe(double loss) {
  if (!seen_ || loss < best_) {
    best_ = loss;
    seen_ = true;
    wait_ = 0;
    return lr_;
  }
  if (++wait_ >= config_.patience) {
    lr_ = std::max(lr_ * config_.factor, config_.min_lr);
    wait_ = 0;
  }
  return lr_;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("train config: epochs must be at least 1");
  if (batch_size < 1) throw UsageError("train config: batch_size must be at least 1");
  if (!(adam.lr > 0.0)) throw UsageError("train config: lr must be positive");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0) || !(adam.beta2 > 0.0 && adam.beta2 < 1.0)) {
    throw UsageError("train config: beta1 and beta2 must lie in (0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw UsageError("train config: adam_epsilon must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw UsageError("train config: val_fraction must lie in [0, 1)");
  if (checkpoint == Monitor::val_loss && val_fraction == 0.0) {
    throw UsageError("train config: checkpoint = best_val_loss needs val_fraction > 0");
  }
  if (lr_reduce) {
    if (!(lr_reduce->factor > 0.0 && lr_reduce->factor < 1.0)) throw UsageError("train config: lr_factor must lie in (0, 1)");
    if (lr_reduce->patience < 1) throw UsageError("train config: lr_patience must be at least 1");
  }
  if (max_seconds && !(*max_seconds > 0.0)) throw UsageError("train config: max_seconds must be positive");
}

Config TrainConfig::to_config() const {
  Config c;
  c.set("epochs", std::to_string(epochs));
  c.set("batch_size", std::to_string(batch_size));
  c.set("lr", format_double(adam.lr));
  c.set("beta1", format_double(adam.beta1));
  c.set("beta2", format_double(adam.beta2));
  c.set("adam_epsilon", format_double(adam.epsilon));
  c.set("lr_reduce", lr_reduce ? "true" : "false");
  if (lr_reduce) {
    c.set("lr_factor", format_double(lr_reduce->factor));
    c.set("lr_patience", std::to_string(lr_reduce->patience));
    c.set("min_lr", format_double(lr_reduce->min_lr));
  }
  c.set("loss", loss == LossKind::cross_entropy ? "cross_entropy" : "mse");
  c.set("seed", std::to_string(seed));
  c.set("checkpoint", checkpoint == Monitor::train_loss ? "best_train_loss" : "best_val_loss");
  c.set("val_fraction", format_double(val_fraction));
  if (max_seconds) c.set("max_seconds", format_double(*max_seconds));
  return c;
}

TrainConfig TrainConfig::from_config(const Config& config) { return from_config(config, TrainConfig{}); }

TrainConfig TrainConfig::from_config(const Config& config, const TrainConfig& d) {
  TrainConfig c = d;
  c.epochs = static_cast<int>(config.get_int("epochs", d.epochs));
  c.batch_size = static_cast<int>(config.get_int("batch_size", d.batch_size));
  c.adam.lr = config.get_double("lr", d.adam.lr);
  c.adam.beta1 = config.get_double("beta1", d.adam.beta1);
  c.adam.beta2 = config.get_double("beta2", d.adam.beta2);
  c.adam.epsilon = config.get_double("adam_epsilon", d.adam.epsilon);
  if (config.get_bool("lr_reduce", d.lr_reduce.has_value())) {
    const PlateauConfig base = d.lr_reduce.value_or(PlateauConfig{});
    c.lr_reduce = PlateauConfig{config.get_double("lr_factor", base.factor),
                                static_cast<int>(config.get_int("lr_patience", base.patience)),
                                config.get_double("min_lr", base.min_lr)};
  } else {
    c.lr_reduce.reset();
  }
  const std::string loss = config.get_string("loss", d.loss == LossKind::cross_entropy ? "cross_entropy" : "mse");
  if (loss == "cross_entropy") {
    c.loss = LossKind::cross_entropy;
  } else if (loss == "mse") {
    c.loss = LossKind::mse;
  } else {
    throw UsageError("train config: unknown loss '" + loss + "'");
  }
  const long long seed = config.get_int("seed", static_cast<long long>(d.seed));
  if (seed < 0) throw UsageError("train config: seed must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  const std::string ck =
      config.get_string("checkpoint", d.checkpoint == Monitor::train_loss ? "best_train_loss" : "best_val_loss");
  if (ck == "best_train_loss") {
    c.checkpoint = Monitor::train_loss;
  } else if (ck == "best_val_loss") {
    c.checkpoint = Monitor::val_loss;
  } else {
    throw UsageError("train config: unknown checkpoint '" + ck + "'");
  }
  c.val_fraction = config.get_double("val_fraction", d.val_fraction);
  if (config.contains("max_seconds")) c.max_seconds = config.get_double("max_seconds", 0.0);
  c.validate();
  return c;
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,lr\n";
  for (const auto& r : epochs) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << (r.val_loss ? format_double(*r.val_loss) : "")
        << ',' << format_double(r.lr) << '\n';
  }
}

namespace {

Tensor target_rows(const LabeledDataset& ds, std::span<const std::size_t> idx) {
  if (ds.targets.size() != ds.size()) throw DataError("mse loss needs one target row per series");
  const std::size_t width = ds.targets.front().size();
  std::vector<double> v;
  v.reserve(idx.size() * width);
  for (std::size_t i : idx) {
    if (ds.targets[i].size() != width) throw DataError("target rows have unequal widths");
    v.insert(v.end(), ds.targets[i].begin(), ds.targets[i].end());
  }
  return Tensor(Shape{idx.size(), width}, std::move(v));
}

std::vector<int> label_rows(const LabeledDataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(ds.labels[i]);
  return out;
}

ad::Var loss_node(ad::Var output, std::span<const int> labels, const Tensor* targets, LossKind loss) {
  if (loss == LossKind::cross_entropy) return ad::cross_entropy(output, labels);
  if (!targets) throw UsageError("mse loss needs targets");
  return ad::mse_loss(output, *targets);
}

}  // namespace

LossGradient loss_gradient(const ModelState& state, const Tensor& batch, std::span<const int> labels,
                           const Tensor* targets, LossKind loss, const ForwardOptions& options,
                           ParameterMap* running_stats) {
  ad::Tape tape;
  ParameterBinding params(tape, state, true);
  const ForwardResult r = forward(state, params, tape.constant(batch), options, running_stats);
  const ad::Var l = loss_node(r.output, labels, targets, loss);
  tape.backward(l);
  return LossGradient{l.value().item(), params.gradients()};
}

double evaluate_loss(const ModelState& state, const LabeledDataset& dataset, LossKind loss) {
  constexpr std::size_t chunk = 64;
  double total = 0.0;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    std::vector<std::size_t> idx(std::min(chunk, dataset.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    ad::Tape tape;
    ParameterBinding params(tape, state, false);
    const ForwardResult r = forward(state, params, tape.constant(dataset.batch(idx)), ForwardOptions{}, nullptr);
    const std::vector<int> labels = loss == LossKind::cross_entropy ? label_rows(dataset, idx) : std::vector<int>{};
    const Tensor targets = loss == LossKind::mse ? target_rows(dataset, idx) : Tensor{};
    total += loss_node(r.output, labels, &targets, loss).value().item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(dataset.size());
}

TrainResult train(ModelState state, const LabeledDataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  const LossKind loss = config.loss;
  const BatchObjective plain = [loss](const ModelState& s, const Tensor& batch, std::span<const int> labels,
                                      const Tensor* targets, Rng& rng, ParameterMap* stats) {
    ForwardOptions fo;
    fo.mode = ad::Mode::train;
    fo.dropout_rng = &rng;
    return loss_gradient(s, batch, labels, targets, loss, fo, stats);
  };
  return train_with_objective(std::move(state), dataset, config, plain, on_epoch);
}

TrainResult train_with_objective(ModelState state, const LabeledDataset& dataset, const TrainConfig& config,
                                 const BatchObjective& objective, const EpochCallback& on_epoch) {
  config.validate();
  dataset.validate();
  if (dataset.size() == 0) throw DataError("train: empty dataset");
  (void)dataset.length();
  if (config.loss == LossKind::cross_entropy && state.spec.head != HeadKind::classification) {
    throw UsageError("train: cross-entropy needs a classification head");
  }
  if (config.loss == LossKind::cross_entropy && dataset.n_classes > state.spec.n_classes) {
    throw DataError("train: dataset has more classes than the model outputs");
  }

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  LabeledDataset train_set, val_set;
  if (config.val_fraction > 0.0) {
    Rng split = Rng::derive(config.seed, ~0ULL);
    split.shuffle(order);
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(dataset.size()))));
    if (n_val >= dataset.size()) throw DataError("train: validation split leaves no training data");
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    val_set = dataset.subset(val_idx);
    train_set = dataset.subset(train_idx);
  } else {
    train_set = dataset;
  }

  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  AdamState adam;
  AdamConfig adam_cfg = config.adam;
  std::optional<PlateauScheduler> plateau;
  if (config.lr_reduce) plateau.emplace(adam_cfg.lr, *config.lr_reduce);

  ModelState best = state;
  double best_loss = std::numeric_limits<double>::infinity();
  const std::size_t n = train_set.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng = Rng::derive(config.seed, static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);

    double sum = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      std::span<const std::size_t> b(idx.data() + start, std::min(bs, n - start));
      const Tensor batch = train_set.batch(b);
      const std::vector<int> labels =
          config.loss == LossKind::cross_entropy ? label_rows(train_set, b) : std::vector<int>{};
      const Tensor targets = config.loss == LossKind::mse ? target_rows(train_set, b) : Tensor{};
      LossGradient lg = objective(state, batch, labels, &targets, rng, &state.running_stats);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (last finite epoch " +
                           std::to_string(epoch - 1) + ")");
      }
      try {
        adam_step(state.parameters, lg.gradients, adam, adam_cfg);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + " (last finite epoch " +
                           std::to_string(epoch - 1) + ")");
      }
      sum += lg.loss * static_cast<double>(b.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / static_cast<double>(n);
    rec.lr = adam_cfg.lr;
    if (val_set.size() > 0) rec.val_loss = evaluate_loss(state, val_set, config.loss);
    const double monitored = report.monitored(rec, config.checkpoint);
    if (!std::isfinite(monitored)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (last finite epoch " +
                         std::to_string(epoch - 1) + ")");
    }
    report.epochs.push_back(rec);
    if (monitored < best_loss) {
      best_loss = monitored;
      best = state;
      report.checkpoint_epoch = epoch;
    }
    if (plateau) adam_cfg.lr = plateau->observe(monitored);
    if (on_epoch) on_epoch(rec);

    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (config.max_seconds && elapsed > *config.max_seconds && epoch < config.epochs) {
      report.stopped_by_budget = true;
      break;
    }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  best.meta.epochs_seen = state.meta.epochs_seen + static_cast<int>(report.epochs.size());
  best.meta.checkpoint_tag = "epoch_" + std::to_string(report.checkpoint_epoch);
  return TrainResult{std::move(best), std::move(report)};
}

ModelState replace_head(const ModelState& pretrained, const LabeledDataset& target, std::uint64_t seed) {
  if (!pretrained.spec.gap_terminated()) {
    throw UsageError("fine-tune: the " + to_string(pretrained.spec.architecture) +
                     " has no global pooling layer, so its layers are not transferable");
  }
  if (target.dims() != static_cast<std::size_t>(pretrained.spec.input_dims)) {
    throw DataError("fine-tune: target has " + std::to_string(target.dims()) + " dimensions, model expects " +
                    std::to_string(pretrained.spec.input_dims));
  }
  ModelState state = pretrained;
  state.spec.head = HeadKind::classification;
  state.spec.n_classes = target.n_classes;
  state.spec.validate();
  const Tensor& old_w = pretrained.parameters.at("head.weight");
  Tensor w(Shape{static_cast<std::size_t>(target.n_classes), old_w.dim(1)});
  Rng rng = Rng::derive(seed, 0x4845414455ULL);
  glorot_fill(w, rng);
  state.parameters["head.weight"] = std::move(w);
  state.parameters["head.bias"] = Tensor(Shape{static_cast<std::size_t>(target.n_classes)});
  state.meta = TrainMeta{};
  return state;
}

TrainResult fine_tune(const ModelState& pretrained, const LabeledDataset& target, const TrainConfig& config,
                      const EpochCallback& on_epoch) {
  return train(replace_head(pretrained, target, config.seed), target, config, on_epoch);
}

}  // namespace tsc
