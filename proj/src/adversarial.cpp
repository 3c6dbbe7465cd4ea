#include "tsc/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsc/config.hpp"
#include "tsc/error.hpp"

namespace tsc {

std::string to_string(AttackMethod method) { return method == AttackMethod::fgsm ? "fgsm" : "bim"; }

AttackMethod parse_attack_method(const std::string& name) {
  if (name == "fgsm") return AttackMethod::fgsm;
  if (name == "bim") return AttackMethod::bim;
  throw UsageError("unknown attack method '" + name + "' (expected fgsm or bim)");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw UsageError("attack: epsilon must be non-negative");
  if (iterations < 1) throw UsageError("attack: iterations must be at least 1");
  const double a = step();
  if (!(a >= 0.0) || a > epsilon) throw UsageError("attack: alpha must lie in [0, epsilon]");
}

namespace {

ForwardOptions frozen_options(ad::Mode mode, BnRoute route) {
  ForwardOptions o;
  o.mode = mode;
  o.route = route;
  o.update_running = false;
  return o;
}

Tensor gradient_at(const ModelState& model, const Tensor& batch, std::span<const int> labels,
                   const ForwardOptions& options) {
  if (model.spec.head != HeadKind::classification) throw UsageError("attack: needs a classification model");
  ad::Tape tape;
  ParameterBinding params(tape, model, false);
  const ad::Var x = tape.variable(batch);
  const ForwardResult r = forward(model, params, x, options, nullptr);
  tape.backward(ad::cross_entropy(r.output, labels));
  return x.grad();
}

double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

Tensor signed_step(const Tensor& x, const Tensor& grad, double step) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += step * sign(grad[i]);
  return out;
}

}  // namespace

Tensor input_gradient(const ModelState& model, const Tensor& batch, std::span<const int> labels) {
  return gradient_at(model, batch, labels, frozen_options(ad::Mode::eval, BnRoute::clean));
}

Tensor project_linf(const Tensor& origin, const Tensor& candidate, double epsilon) {
  if (origin.shape() != candidate.shape()) throw ShapeError("project_linf", "shape", "origin and candidate differ");
  Tensor out = candidate;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = origin[i];
    double v = std::min(x + epsilon, std::max(x - epsilon, out[i]));
    while (std::abs(v - x) > epsilon) v = std::nextafter(v, x);
    out[i] = v;
  }
  return out;
}

Tensor fgsm(const ModelState& model, const Tensor& batch, std::span<const int> labels, double epsilon) {
  const Tensor g = input_gradient(model, batch, labels);
  return project_linf(batch, signed_step(batch, g, epsilon), epsilon);
}

Tensor bim(const ModelState& model, const Tensor& batch, std::span<const int> labels, const AttackConfig& config) {
  config.validate();
  const double alpha = config.step();
  Tensor x = batch;
  for (int it = 0; it < config.iterations; ++it) {
    const Tensor g = input_gradient(model, x, labels);
    x = project_linf(batch, signed_step(x, g, alpha), config.epsilon);
  }
  return x;
}

Tensor attack(const ModelState& model, const Tensor& batch, std::span<const int> labels, const AttackConfig& config) {
  config.validate();
  return config.method == AttackMethod::fgsm ? fgsm(model, batch, labels, config.epsilon)
                                             : bim(model, batch, labels, config);
}

double max_linf_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_linf_distance", "shape", "tensors differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

AttackOutcome attack_dataset(const ModelState& model, const LabeledDataset& test, const AttackConfig& config) {
  config.validate();
  test.validate();
  if (test.size() == 0) throw DataError("attack: empty dataset");
  constexpr std::size_t chunk = 64;
  AttackOutcome out;
  out.adversarial = test;
  out.flipped.assign(test.size(), false);
  std::size_t clean_ok = 0, adv_ok = 0;
  const std::size_t dims = test.dims(), length = test.length();
  for (std::size_t start = 0; start < test.size(); start += chunk) {
    std::vector<std::size_t> idx(std::min(chunk, test.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor x = test.batch(idx);
    const std::vector<int> clean_pred = argmax_rows(predict(model, x));
    const Tensor xa = attack(model, x, clean_pred, config);
    const double dist = max_linf_distance(x, xa);
    if (dist > config.epsilon) throw NumericError("attack: perturbation left the epsilon ball");
    out.max_perturbation = std::max(out.max_perturbation, dist);
    const std::vector<int> adv_pred = argmax_rows(predict(model, xa));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const std::size_t i = idx[b];
      TimeSeries s(dims, length);
      std::copy_n(xa.raw() + b * dims * length, dims * length, s.values().begin());
      out.adversarial.series[i] = std::move(s);
      out.flipped[i] = clean_pred[b] != adv_pred[b];
      clean_ok += clean_pred[b] == test.labels[i];
      adv_ok += adv_pred[b] == test.labels[i];
    }
  }
  const double n = static_cast<double>(test.size());
  out.clean_accuracy = static_cast<double>(clean_ok) / n;
  out.adversarial_accuracy = static_cast<double>(adv_ok) / n;
  out.adversarial.name = adversarial_name(test.name, config);
  return out;
}

std::string adversarial_name(const std::string& dataset_name, const AttackConfig& config) {
  return dataset_name + "_adv_" + to_string(config.method) + "_" + format_double(config.epsilon);
}

ModelState with_dual_bn(const ModelState& state) {
  if (state.spec.dual_bn) return state;
  ModelSpec spec = state.spec;
  spec.dual_bn = true;
  ModelState dual = build_model(spec);
  auto fill = [](ParameterMap& target, const ParameterMap& source) {
    for (auto& [name, t] : target) {
      auto it = source.find(name);
      if (it == source.end()) {
        std::string base = name;
        base.erase(base.rfind(".adv."), 4);
        it = source.find(base);
      }
      t = it->second;
    }
  };
  fill(dual.parameters, state.parameters);
  fill(dual.running_stats, state.running_stats);
  dual.meta = state.meta;
  return dual;
}

TrainResult adversarial_train(const ModelState& state, const LabeledDataset& dataset, const TrainConfig& train_config,
                              const AttackConfig& attack_config, bool advprop, const EpochCallback& on_epoch) {
  attack_config.validate();
  if (train_config.loss != LossKind::cross_entropy) throw UsageError("adversarial training needs cross-entropy");
  ModelState start = advprop ? with_dual_bn(state) : state;
  if (!advprop && start.spec.dual_bn) throw UsageError("adversarial training without advprop expects a single BN set");

  const BatchObjective objective = [attack_config, advprop](const ModelState& s, const Tensor& batch,
                                                            std::span<const int> labels, const Tensor*, Rng& rng,
                                                            ParameterMap* stats) {
    const BnRoute adv_route = advprop ? BnRoute::adversarial : BnRoute::clean;
    const ForwardOptions craft = frozen_options(ad::Mode::train, adv_route);
    Tensor twin = batch;
    const double eps = attack_config.epsilon;
    const int rounds = attack_config.method == AttackMethod::fgsm ? 1 : attack_config.iterations;
    const double step = attack_config.method == AttackMethod::fgsm ? eps : attack_config.step();
    for (int it = 0; it < rounds; ++it) {
      const Tensor g = gradient_at(s, twin, labels, craft);
      twin = project_linf(batch, signed_step(twin, g, step), eps);
    }

    ForwardOptions fo;
    fo.mode = ad::Mode::train;
    fo.dropout_rng = &rng;
    ad::Tape tape;
    ParameterBinding params(tape, s, true);
    ad::Var loss;
    if (advprop) {
      const ForwardResult clean = forward(s, params, tape.constant(batch), fo, stats);
      fo.route = BnRoute::adversarial;
      const ForwardResult adv = forward(s, params, tape.constant(twin), fo, stats);
      loss = ad::scale(ad::add(ad::cross_entropy(clean.output, labels), ad::cross_entropy(adv.output, labels)), 0.5);
    } else {
      const Shape& sh = batch.shape();
      std::vector<double> both(batch.values());
      both.insert(both.end(), twin.values().begin(), twin.values().end());
      std::vector<int> both_labels(labels.begin(), labels.end());
      both_labels.insert(both_labels.end(), labels.begin(), labels.end());
      const ForwardResult r = forward(s, params, tape.constant(Tensor(Shape{2 * sh[0], sh[1], sh[2]}, std::move(both))),
                                      fo, stats);
      loss = ad::cross_entropy(r.output, both_labels);
    }
    tape.backward(loss);
    return LossGradient{loss.value().item(), params.gradients()};
  };
  return train_with_objective(std::move(start), dataset, train_config, objective, on_epoch);
}

}  // namespace tsc
