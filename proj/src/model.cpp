#include "tsc/model.hpp"

#include <algorithm>
#include <numeric>

#include "tsc/error.hpp"

namespace tsc {

namespace {

constexpr int kFcnFilters[3] = {128, 256, 128};
constexpr int kResnetFilters[3] = {64, 128, 128};
constexpr int kBlockKernels[3] = {8, 5, 3};
constexpr int kMlpUnits = 500;
constexpr double kMlpDropout[4] = {0.1, 0.2, 0.2, 0.3};
constexpr int kPoolWindow = 3;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

struct Builder {
  ModelState state;

  void conv(const std::string& name, int cout, int cin, int length, bool bias) {
    state.parameters[name + ".weight"] = Tensor(Shape{sz(cout), sz(cin), sz(length)});
    if (bias) state.parameters[name + ".bias"] = Tensor(Shape{sz(cout)});
  }

  void bn_set(const std::string& name, int channels) {
    state.parameters[name + ".gamma"] = Tensor(Shape{sz(channels)}, 1.0);
    state.parameters[name + ".beta"] = Tensor(Shape{sz(channels)});
    state.running_stats[name + ".mean"] = Tensor(Shape{sz(channels)});
    state.running_stats[name + ".var"] = Tensor(Shape{sz(channels)}, 1.0);
  }

  void bn(const std::string& name, int channels) {
    bn_set(name, channels);
    if (state.spec.dual_bn) bn_set(name + ".adv", channels);
  }

  void dense(const std::string& name, int units, int in) {
    state.parameters[name + ".weight"] = Tensor(Shape{sz(units), sz(in)});
    state.parameters[name + ".bias"] = Tensor(Shape{sz(units)});
  }
};

void require_arch(const ModelSpec& spec, Architecture arch) {
  spec.validate();
  if (spec.architecture != arch) {
    throw UsageError("build_" + to_string(arch) + ": spec describes a " + to_string(spec.architecture));
  }
}

int inception_channels(const ModelSpec& spec) {
  return spec.inception.n_filters * static_cast<int>(spec.inception.kernel_sizes.size() + 1);
}

}  // namespace

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::mlp: return "mlp";
    case Architecture::fcn: return "fcn";
    case Architecture::resnet: return "resnet";
    case Architecture::inception: return "inception";
  }
  return "unknown";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "mlp") return Architecture::mlp;
  if (name == "fcn") return Architecture::fcn;
  if (name == "resnet") return Architecture::resnet;
  if (name == "inception") return Architecture::inception;
  throw UsageError("unknown architecture '" + name + "' (expected mlp, fcn, resnet or inception)");
}

void ModelSpec::validate() const {
  if (input_dims < 1) throw UsageError("model spec: input_dims must be at least 1");
  if (input_length && *input_length < 1) throw UsageError("model spec: input_length must be at least 1");
  if (head == HeadKind::classification && n_classes < 2) throw UsageError("model spec: n_classes must be at least 2");
  if (head == HeadKind::regression && outputs < 1) throw UsageError("model spec: outputs must be at least 1");
  if (architecture == Architecture::mlp && !input_length) {
    throw UsageError("model spec: the mlp needs a fixed input_length");
  }
  if (architecture == Architecture::inception) {
    const auto& p = inception;
    if (p.depth < 1) throw UsageError("model spec: depth must be at least 1");
    if (p.n_filters < 1) throw UsageError("model spec: n_filters must be at least 1");
    if (p.bottleneck_size < 1) throw UsageError("model spec: bottleneck_size must be at least 1");
    if (p.kernel_sizes.empty()) throw UsageError("model spec: kernel_sizes is empty");
    if (!std::is_sorted(p.kernel_sizes.begin(), p.kernel_sizes.end()) || p.kernel_sizes.front() < 1) {
      throw UsageError("model spec: kernel_sizes must be positive and ascending");
    }
  }
}

Config ModelSpec::to_config() const {
  Config c;
  c.set("architecture", to_string(architecture));
  c.set("input_dims", std::to_string(input_dims));
  c.set("input_length", input_length ? std::to_string(*input_length) : "any");
  c.set("n_classes", std::to_string(n_classes));
  c.set("head", head == HeadKind::classification ? "classification" : "regression");
  c.set("outputs", std::to_string(outputs));
  c.set("dual_bn", dual_bn ? "true" : "false");
  if (architecture == Architecture::inception) {
    c.set("depth", std::to_string(inception.depth));
    c.set("n_filters", std::to_string(inception.n_filters));
    std::string ks;
    for (std::size_t i = 0; i < inception.kernel_sizes.size(); ++i) {
      if (i) ks += ',';
      ks += std::to_string(inception.kernel_sizes[i]);
    }
    c.set("kernel_sizes", ks);
    c.set("bottleneck_size", std::to_string(inception.bottleneck_size));
    c.set("use_residual", inception.use_residual ? "true" : "false");
    c.set("use_bottleneck", inception.use_bottleneck ? "true" : "false");
  }
  return c;
}

ModelSpec ModelSpec::from_config(const Config& config) {
  ModelSpec s;
  s.architecture = parse_architecture(config.get_string("architecture", "fcn"));
  s.input_dims = static_cast<int>(config.get_int("input_dims", 1));
  const std::string len = config.get_string("input_length", "any");
  if (len != "any") s.input_length = static_cast<int>(parse_int(len, "input_length"));
  s.n_classes = static_cast<int>(config.get_int("n_classes", 2));
  const std::string head = config.get_string("head", "classification");
  if (head == "classification") {
    s.head = HeadKind::classification;
  } else if (head == "regression") {
    s.head = HeadKind::regression;
  } else {
    throw UsageError("model spec: unknown head '" + head + "'");
  }
  s.outputs = static_cast<int>(config.get_int("outputs", 1));
  s.dual_bn = config.get_bool("dual_bn", false);
  InceptionParams& p = s.inception;
  p.depth = static_cast<int>(config.get_int("depth", p.depth));
  p.n_filters = static_cast<int>(config.get_int("n_filters", p.n_filters));
  p.kernel_sizes = config.get_int_list("kernel_sizes", p.kernel_sizes);
  p.bottleneck_size = static_cast<int>(config.get_int("bottleneck_size", p.bottleneck_size));
  p.use_residual = config.get_bool("use_residual", p.use_residual);
  p.use_bottleneck = config.get_bool("use_bottleneck", p.use_bottleneck);
  s.validate();
  return s;
}

bool operator==(const ModelSpec& a, const ModelSpec& b) {
  return a.to_config().entries() == b.to_config().entries();
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters) n += t.size();
  return n;
}

ModelState build_fcn(const ModelSpec& spec) {
  require_arch(spec, Architecture::fcn);
  Builder b{ModelState{spec, {}, {}, {}}};
  int cin = spec.input_dims;
  for (int i = 0; i < 3; ++i) {
    const std::string n = std::to_string(i + 1);
    b.conv("conv" + n, kFcnFilters[i], cin, kBlockKernels[i], true);
    b.bn("bn" + n, kFcnFilters[i]);
    cin = kFcnFilters[i];
  }
  b.dense("head", spec.head_units(), cin);
  return std::move(b.state);
}

ModelState build_resnet(const ModelSpec& spec) {
  require_arch(spec, Architecture::resnet);
  Builder b{ModelState{spec, {}, {}, {}}};
  int cin = spec.input_dims;
  for (int blk = 0; blk < 3; ++blk) {
    const std::string p = "block" + std::to_string(blk + 1) + ".";
    const int f = kResnetFilters[blk];
    int c = cin;
    for (int i = 0; i < 3; ++i) {
      const std::string n = std::to_string(i + 1);
      b.conv(p + "conv" + n, f, c, kBlockKernels[i], true);
      b.bn(p + "bn" + n, f);
      c = f;
    }
    if (cin != f) {
      b.conv(p + "shortcut", f, cin, 1, true);
      b.bn(p + "shortcut_bn", f);
    }
    cin = f;
  }
  b.dense("head", spec.head_units(), cin);
  return std::move(b.state);
}

ModelState build_inception(const ModelSpec& spec) {
  require_arch(spec, Architecture::inception);
  const InceptionParams& ip = spec.inception;
  Builder b{ModelState{spec, {}, {}, {}}};
  const int cout = inception_channels(spec);
  int cin = spec.input_dims;
  int res_in = cin;
  for (int m = 0; m < ip.depth; ++m) {
    const std::string p = "inception" + std::to_string(m + 1) + ".";
    int cb = cin;
    if (ip.use_bottleneck) {
      b.conv(p + "bottleneck", ip.bottleneck_size, cin, 1, false);
      cb = ip.bottleneck_size;
    }
    for (std::size_t j = 0; j < ip.kernel_sizes.size(); ++j) {
      b.conv(p + "conv" + std::to_string(j + 1), ip.n_filters, cb, ip.kernel_sizes[j], false);
    }
    b.conv(p + "pool_conv", ip.n_filters, cin, 1, false);
    b.bn(p + "bn", cout);
    cin = cout;
    if (ip.use_residual && m % 3 == 2) {
      if (res_in != cout) {
        const std::string r = "residual" + std::to_string(m / 3 + 1) + ".";
        b.conv(r + "conv", cout, res_in, 1, false);
        b.bn(r + "bn", cout);
      }
      res_in = cout;
    }
  }
  b.dense("head", spec.head_units(), cout);
  return std::move(b.state);
}

ModelState build_mlp(const ModelSpec& spec) {
  require_arch(spec, Architecture::mlp);
  Builder b{ModelState{spec, {}, {}, {}}};
  int in = spec.input_dims * *spec.input_length;
  for (int i = 0; i < 3; ++i) {
    b.dense("dense" + std::to_string(i + 1), kMlpUnits, in);
    in = kMlpUnits;
  }
  b.dense("head", spec.head_units(), in);
  return std::move(b.state);
}

ModelState build_model(const ModelSpec& spec) {
  switch (spec.architecture) {
    case Architecture::mlp: return build_mlp(spec);
    case Architecture::fcn: return build_fcn(spec);
    case Architecture::resnet: return build_resnet(spec);
    case Architecture::inception: return build_inception(spec);
  }
  throw UsageError("build_model: unknown architecture");
}

std::vector<int> receptive_kernels(const ModelSpec& spec) {
  std::vector<int> k;
  switch (spec.architecture) {
    case Architecture::mlp: break;
    case Architecture::fcn: k.assign(std::begin(kBlockKernels), std::end(kBlockKernels)); break;
    case Architecture::resnet:
      for (int blk = 0; blk < 3; ++blk) k.insert(k.end(), std::begin(kBlockKernels), std::end(kBlockKernels));
      break;
    case Architecture::inception: {
      const auto& ks = spec.inception.kernel_sizes;
      const int widest = std::max(ks.empty() ? 1 : ks.back(), kPoolWindow);
      k.assign(sz(spec.inception.depth), widest);
      break;
    }
  }
  return k;
}

int receptive_field(std::span<const int> kernel_lengths) {
  int rf = 1;
  for (int k : kernel_lengths) {
    if (k < 1) throw UsageError("receptive_field: kernel lengths must be positive");
    rf += k - 1;
  }
  return rf;
}

int receptive_field(const ModelSpec& spec) {
  if (spec.architecture == Architecture::mlp) {
    if (!spec.input_length) throw UsageError("receptive_field: the mlp needs a fixed input_length");
    return *spec.input_length;
  }
  const auto k = receptive_kernels(spec);
  return receptive_field(std::span<const int>(k));
}

int layer_count(const ModelSpec& spec) {
  if (spec.architecture == Architecture::mlp) return 4;
  const auto k = receptive_kernels(spec);
  return static_cast<int>(std::count_if(k.begin(), k.end(), [](int v) { return v > 1; })) + 2;
}

int residual_count(const ModelSpec& spec) {
  switch (spec.architecture) {
    case Architecture::resnet: return 3;
    case Architecture::inception: return spec.inception.use_residual ? spec.inception.depth / 3 : 0;
    default: return 0;
  }
}

// ---------------------------------------------------------------------------

ad::Var ParameterBinding::get(const std::string& name) {
  if (auto it = vars_.find(name); it != vars_.end()) return it->second;
  const auto p = state_.parameters.find(name);
  if (p == state_.parameters.end()) throw DataError("model has no parameter '" + name + "'");
  const ad::Var v = trainable_ ? tape_.variable(p->second) : tape_.constant(p->second);
  vars_.emplace(name, v);
  return v;
}

ParameterMap ParameterBinding::gradients() const {
  ParameterMap g;
  for (const auto& [name, v] : vars_) g.emplace(name, v.grad());
  return g;
}

namespace {

class Forward {
 public:
  Forward(const ModelState& state, ParameterBinding& params, const ForwardOptions& options, ParameterMap* stats)
      : state_(state), params_(params), options_(options), stats_(stats) {}

  ad::Var conv(ad::Var x, const std::string& name, bool bias) {
    std::optional<ad::Var> b;
    if (bias) b = params_.get(name + ".bias");
    return ad::conv1d(x, params_.get(name + ".weight"), b);
  }

  ad::Var bn(ad::Var x, const std::string& name) {
    const std::string n = options_.route == BnRoute::adversarial && state_.spec.dual_bn ? name + ".adv" : name;
    ad::RunningStats rs{state_.running_stats.at(n + ".mean"), state_.running_stats.at(n + ".var")};
    ad::BatchNormOptions o = options_.batch_norm;
    o.update_running = options_.update_running && stats_ != nullptr;
    ad::Var y = ad::batch_norm1d(x, params_.get(n + ".gamma"), params_.get(n + ".beta"), rs, options_.mode, o);
    if (options_.mode == ad::Mode::train && o.update_running) {
      (*stats_)[n + ".mean"] = std::move(rs.mean);
      (*stats_)[n + ".var"] = std::move(rs.var);
    }
    return y;
  }

  ad::Var dense(ad::Var x, const std::string& name) {
    return ad::dense(x, params_.get(name + ".weight"), params_.get(name + ".bias"));
  }

  ForwardResult run(ad::Var x) {
    const ModelSpec& spec = state_.spec;
    ForwardResult r;
    if (spec.architecture == Architecture::mlp) {
      r.logits = mlp(x);
    } else {
      ad::Var a = spec.architecture == Architecture::fcn      ? fcn(x)
                  : spec.architecture == Architecture::resnet ? resnet(x)
                                                              : inception(x);
      r.last_activation = a;
      r.features = ad::global_avg_pool(a);
      r.logits = dense(r.features, "head");
    }
    r.output = spec.head == HeadKind::classification ? ad::softmax(r.logits) : r.logits;
    return r;
  }

 private:
  ad::Var fcn(ad::Var x) {
    for (int i = 1; i <= 3; ++i) {
      const std::string n = std::to_string(i);
      x = ad::relu(bn(conv(x, "conv" + n, true), "bn" + n));
    }
    return x;
  }

  ad::Var resnet(ad::Var x) {
    for (int blk = 1; blk <= 3; ++blk) {
      const std::string p = "block" + std::to_string(blk) + ".";
      ad::Var h = x;
      for (int i = 1; i <= 3; ++i) {
        const std::string n = std::to_string(i);
        h = bn(conv(h, p + "conv" + n, true), p + "bn" + n);
        if (i < 3) h = ad::relu(h);
      }
      ad::Var shortcut = x;
      if (state_.parameters.count(p + "shortcut.weight")) {
        shortcut = bn(conv(x, p + "shortcut", true), p + "shortcut_bn");
      }
      x = ad::relu(ad::add(h, shortcut));
    }
    return x;
  }

  ad::Var inception(ad::Var x) {
    const InceptionParams& ip = state_.spec.inception;
    ad::Var res_in = x;
    for (int m = 0; m < ip.depth; ++m) {
      const std::string p = "inception" + std::to_string(m + 1) + ".";
      ad::Var branch_in = x;
      if (state_.parameters.count(p + "bottleneck.weight")) branch_in = conv(x, p + "bottleneck", false);
      std::vector<ad::Var> parts;
      for (std::size_t j = 0; j < ip.kernel_sizes.size(); ++j) {
        parts.push_back(conv(branch_in, p + "conv" + std::to_string(j + 1), false));
      }
      ad::Var pooled = ad::max_pool1d(x, kPoolWindow, 1, ad::Padding::same);
      parts.push_back(conv(pooled, p + "pool_conv", false));
      x = ad::relu(bn(ad::concat_channels(parts), p + "bn"));
      if (ip.use_residual && m % 3 == 2) {
        const std::string r = "residual" + std::to_string(m / 3 + 1) + ".";
        ad::Var shortcut = res_in;
        if (state_.parameters.count(r + "conv.weight")) shortcut = bn(conv(res_in, r + "conv", false), r + "bn");
        x = ad::relu(ad::add(x, shortcut));
        res_in = x;
      }
    }
    return x;
  }

  ad::Var mlp(ad::Var x) {
    const Shape& s = x.shape();
    x = ad::reshape(x, Shape{s[0], s[1] * s[2]});
    for (int i = 0; i < 4; ++i) {
      x = drop(x, kMlpDropout[i]);
      if (i < 3) {
        x = ad::relu(dense(x, "dense" + std::to_string(i + 1)));
      } else {
        x = dense(x, "head");
      }
    }
    return x;
  }

  ad::Var drop(ad::Var x, double rate) {
    if (options_.mode == ad::Mode::eval) return x;
    if (!options_.dropout_rng) throw UsageError("forward: train-mode mlp needs a dropout generator");
    return ad::dropout(x, rate, options_.mode, *options_.dropout_rng);
  }

  const ModelState& state_;
  ParameterBinding& params_;
  const ForwardOptions& options_;
  ParameterMap* stats_;
};

void check_input(const ModelSpec& spec, const Shape& s) {
  if (s.size() != 3) throw ShapeError("forward", "rank", "expected [batch, dims, time], got " + shape_string(s));
  if (s[1] != sz(spec.input_dims)) {
    throw ShapeError("forward", "dims",
                     "model expects " + std::to_string(spec.input_dims) + " dimensions, got " + std::to_string(s[1]));
  }
  if (spec.architecture == Architecture::mlp && s[2] != sz(*spec.input_length)) {
    throw ShapeError("forward", "time",
                     "mlp expects length " + std::to_string(*spec.input_length) + ", got " + std::to_string(s[2]));
  }
}

}  // namespace

ForwardResult forward(const ModelState& state, ParameterBinding& params, ad::Var input, const ForwardOptions& options,
                      ParameterMap* running_stats) {
  check_input(state.spec, input.shape());
  Forward f(state, params, options, running_stats);
  return f.run(input);
}

Tensor predict(const ModelState& state, const Tensor& batch) {
  ad::Tape tape;
  ParameterBinding params(tape, state, false);
  const ForwardResult r = forward(state, params, tape.constant(batch), ForwardOptions{}, nullptr);
  return r.output.value();
}

Tensor predict(const ModelState& state, const LabeledDataset& dataset, std::size_t batch_size) {
  if (dataset.size() == 0) throw DataError("predict: empty dataset");
  if (batch_size == 0) throw UsageError("predict: batch size must be positive");
  std::vector<double> out;
  std::size_t width = 0;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, dataset.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor p = predict(state, dataset.batch(idx));
    width = p.dim(1);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return Tensor(Shape{dataset.size(), width}, std::move(out));
}

std::vector<int> argmax_rows(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("argmax_rows", "rank", "expected [batch, classes]");
  std::vector<int> labels(probs.dim(0));
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    const double* row = probs.raw() + i * probs.dim(1);
    labels[i] = static_cast<int>(std::max_element(row, row + probs.dim(1)) - row);
  }
  return labels;
}

std::vector<int> predict_labels(const ModelState& state, const LabeledDataset& dataset) {
  return argmax_rows(predict(state, dataset));
}

namespace {

void check_ensemble(std::span<const ModelState> models) {
  if (models.empty()) throw UsageError("ensemble_predict: no models");
  for (const auto& m : models) {
    if (m.spec.head_units() != models.front().spec.head_units()) {
      throw UsageError("ensemble_predict: members disagree on the number of classes");
    }
  }
}

Tensor average(std::vector<Tensor> parts) {
  Tensor sum = std::move(parts.front());
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].shape() != sum.shape()) throw ShapeError("ensemble_predict", "classes", "member outputs differ");
    sum += parts[i];
  }
  const double n = static_cast<double>(parts.size());
  for (double& v : sum.data()) v /= n;
  return sum;
}

}  // namespace

Tensor ensemble_predict(std::span<const ModelState> models, const Tensor& batch) {
  check_ensemble(models);
  std::vector<Tensor> parts;
  for (const auto& m : models) parts.push_back(predict(m, batch));
  return average(std::move(parts));
}

Tensor ensemble_predict(std::span<const ModelState> models, const LabeledDataset& dataset) {
  check_ensemble(models);
  std::vector<Tensor> parts;
  for (const auto& m : models) parts.push_back(predict(m, dataset));
  return average(std::move(parts));
}

}  // namespace tsc
