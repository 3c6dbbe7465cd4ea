// Command-line front end: one subcommand per library operation.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsc/adversarial.hpp"
#include "tsc/config.hpp"
#include "tsc/dataset.hpp"
#include "tsc/elastic.hpp"
#include "tsc/error.hpp"
#include "tsc/interpret.hpp"
#include "tsc/model.hpp"
#include "tsc/stats.hpp"
#include "tsc/training.hpp"

namespace fs = std::filesystem;
using namespace tsc;

namespace {

/// Flags of one subcommand, gathered into a flat Config on top of --config.
struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, bool*>> flags;
  std::map<std::string, std::unique_ptr<bool>> flag_storage;

  void option(const std::string& flag, const std::string& key, const std::string& help) {
    CLI::Option* o = app->add_option("--" + flag, values[key], help);
    options.emplace_back(key, o);
  }
  void flag(const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = flag_storage[key];
    slot = std::make_unique<bool>(false);
    app->add_flag("--" + flag, *slot, help);
    flags.emplace_back(key, slot.get());
  }

  Config resolve() const {
    Config c = config_path.empty() ? Config{} : Config::load(config_path);
    for (const auto& [key, o] : options) {
      if (o->count() > 0) c.set(key, values.at(key));
    }
    for (const auto& [key, set] : flags) {
      if (*set) c.set(key, "true");
    }
    return c;
  }
};

std::string require(const Config& c, const std::string& key, const std::string& flag) {
  const auto v = c.get(key);
  if (!v || v->empty()) throw UsageError("missing --" + flag);
  return *v;
}

std::string kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage:
      return "usage";
    case ErrorKind::data:
      return "data";
    case ErrorKind::numeric:
      return "numeric";
  }
  return "data";
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage:
      return 1;
    case ErrorKind::data:
      return 2;
    case ErrorKind::numeric:
      return 3;
  }
  return 2;
}

int report_error(const std::string& kind, std::string message, int code) {
  for (char& ch : message) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  std::cerr << "tsc: error[" << kind << "]: " << message << '\n';
  return code;
}

// --- data ------------------------------------------------------------------

struct Splits {
  std::string name;
  LabeledDataset train;
  std::optional<LabeledDataset> test;

  const LabeledDataset& pick(const std::string& split) const {
    if (split == "train") return train;
    if (split == "test") {
      if (!test) throw DataError(name + ": no test split");
      return *test;
    }
    if (split == "auto") return test ? *test : train;
    throw UsageError("unknown split '" + split + "' (expected train, test or auto)");
  }
};

/// A UCR directory (`<name>_TRAIN.*`, optional `<name>_TEST.*`), a
/// multivariate `dim_<k>.txt` directory, or a single UCR file.
Splits load_raw(const fs::path& path) {
  Splits s;
  if (fs::is_directory(path)) {
    if (fs::exists(path / "dim_0.txt")) {
      s.train = load_mts_dir(path);
      s.name = path.filename().string();
    } else {
      const UcrFiles files = find_ucr_files(path);
      s.name = files.name;
      if (files.test.empty()) {
        s.train = load_ucr(files.train);
      } else {
        auto [tr, te] = load_ucr_pair(files.train, files.test);
        s.train = std::move(tr);
        s.test = std::move(te);
      }
    }
  } else if (fs::is_regular_file(path)) {
    s.train = load_ucr(path);
    s.name = path.stem().string();
  } else {
    throw DataError(path.string() + " does not exist");
  }
  s.train.name = s.name;
  if (s.test) s.test->name = s.name;
  return s;
}

Splits load_prepared(const fs::path& path) {
  Splits s = load_raw(path);
  s.train = prepare(s.train);
  s.train.name = s.name;
  if (s.test) {
    s.test = prepare(*s.test);
    s.test->name = s.name;
  }
  return s;
}

fs::path out_dir(const Config& c) {
  const fs::path dir = c.get_string("out", ".");
  fs::create_directories(dir);
  return dir;
}

void print_kv(const std::string& key, double value) { std::cout << key << '=' << format_double(value) << '\n'; }

// --- models ----------------------------------------------------------------

void add_model_options(Command& cmd) {
  cmd.option("arch", "architecture", "mlp, fcn, resnet or inception");
  cmd.option("depth", "depth", "inception modules");
  cmd.option("filters", "n_filters", "filters per inception branch");
  cmd.option("kernels", "kernel_sizes", "inception kernel lengths, comma separated");
  cmd.option("bottleneck", "bottleneck_size", "inception bottleneck width");
}

void add_train_options(Command& cmd) {
  cmd.option("epochs", "epochs", "training epochs");
  cmd.option("batch-size", "batch_size", "mini-batch size");
  cmd.option("lr", "lr", "Adam learning rate");
  cmd.option("seed", "seed", "random seed");
  cmd.option("val-fraction", "val_fraction", "held-out share of the training split");
  cmd.option("max-seconds", "max_seconds", "wall-clock budget");
}

ModelSpec spec_for(const Config& c, const LabeledDataset& train) {
  ModelSpec s = ModelSpec::from_config(c);
  s.n_classes = train.n_classes;
  s.input_dims = static_cast<int>(train.dims());
  if (s.architecture == Architecture::mlp) s.input_length = static_cast<int>(train.length());
  s.validate();
  return s;
}

double test_accuracy(const ModelState& m, const LabeledDataset& ds) { return accuracy(predict_labels(m, ds), ds.labels); }

void finish_training(const TrainResult& r, const Splits& data, const fs::path& dir, const std::string& stem) {
  save_model(r.model, dir / (stem + ".tscm"));
  r.report.write_csv(dir / (stem == "model" ? "report.csv" : "report_" + stem + ".csv"));
  std::cout << "model=" << (dir / (stem + ".tscm")).string() << '\n';
  print_kv("train_loss", r.report.epochs.at(static_cast<std::size_t>(r.report.checkpoint_epoch - 1)).train_loss);
  print_kv("train_accuracy", test_accuracy(r.model, data.train));
  if (data.test) print_kv("test_accuracy", test_accuracy(r.model, *data.test));
}

void write_predictions(const Tensor& probs, const LabeledDataset& ds, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const std::vector<int> pred = argmax_rows(probs);
  const auto raw = [&](int id) {
    const auto i = static_cast<std::size_t>(id);
    return format_double(i < ds.class_values.size() ? ds.class_values[i] : static_cast<double>(id));
  };
  out << "index,label,predicted";
  for (std::size_t k = 0; k < probs.dim(1); ++k) out << ",p" << k;
  out << '\n';
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    out << i << ',' << raw(ds.labels[i]) << ',' << raw(pred[i]);
    for (std::size_t k = 0; k < probs.dim(1); ++k) out << ',' << format_double(probs.at(i, k));
    out << '\n';
  }
}

AttackConfig attack_config(const Config& c) {
  AttackConfig a;
  a.method = parse_attack_method(c.get_string("method", "fgsm"));
  a.epsilon = c.get_double("epsilon", a.epsilon);
  a.iterations = static_cast<int>(c.get_int("iterations", a.iterations));
  if (c.contains("alpha")) a.alpha = c.get_double("alpha", 0.0);
  a.validate();
  return a;
}

void add_attack_options(Command& cmd) {
  cmd.option("method", "method", "fgsm or bim");
  cmd.option("eps", "epsilon", "L-infinity radius");
  cmd.option("iterations", "iterations", "BIM rounds");
  cmd.option("alpha", "alpha", "BIM step (default eps / 10)");
}

std::vector<std::string> list_of(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& s : split(text, ',')) {
    const std::string t = trim(s);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

// --- commands --------------------------------------------------------------

void run_synth(const Config& c) {
  SyntheticOptions o;
  o.n_classes = static_cast<int>(c.get_int("classes", o.n_classes));
  o.length = static_cast<std::size_t>(c.get_int("length", static_cast<long long>(o.length)));
  o.n_per_class = static_cast<std::size_t>(c.get_int("n", static_cast<long long>(o.n_per_class)));
  o.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  for (int p : c.get_int_list("positions", {})) o.pattern_positions.push_back(static_cast<std::size_t>(p));
  const fs::path dir = out_dir(c);
  const SyntheticDataset train = generate_synthetic(o);
  o.seed = Rng::mix(o.seed + 1);
  const SyntheticDataset test = generate_synthetic(o);
  write_ucr(train.data, dir / "synthetic_TRAIN.tsv");
  write_ucr(test.data, dir / "synthetic_TEST.tsv");
  std::ofstream w(dir / "windows.csv");
  w << "class,start,length\n";
  for (std::size_t k = 0; k < train.windows.size(); ++k) {
    w << k << ',' << train.windows[k].start << ',' << train.windows[k].length << '\n';
  }
  std::cout << "train=" << (dir / "synthetic_TRAIN.tsv").string() << "\ntest=" << (dir / "synthetic_TEST.tsv").string()
            << '\n';
}

void run_train(const Config& c) {
  const Splits data = load_prepared(require(c, "data", "data"));
  const TrainConfig tc = TrainConfig::from_config(c);
  const ModelSpec spec = spec_for(c, data.train);
  finish_training(train(make_model(spec, tc.seed), data.train, tc), data, out_dir(c), "model");
}

void run_predict(const Config& c) {
  const ModelState m = load_model(require(c, "model", "model"));
  const Splits data = load_prepared(require(c, "data", "data"));
  const LabeledDataset& ds = data.pick(c.get_string("split", "auto"));
  const Tensor probs = predict(m, ds);
  const fs::path dir = out_dir(c);
  write_predictions(probs, ds, dir / "predictions.csv");
  print_kv("accuracy", accuracy(argmax_rows(probs), ds.labels));
}

void run_ensemble_train(const Config& c) {
  const Splits data = load_prepared(require(c, "data", "data"));
  const TrainConfig base = TrainConfig::from_config(c);
  Config with_arch = c;
  if (!c.contains("architecture")) with_arch.set("architecture", "inception");
  const ModelSpec spec = spec_for(with_arch, data.train);
  const int members = static_cast<int>(c.get_int("members", 5));
  if (members < 1) throw UsageError("--members must be positive");
  const fs::path dir = out_dir(c);
  std::vector<ModelState> models;
  for (int i = 0; i < members; ++i) {
    TrainConfig tc = base;
    tc.seed = base.seed + static_cast<std::uint64_t>(i);
    const TrainResult r = train(make_model(spec, tc.seed), data.train, tc);
    finish_training(r, data, dir, "member_" + std::to_string(i));
    models.push_back(r.model);
  }
  if (data.test) print_kv("ensemble_test_accuracy", accuracy(argmax_rows(ensemble_predict(models, *data.test)), data.test->labels));
}

std::vector<ModelState> load_members(const Config& c) {
  std::vector<fs::path> paths;
  if (const auto list = c.get("models")) {
    for (const auto& p : list_of(*list)) paths.emplace_back(p);
  }
  if (const auto dir = c.get("model_dir")) {
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(*dir)) {
      if (e.path().extension() == ".tscm") found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    paths.insert(paths.end(), found.begin(), found.end());
  }
  if (paths.empty()) throw UsageError("ensemble-predict needs --models or --model-dir");
  std::vector<ModelState> models;
  for (const auto& p : paths) models.push_back(load_model(p));
  return models;
}

void run_ensemble_predict(const Config& c) {
  const std::vector<ModelState> models = load_members(c);
  const Splits data = load_prepared(require(c, "data", "data"));
  const LabeledDataset& ds = data.pick(c.get_string("split", "auto"));
  const Tensor probs = ensemble_predict(models, ds);
  write_predictions(probs, ds, out_dir(c) / "predictions.csv");
  std::cout << "members=" << models.size() << '\n';
  print_kv("accuracy", accuracy(argmax_rows(probs), ds.labels));
}

void run_fine_tune(const Config& c) {
  const ModelState pretrained = load_model(require(c, "model", "model"));
  const Splits data = load_prepared(require(c, "data", "data"));
  finish_training(fine_tune(pretrained, data.train, TrainConfig::from_config(c)), data, out_dir(c), "model");
}

void run_similarity(const Config& c) {
  std::vector<fs::path> dirs;
  for (const auto& p : list_of(c.get_string("data", ""))) dirs.emplace_back(p);
  if (const auto root = c.get("root")) {
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(*root)) {
      if (e.is_directory()) found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    dirs.insert(dirs.end(), found.begin(), found.end());
  }
  if (dirs.size() < 2) throw UsageError("similarity needs at least two datasets (--data a,b or --root)");
  std::vector<LabeledDataset> sets;
  for (const auto& d : dirs) sets.push_back(load_prepared(d).train);
  const align::SimilarityMatrix sim =
      align::dataset_similarity(sets, static_cast<int>(c.get_int("iterations", align::kDefaultDbaIterations)));
  const fs::path path = out_dir(c) / "similarity.csv";
  sim.write_csv(path);
  std::cout << "similarity=" << path.string() << '\n';
  if (const auto target = c.get("target")) {
    std::vector<std::string> candidates;
    for (const auto& n : sim.names) {
      if (n != *target) candidates.push_back(n);
    }
    const auto ranked =
        align::select_transfer_source(sim, *target, candidates, static_cast<std::size_t>(c.get_int("k", 1)));
    for (const auto& r : ranked) std::cout << "source=" << r.name << " distance=" << format_double(r.distance) << '\n';
  }
}

void run_augment(const Config& c) {
  const Splits data = load_prepared(require(c, "data", "data"));
  const LabeledDataset aug = align::augment_dataset(data.train, static_cast<std::uint64_t>(c.get_int("seed", 0)));
  const fs::path path = out_dir(c) / (data.name + "_aug_TRAIN.tsv");
  write_ucr(aug, path);
  std::cout << "augmented=" << path.string() << "\nseries=" << aug.size() << '\n';
}

void run_attack(const Config& c) {
  const ModelState m = load_model(require(c, "model", "model"));
  const Splits data = load_prepared(require(c, "data", "data"));
  const LabeledDataset& ds = data.pick(c.get_string("split", "auto"));
  const AttackConfig ac = attack_config(c);
  const AttackOutcome r = attack_dataset(m, ds, ac);
  const fs::path path = out_dir(c) / (r.adversarial.name + "_TEST.tsv");
  write_ucr(r.adversarial, path);
  std::cout << "adversarial=" << path.string() << '\n';
  print_kv("clean_accuracy", r.clean_accuracy);
  print_kv("adversarial_accuracy", r.adversarial_accuracy);
  print_kv("max_perturbation", r.max_perturbation);
  if (const auto other = c.get("target_model")) {
    const ModelState t = load_model(*other);
    print_kv("target_clean_accuracy", test_accuracy(t, ds));
    print_kv("target_adversarial_accuracy", test_accuracy(t, r.adversarial));
  }
}

void run_adv_train(const Config& c) {
  const Splits data = load_prepared(require(c, "data", "data"));
  const TrainConfig tc = TrainConfig::from_config(c);
  const ModelSpec spec = spec_for(c, data.train);
  const TrainResult r =
      adversarial_train(make_model(spec, tc.seed), data.train, tc, attack_config(c), c.get_bool("advprop", false));
  finish_training(r, data, out_dir(c), "model");
}

void run_cam(const Config& c) {
  const ModelState m = load_model(require(c, "model", "model"));
  const Splits data = load_prepared(require(c, "data", "data"));
  const LabeledDataset& ds = data.pick(c.get_string("split", "auto"));
  const long long index = c.get_int("index", 0);
  if (index < 0 || static_cast<std::size_t>(index) >= ds.size()) throw UsageError("--index out of range");
  const auto i = static_cast<std::size_t>(index);
  CamOptions o;
  const std::string norm = c.get_string("normalize", "raw");
  if (norm == "minmax") {
    o.normalization = CamNormalization::minmax;
  } else if (norm != "raw") {
    throw UsageError("--normalize must be raw or minmax");
  }
  o.smooth_window = static_cast<std::size_t>(c.get_int("smooth", 0));
  const int cls = static_cast<int>(c.get_int("class", ds.labels[i]));
  const CamMap map = cam(m, ds.series[i], cls, o);
  const fs::path path = out_dir(c) / "cam.csv";
  write_cam_csv(map, ds.series[i], path);
  std::cout << "cam=" << path.string() << "\nclass=" << cls << '\n';
}

void run_mds(const Config& c) {
  const ModelState m = load_model(require(c, "model", "model"));
  const Splits data = load_prepared(require(c, "data", "data"));
  const LabeledDataset& ds = data.pick(c.get_string("split", "auto"));
  MdsOptions o;
  o.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  o.max_iterations = static_cast<int>(c.get_int("iterations", o.max_iterations));
  const std::string init = c.get_string("init", "classical");
  if (init == "random") {
    o.init = MdsInit::random;
  } else if (init != "classical") {
    throw UsageError("--init must be classical or random");
  }
  const Embedding2D e = mds(euclidean_distances(gap_features(m, ds)), o);
  const fs::path path = out_dir(c) / "mds.csv";
  write_mds_csv(e, path);
  std::cout << "mds=" << path.string() << '\n';
  print_kv("stress", e.stress);
}

void run_nlts(const Config& c) {
  // Raw values: the dilation operates on the series as recorded.
  const Splits data = load_raw(require(c, "data", "data"));
  const LabeledDataset& ds = data.train;
  std::vector<std::size_t> members;
  std::optional<double> wanted;
  if (c.contains("class")) wanted = c.get_double("class", 0.0);
  const std::size_t limit = static_cast<std::size_t>(c.get_int("max_series", 5));
  for (std::size_t i = 0; i < ds.size() && members.size() < limit; ++i) {
    const double raw = ds.class_values[static_cast<std::size_t>(ds.labels[i])];
    if (!wanted || raw == *wanted) members.push_back(i);
  }
  if (members.size() < 2) throw DataError("nlts: fewer than two series selected");
  std::vector<TimeSeries> set;
  for (std::size_t i : members) set.push_back(ds.series[i]);
  const align::NltsResult r = align::nlts(set, static_cast<int>(c.get_int("iterations", align::kDefaultDbaIterations)));
  const fs::path dir = out_dir(c);
  LabeledDataset dilated = ds.subset(members);
  for (std::size_t s = 0; s < set.size(); ++s) {
    dilated.series[s] = align::apply_schedule(set[s], r.schedule.counts[s]);
    align::write_schedule_csv(r.schedule.counts[s], dir / ("schedule_" + std::to_string(s) + ".csv"));
  }
  write_ucr(dilated, dir / "dilated_TRAIN.tsv");
  LabeledDataset avg;
  avg.n_classes = 1;
  avg.series = {r.average};
  avg.labels = {0};
  avg.class_values = {ds.class_values[static_cast<std::size_t>(ds.labels[members.front()])]};
  write_ucr(avg, dir / "average.tsv");
  std::cout << "series=" << set.size() << "\nlength=" << r.schedule.target_length << '\n';
}

void run_evaluate(const Config& c) {
  const ModelState m = load_model(require(c, "model", "model"));
  const Splits data = load_prepared(require(c, "data", "data"));
  const std::string split = c.get_string("split", "auto");
  const LabeledDataset& ds = data.pick(split);
  const double acc = test_accuracy(m, ds);
  print_kv("accuracy", acc);
  if (const auto path = c.get("out_csv")) {
    const bool fresh = !fs::exists(*path);
    std::ofstream out(*path, std::ios::app);
    if (!out) throw DataError("cannot write " + *path);
    if (fresh) out << "dataset,split,n,accuracy\n";
    out << data.name << ',' << (split == "auto" ? (data.test ? "test" : "train") : split) << ',' << ds.size() << ','
        << format_double(acc) << '\n';
  }
}

void run_compare(const Config& c) {
  const ResultsTable t = ResultsTable::read_csv(require(c, "results", "results"));
  const ComparisonReport rep = wilcoxon_holm(t, c.get_double("alpha", 0.05));
  const fs::path dir = out_dir(c);
  rep.write_csv(dir / "pairs.csv", dir / "ranks.csv");
  std::cout << rep.to_text();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep time series classification toolkit"};
  app.require_subcommand(1);
  std::map<std::string, Command> commands;
  std::map<std::string, void (*)(const Config&)> runners;

  const auto add = [&](const std::string& name, const std::string& help, void (*run)(const Config&)) -> Command& {
    Command& cmd = commands[name];
    cmd.app = app.add_subcommand(name, help);
    cmd.app->add_option("--config", cmd.config_path, "key = value file; flags override it");
    runners[name] = run;
    return cmd;
  };

  {
    Command& c = add("synth", "generate the two-window synthetic dataset", run_synth);
    c.option("classes", "classes", "number of classes");
    c.option("length", "length", "series length");
    c.option("n", "n", "series per class in each split");
    c.option("seed", "seed", "random seed");
    c.option("positions", "positions", "pattern window starts, comma separated");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("train", "train one network", run_train);
    c.option("data", "data", "dataset directory or file");
    add_model_options(c);
    add_train_options(c);
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("predict", "class probabilities for a split", run_predict);
    c.option("model", "model", "model file");
    c.option("data", "data", "dataset directory or file");
    c.option("split", "split", "train, test or auto");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("ensemble-train", "train members with seeds seed+i", run_ensemble_train);
    c.option("data", "data", "dataset directory or file");
    c.option("members", "members", "ensemble size (default 5)");
    add_model_options(c);
    add_train_options(c);
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("ensemble-predict", "average member probabilities", run_ensemble_predict);
    c.option("models", "models", "model files, comma separated");
    c.option("model-dir", "model_dir", "directory of .tscm files");
    c.option("data", "data", "dataset directory or file");
    c.option("split", "split", "train, test or auto");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("fine-tune", "retrain a pretrained network on a new dataset", run_fine_tune);
    c.option("model", "model", "pretrained model file");
    c.option("data", "data", "target dataset");
    add_train_options(c);
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("similarity", "DBA prototype distances between datasets", run_similarity);
    c.option("data", "data", "dataset directories, comma separated");
    c.option("root", "root", "directory whose subdirectories are datasets");
    c.option("iterations", "iterations", "DBA rounds");
    c.option("target", "target", "rank transfer sources for this dataset");
    c.option("k", "k", "number of sources to list");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("augment", "weighted DBA data augmentation", run_augment);
    c.option("data", "data", "dataset directory or file");
    c.option("seed", "seed", "random seed");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("attack", "FGSM or BIM perturbation of a split", run_attack);
    c.option("model", "model", "model file");
    c.option("data", "data", "dataset directory or file");
    c.option("split", "split", "train, test or auto");
    add_attack_options(c);
    c.option("target-model", "target_model", "also score the perturbed set on this model");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("adv-train", "adversarial training, optionally with dual batch norm", run_adv_train);
    c.option("data", "data", "dataset directory or file");
    add_model_options(c);
    add_train_options(c);
    add_attack_options(c);
    c.flag("advprop", "advprop", "separate batch-norm set for adversarial inputs");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("cam", "class activation map of one series", run_cam);
    c.option("model", "model", "model file");
    c.option("data", "data", "dataset directory or file");
    c.option("split", "split", "train, test or auto");
    c.option("index", "index", "series index");
    c.option("class", "class", "class id (default: the true label)");
    c.option("normalize", "normalize", "raw or minmax");
    c.option("smooth", "smooth", "moving-average window");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("mds", "2-D metric MDS of global-pooling features", run_mds);
    c.option("model", "model", "model file");
    c.option("data", "data", "dataset directory or file");
    c.option("split", "split", "train, test or auto");
    c.option("init", "init", "classical or random");
    c.option("seed", "seed", "seed for the random start");
    c.option("iterations", "iterations", "iteration cap");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("nlts", "dilate a few series onto their DBA average", run_nlts);
    c.option("data", "data", "dataset directory or file (train split)");
    c.option("class", "class", "raw class label to draw from");
    c.option("max-series", "max_series", "series to use (default 5)");
    c.option("iterations", "iterations", "DBA rounds");
    c.option("out", "out", "output directory");
  }
  {
    Command& c = add("evaluate", "accuracy of a model on a split", run_evaluate);
    c.option("model", "model", "model file");
    c.option("data", "data", "dataset directory or file");
    c.option("split", "split", "train, test or auto");
    c.option("out-csv", "out_csv", "append dataset,split,n,accuracy to this file");
  }
  {
    Command& c = add("compare", "Friedman and Wilcoxon-Holm over a results table", run_compare);
    c.option("results", "results", "results.csv");
    c.option("alpha", "alpha", "family-wise significance level");
    c.option("out", "out", "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 1);
  }

  try {
    for (auto& [name, cmd] : commands) {
      if (cmd.app->parsed()) runners.at(name)(cmd.resolve());
    }
  } catch (const Error& e) {
    return report_error(kind_name(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const fs::filesystem_error& e) {
    return report_error("data", e.what(), 2);
  } catch (const std::exception& e) {
    return report_error("data", e.what(), 2);
  }
  return 0;
}
