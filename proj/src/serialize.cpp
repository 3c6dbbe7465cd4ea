#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tsc/error.hpp"
#include "tsc/model.hpp"

namespace tsc {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'M'};
constexpr char kParamTag[4] = {'P', 'A', 'R', 'M'};
constexpr char kStatsTag[4] = {'R', 'S', 'T', 'A'};
constexpr char kMetaTag[4] = {'M', 'E', 'T', 'A'};

class Writer {
 public:
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) throw DataError(std::string("model file truncated while reading ") + what);
  }
  void expect_tag(const char (&tag)[4], const char* what) {
    need(4, what);
    if (std::memcmp(in_.data() + pos_, tag, 4) != 0) throw DataError(std::string("model file: bad ") + what);
    pos_ += 4;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string text(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_section(Writer& w, const char (&tag)[4], const ParameterMap& map) {
  w.bytes(tag, 4);
  w.u32(static_cast<std::uint32_t>(map.size()));
  for (const auto& [name, t] : map) {
    w.text(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.values()) w.f64(v);
  }
}

ParameterMap read_section(Reader& r, const char (&tag)[4], const char* what) {
  r.expect_tag(tag, what);
  const std::uint32_t count = r.u32(what);
  ParameterMap map;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.text("tensor name");
    const std::uint8_t ndim = r.u8("tensor rank");
    if (ndim == 0) throw DataError("model file: tensor '" + name + "' has rank 0");
    Shape shape(ndim);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32("tensor extent");
      if (d == 0) throw DataError("model file: tensor '" + name + "' has an empty extent");
      n *= d;
    }
    r.need(n * 8, "tensor values");
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64("tensor values");
    if (!map.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw DataError("model file: duplicate tensor '" + name + "'");
    }
  }
  return map;
}

void check_layout(const ParameterMap& expected, const ParameterMap& got, const char* what) {
  if (expected.size() != got.size()) throw DataError(std::string("model file: ") + what + " do not match the model spec");
  for (auto e = expected.begin(), g = got.begin(); e != expected.end(); ++e, ++g) {
    if (e->first != g->first || e->second.shape() != g->second.shape()) {
      throw DataError(std::string("model file: ") + what + " entry '" + g->first + "' does not match the model spec");
    }
  }
}

}  // namespace

std::string serialize_model(const ModelState& state) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kModelFormatVersion);
  w.text(state.spec.to_config().to_string());
  write_section(w, kParamTag, state.parameters);
  write_section(w, kStatsTag, state.running_stats);
  Config meta;
  meta.set("epochs_seen", std::to_string(state.meta.epochs_seen));
  meta.set("checkpoint_tag", state.meta.checkpoint_tag);
  w.bytes(kMetaTag, 4);
  w.text(meta.to_string());
  return w.take();
}

ModelState deserialize_model(const std::string& bytes) {
  Reader r(bytes);
  r.expect_tag(kMagic, "magic (not a model file)");
  const std::uint32_t version = r.u32("version");
  if (version != kModelFormatVersion) {
    throw DataError("model file: unsupported version " + std::to_string(version));
  }
  ModelState state;
  try {
    state.spec = ModelSpec::from_config(Config::parse(r.text("spec")));
  } catch (const UsageError& e) {
    throw DataError(std::string("model file: invalid spec: ") + e.what());
  }
  state.parameters = read_section(r, kParamTag, "parameter section");
  state.running_stats = read_section(r, kStatsTag, "running-statistics section");
  r.expect_tag(kMetaTag, "metadata section");
  const Config meta = Config::parse(r.text("metadata"));
  state.meta.epochs_seen = static_cast<int>(meta.get_int("epochs_seen", 0));
  state.meta.checkpoint_tag = meta.get_string("checkpoint_tag", "");
  if (!r.done()) throw DataError("model file: trailing bytes after metadata");

  const ModelState layout = build_model(state.spec);
  check_layout(layout.parameters, state.parameters, "parameters");
  check_layout(layout.running_stats, state.running_stats, "running statistics");
  return state;
}

void save_model(const ModelState& state, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write model file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing model file " + path.string());
}

ModelState load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace tsc
