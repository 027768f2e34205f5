#include "melstorm/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "melstorm/error.hpp"

namespace melstorm {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void f32(double v) { le(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  template <class T>
  T le(const std::string& field) {
    need(sizeof(T), field);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n, const std::string& field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  double f32(const std::string& field) { return static_cast<double>(std::bit_cast<float>(le<std::uint32_t>(field))); }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const std::string& field) {
    if (b_.size() - pos_ < n) {
      throw FormatError("weights: file truncated while reading " + field + " at byte " + std::to_string(pos_));
    }
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const Model& model) {
  Writer w;
  w.bytes("AMNW", 4);
  w.le<std::uint16_t>(kWeightsVersion);
  const std::string fp = model.config().fingerprint();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(fp.size()));
  w.bytes(fp.data(), fp.size());

  struct Entry {
    std::string name;
    Shape shape;
    std::span<const double> values;
  };
  std::vector<Entry> entries;
  for (const auto& p : model.parameters()) entries.push_back({p.name, p.tensor.shape(), p.tensor.data()});
  for (std::size_t b = 0; b < model.bn_stats().size(); ++b) {
    const auto& s = model.bn_stats()[b];
    const std::string idx = std::to_string(b + 1);
    entries.push_back({"bn" + idx + ".running_mean", {s.mean.size()}, s.mean});
    entries.push_back({"bn" + idx + ".running_var", {s.var.size()}, s.var});
  }
  w.le<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : e.values) w.f32(v);
  }
  return w.take();
}

Model decode_weights(std::span<const std::uint8_t> bytes, const std::optional<ModelConfig>& expected) {
  Reader r(bytes);
  const std::string magic = r.str(4, "magic");
  if (magic != "AMNW") throw FormatError("weights: bad magic '" + magic + "', expected 'AMNW'");
  const auto version = r.le<std::uint16_t>("version");
  if (version != kWeightsVersion) {
    throw FormatError("weights: unsupported version " + std::to_string(version) + ", expected " +
                      std::to_string(kWeightsVersion));
  }
  const auto fp_len = r.le<std::uint32_t>("fingerprint length");
  const std::string fp = r.str(fp_len, "fingerprint");
  const ModelConfig config = ModelConfig::from_fingerprint(fp);
  if (expected && expected->fingerprint() != fp) {
    throw FormatError("weights: fingerprint mismatch: file has " + fp + ", expected " + expected->fingerprint());
  }

  ModelBuilder builder(config);
  const auto count = r.le<std::uint32_t>("array count");
  if (count != builder.layout().size()) {
    throw FormatError("weights: array count is " + std::to_string(count) + ", configuration needs " +
                      std::to_string(builder.layout().size()));
  }
  for (std::uint32_t a = 0; a < count; ++a) {
    const std::string where = "array #" + std::to_string(a);
    const auto name_len = r.le<std::uint16_t>(where + " name length");
    const std::string name = r.str(name_len, where + " name");
    const auto rank = r.le<std::uint8_t>("rank of '" + name + "'");
    Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(r.le<std::uint32_t>("extents of '" + name + "'"));
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = r.f32("values of '" + name + "'");
    builder.set(name, shape, std::move(values));
  }
  if (!r.done()) throw FormatError("weights: trailing bytes after the last array");
  return builder.finish();
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_weights(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Model load_weights(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_weights(bytes, expected);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace melstorm
