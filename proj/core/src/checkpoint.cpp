#include "probmed/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace probmed {

using diff::Tensor;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'M', 'E', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void u64(std::uint64_t v) { pod(v); }
  void f64(double v) { pod(v); }
  void tensor(const Tensor& t) {
    u64(t.rows());
    u64(t.cols());
    for (double x : t.data()) f64(x);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <class T>
  T pod() {
    T v;
    if (pos_ + sizeof v > bytes_.size()) throw CheckpointFormatError("checkpoint truncated");
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  Tensor tensor() {
    const std::uint64_t rows = u64();
    const std::uint64_t cols = u64();
    if (rows != 0 && cols > (bytes_.size() - pos_) / sizeof(double) / rows) {
      throw CheckpointFormatError("checkpoint tensor larger than the file");
    }
    Tensor t(rows, cols);
    for (double& x : t.data()) x = f64();
    return t;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod(kVersion);
  const ModelConfig& cfg = ckpt.model.config;
  for (std::size_t d : cfg.input_dims) w.u64(d);
  w.u64(cfg.hidden);
  w.u64(cfg.embed);
  w.pod<std::uint8_t>(cfg.batch_norm ? 1 : 0);
  for (const EncoderParams& e : ckpt.model.encoders) {
    w.u64(e.dims.input);
    w.u64(e.dims.hidden);
    w.u64(e.dims.embed);
    w.pod<std::uint8_t>(e.bn ? 1 : 0);
    for (const Tensor& t : e.trainable_values()) w.tensor(t);
    if (e.bn) {
      w.tensor(e.bn->running_mean);
      w.tensor(e.bn->running_var);
      w.f64(e.bn->momentum);
      w.f64(e.bn->eps);
    }
  }
  w.u64(ckpt.optimizer.step);
  for (const EncoderOptState& s : ckpt.optimizer.encoders) {
    w.u64(s.step);
    w.u64(s.first_moment.size());
    for (const Tensor& t : s.first_moment) w.tensor(t);
    for (const Tensor& t : s.second_moment) w.tensor(t);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  for (char c : kMagic)
    if (r.pod<char>() != c) throw CheckpointFormatError("not a checkpoint file (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ModelConfig& cfg = ckpt.model.config;
  for (std::size_t& d : cfg.input_dims) d = r.u64();
  cfg.hidden = r.u64();
  cfg.embed = r.u64();
  cfg.batch_norm = r.pod<std::uint8_t>() != 0;
  for (EncoderParams& e : ckpt.model.encoders) {
    e.dims.input = r.u64();
    e.dims.hidden = r.u64();
    e.dims.embed = r.u64();
    e = init_encoder(0, e.dims, r.pod<std::uint8_t>() != 0);
    std::vector<Tensor> values;
    for (std::size_t k = 0; k < e.trainable().size(); ++k) values.push_back(r.tensor());
    try {
      e.set_trainable_values(values);
    } catch (const std::exception& ex) {
      throw CheckpointFormatError(std::string("inconsistent encoder tensors: ") + ex.what());
    }
    if (e.bn) {
      e.bn->running_mean = r.tensor();
      e.bn->running_var = r.tensor();
      e.bn->momentum = r.f64();
      e.bn->eps = r.f64();
    }
  }
  ckpt.optimizer.step = r.u64();
  for (EncoderOptState& s : ckpt.optimizer.encoders) {
    s.step = r.u64();
    const std::uint64_t n = r.u64();
    if (n > bytes.size()) throw CheckpointFormatError("checkpoint moment count out of range");
    for (std::uint64_t k = 0; k < n; ++k) s.first_moment.push_back(r.tensor());
    for (std::uint64_t k = 0; k < n; ++k) s.second_moment.push_back(r.tensor());
  }
  if (!r.done()) throw CheckpointFormatError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace probmed
