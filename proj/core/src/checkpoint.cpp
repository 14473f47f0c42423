#include "vsseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "vsseg/error.hpp"

namespace vsseg {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'S', 'E', 'G', 'C', 'K', 'P'};

uint64_t fnv1a(const char* data, size_t n) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* p, size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void str(const std::string& s) {
    pod<uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const nn::Tensor& t) {
    pod<uint32_t>(static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) pod<int64_t>(d);
    bytes(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, size_t end, std::string path) : buf_(buf), end_(end), path_(std::move(path)) {}

  template <typename T>
  T pod() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = pod<uint64_t>();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  nn::Tensor tensor() {
    const auto rank = pod<uint32_t>();
    if (rank > 8) corrupt("tensor rank");
    nn::Shape shape(rank);
    int64_t n = 1;
    for (auto& d : shape) {
      d = pod<int64_t>();
      if (d < 0 || d > (int64_t{1} << 40)) corrupt("tensor extent");
      n *= d;
    }
    std::vector<double> values(static_cast<size_t>(n));
    take(values.data(), values.size() * sizeof(double));
    return nn::Tensor(std::move(shape), std::move(values));
  }
  bool done() const { return pos_ == end_; }
  [[noreturn]] void corrupt(const std::string& what) const {
    throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt checkpoint " + path_ + " (" + what + ")");
  }

 private:
  void need(size_t n) const {
    if (n > end_ - pos_) corrupt("truncated");
  }
  void take(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }

  const std::vector<char>& buf_;
  size_t end_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.pod<uint32_t>(Checkpoint::kFormatVersion);
  w.str(ckpt.kind);
  w.str(ckpt.config_json);
  w.pod<int64_t>(ckpt.training_step);
  w.pod<int64_t>(ckpt.fold_index);
  w.pod<int64_t>(ckpt.optimizer_steps);
  w.pod<uint64_t>(ckpt.weights.size());
  for (const auto& [name, t] : ckpt.weights) {
    w.str(name);
    w.tensor(t);
  }
  w.pod<uint64_t>(ckpt.optimizer.size());
  for (const auto& [name, slot] : ckpt.optimizer) {
    w.str(name);
    w.tensor(slot.m);
    w.tensor(slot.v);
  }
  const uint64_t digest = fnv1a(w.buffer().data(), w.buffer().size());
  w.pod<uint64_t>(digest);

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing checkpoint " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto corrupt = [&](const std::string& why) {
    return CheckpointError(CheckpointError::Kind::corrupt, "corrupt checkpoint " + path.string() + " (" + why + ")");
  };
  if (buf.size() < sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t)) throw corrupt("truncated");
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) throw corrupt("bad magic");
  uint32_t version;
  std::memcpy(&version, buf.data() + sizeof(kMagic), sizeof(version));
  if (version != Checkpoint::kFormatVersion) {
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint " + path.string() + " has format version " + std::to_string(version) +
                              ", this build reads version " + std::to_string(Checkpoint::kFormatVersion));
  }
  const size_t body = buf.size() - sizeof(uint64_t);
  uint64_t digest;
  std::memcpy(&digest, buf.data() + body, sizeof(digest));
  if (digest != fnv1a(buf.data(), body)) throw corrupt("digest mismatch or truncated");

  Reader r(buf, body, path.string());
  r.pod<uint64_t>();  // magic
  r.pod<uint32_t>();  // version
  Checkpoint ckpt;
  ckpt.kind = r.str();
  if (!expected_kind.empty() && ckpt.kind != expected_kind) {
    throw CheckpointError(CheckpointError::Kind::wrong_kind, "checkpoint " + path.string() + " holds a '" +
                                                                 ckpt.kind + "' model, expected '" + expected_kind +
                                                                 "'");
  }
  ckpt.config_json = r.str();
  ckpt.training_step = r.pod<int64_t>();
  ckpt.fold_index = r.pod<int64_t>();
  ckpt.optimizer_steps = r.pod<int64_t>();
  const auto n_weights = r.pod<uint64_t>();
  for (uint64_t i = 0; i < n_weights; ++i) {
    std::string name = r.str();
    ckpt.weights.emplace(std::move(name), r.tensor());
  }
  const auto n_slots = r.pod<uint64_t>();
  for (uint64_t i = 0; i < n_slots; ++i) {
    std::string name = r.str();
    nn::AdamSlot slot;
    slot.m = r.tensor();
    slot.v = r.tensor();
    ckpt.optimizer.emplace(std::move(name), std::move(slot));
  }
  if (!r.done()) r.corrupt("trailing bytes");
  return ckpt;
}

std::map<std::string, nn::Tensor> snapshot_weights(const nn::Module& module) {
  std::map<std::string, nn::Tensor> out;
  for (const auto& p : module.named_parameters()) out[p.name] = p.var.value();
  return out;
}

}  // namespace vsseg
