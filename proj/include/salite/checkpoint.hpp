#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "salite/io.hpp"
#include "salite/params.hpp"
#include "salite/rng.hpp"

namespace salite {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'S', 'A', 'L', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { bad_magic, version_mismatch, truncated, dimension_mismatch, unknown_tensor, missing_tensor };

inline const char* to_string(CheckpointErrorKind k) {
  switch (k) {
    case CheckpointErrorKind::bad_magic: return "bad magic";
    case CheckpointErrorKind::version_mismatch: return "version mismatch";
    case CheckpointErrorKind::truncated: return "truncated";
    case CheckpointErrorKind::dimension_mismatch: return "dimension mismatch";
    case CheckpointErrorKind::unknown_tensor: return "unknown tensor";
    default: return "missing tensor";
  }
}

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string("checkpoint: ") + to_string(kind) + ": " + detail), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Data-order state: the permutation of the current epoch and the position inside it.
struct DataCursor {
  std::uint64_t epoch = 0;
  std::uint64_t position = 0;
  std::vector<std::uint32_t> order;

  bool operator==(const DataCursor&) const = default;
};

/// Layout (all integers little-endian):
///   "SALT" u32 version  u64 step  u32 len + config text
///   u64 x4 RNG state  u64 epoch  u64 position  u32 n + u32 x n order
///   u32 count, then per tensor: u32 len + name, u32 rank, u64 x rank dims, f32 x numel
/// Parameters come first in registration order, then "momentum/<name>" buffers.
struct Checkpoint {
  std::uint64_t step = 0;
  std::string config;
  Rng::State rng{};
  DataCursor cursor;
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(U));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<char>& b) : b_(b) {}
  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s(b_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void get_raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n)
      throw CheckpointError(CheckpointErrorKind::truncated,
                            std::string("reading ") + what + " at byte " + std::to_string(pos_));
  }
  const std::vector<char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> encode_checkpoint(const Checkpoint& c) {
  detail::ByteWriter w;
  w.put_raw(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  w.put(c.step);
  w.put_string(c.config);
  for (auto s : c.rng) w.put(s);
  w.put(c.cursor.epoch);
  w.put(c.cursor.position);
  w.put(static_cast<std::uint32_t>(c.cursor.order.size()));
  for (auto i : c.cursor.order) w.put(i);
  w.put(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (numel(t.shape) != t.values.size())
      throw std::invalid_argument("checkpoint: tensor " + t.name + " holds " + std::to_string(t.values.size()) +
                                  " values for shape " + to_string(t.shape));
    w.put_string(t.name);
    w.put(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put(static_cast<std::uint64_t>(d));
    w.put_raw(t.values.data(), t.values.size() * sizeof(float));
  }
  return w.bytes();
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError(CheckpointErrorKind::bad_magic, "file does not start with SALT");
  detail::ByteReader r(bytes);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "file version " + std::to_string(version) + ", reader version " + std::to_string(kCheckpointVersion));
  Checkpoint c;
  c.step = r.get<std::uint64_t>("step");
  c.config = r.get_string("config");
  for (auto& s : c.rng) s = r.get<std::uint64_t>("rng state");
  c.cursor.epoch = r.get<std::uint64_t>("epoch");
  c.cursor.position = r.get<std::uint64_t>("position");
  const auto n_order = r.get<std::uint32_t>("order size");
  if (n_order > r.remaining() / 4) throw CheckpointError(CheckpointErrorKind::truncated, "data order");
  c.cursor.order.resize(n_order);
  for (auto& i : c.cursor.order) i = r.get<std::uint32_t>("data order");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    TensorRecord t;
    t.name = r.get_string("tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank > 8) throw CheckpointError(CheckpointErrorKind::dimension_mismatch, t.name + ": rank " + std::to_string(rank));
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto e = r.get<std::uint64_t>("tensor dims");
      t.shape.push_back(static_cast<std::size_t>(e));
      total *= e;
    }
    if (total > r.remaining() / sizeof(float))
      throw CheckpointError(CheckpointErrorKind::truncated, "payload of " + t.name);
    t.values.resize(static_cast<std::size_t>(total));
    r.get_raw(t.values.data(), t.values.size() * sizeof(float), "tensor payload");
    c.tensors.push_back(std::move(t));
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(c);
  // write-then-rename so a crash never leaves a half-written checkpoint under the final name
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open checkpoint");
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

template <Real T>
TensorRecord make_record(const std::string& name, const Tensor<T>& t) {
  TensorRecord r{name, t.shape(), {}};
  r.values.reserve(t.numel());
  for (auto v : t.data()) r.values.push_back(static_cast<float>(v));
  return r;
}

/// Checks every parameter against the checkpoint before copying anything, so a failed restore leaves
/// the store untouched. Records under `extra_prefix` are ignored here (optimizer state).
template <Real T>
void restore_params(ParamStore<T>& store, const Checkpoint& c, const std::string& extra_prefix = "momentum/") {
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& t : c.tensors) {
    if (!extra_prefix.empty() && t.name.rfind(extra_prefix, 0) == 0) continue;
    if (!store.find(t.name)) throw CheckpointError(CheckpointErrorKind::unknown_tensor, t.name);
    by_name[t.name] = &t;
  }
  for (const auto& p : store.all()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError(CheckpointErrorKind::missing_tensor, p.name);
    if (it->second->shape != p.value.shape())
      throw CheckpointError(CheckpointErrorKind::dimension_mismatch,
                            p.name + ": checkpoint " + to_string(it->second->shape) + ", model " + to_string(p.value.shape()));
  }
  for (auto& p : store.all()) {
    const auto& src = by_name[p.name]->values;
    auto dst = p.value.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
}

}  // namespace salite
