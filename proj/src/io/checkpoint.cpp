#include "dancerl/io/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "dancerl/core/errors.hpp"

namespace dancerl {

namespace {
constexpr std::string_view kMagic{"DRLCKPT\0", 8};
constexpr std::uint8_t kDtypeF64 = 1;
}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

void ByteReader::need(std::size_t n) {
  if (data_.size() - pos_ < n) throw IoError(what_ + ": truncated file");
}
std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}
std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
  return v;
}
std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
  return v;
}
double ByteReader::f64() { return std::bit_cast<double>(u64()); }
std::string ByteReader::str() {
  const std::uint32_t n = u32();
  return std::string(raw(n));
}
std::string_view ByteReader::raw(std::size_t n) {
  need(n);
  const std::string_view out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.str(ckpt.kind);
  w.u64(ckpt.config_digest);
  w.u64(ckpt.seed);
  w.str(ckpt.config_json);
  w.u32(static_cast<std::uint32_t>(ckpt.params.count()));
  for (ParamId id = 0; id < ckpt.params.count(); ++id) {
    const Tensor& t = ckpt.params[id];
    w.str(ckpt.params.name(id));
    w.u8(kDtypeF64);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  }
  w.u64(fnv1a(w.bytes()));
  write_file(path, w.bytes());
}

namespace {
Checkpoint parse_checkpoint(std::string_view body, const std::string& what,
                            const std::string& expected_kind);
}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
  const std::string bytes = read_file(path);
  const std::string what = "checkpoint " + path.string();
  if (bytes.size() < kMagic.size() + 8 || std::string_view(bytes).substr(0, 8) != kMagic)
    throw CheckpointError(what + ": bad magic");
  const std::string_view body = std::string_view(bytes).substr(0, bytes.size() - 8);
  ByteReader tail(std::string_view(bytes).substr(bytes.size() - 8), what);
  if (tail.u64() != fnv1a(body)) throw CheckpointError(what + ": checksum mismatch");

  try {
    return parse_checkpoint(body, what, expected_kind);
  } catch (const IoError& e) {
    throw CheckpointError(e.what());
  }
}

namespace {
Checkpoint parse_checkpoint(std::string_view body, const std::string& what,
                            const std::string& expected_kind) {
  ByteReader r(body, what);
  r.raw(kMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(what + ": unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.kind = r.str();
  if (!expected_kind.empty() && ckpt.kind != expected_kind)
    throw CheckpointError(what + ": expected a " + expected_kind + " checkpoint, found " + ckpt.kind);
  ckpt.config_digest = r.u64();
  ckpt.seed = r.u64();
  ckpt.config_json = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    if (r.u8() != kDtypeF64) throw CheckpointError(what + ": unknown dtype for " + name);
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 4) throw CheckpointError(what + ": bad rank for " + name);
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d == 0 || d > (1u << 28) || n > (std::size_t{1} << 32) / d)
        throw CheckpointError(what + ": bad shape for " + name);
      n *= d;
    }
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    if (ckpt.params.find(name)) throw CheckpointError(what + ": duplicate tensor " + name);
    ckpt.params.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw CheckpointError(what + ": trailing bytes");
  return ckpt;
}
}  // namespace

void assign_parameters(Parameters& target, const Parameters& source, const std::string& what) {
  if (target.count() != source.count())
    throw CheckpointError(what + ": expected " + std::to_string(target.count()) + " tensors, found " +
                          std::to_string(source.count()));
  for (ParamId id = 0; id < target.count(); ++id) {
    const auto src = source.find(target.name(id));
    if (!src) throw CheckpointError(what + ": missing tensor " + target.name(id));
    if (source[*src].shape() != target[id].shape())
      throw CheckpointError(what + ": shape mismatch for " + target.name(id) + " (" +
                            source[*src].shape_string() + " vs " + target[id].shape_string() + ")");
    target[id] = source[*src];
  }
}

}  // namespace dancerl
