#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dancerl/core/params.hpp"

namespace dancerl {

// Binary layout (little-endian):
//   "DRLCKPT\0" | u32 version | str kind | u64 config digest | u64 seed | str config json |
//   u32 tensor count | { str name | u8 dtype (1 = f64) | u32 rank | u64 dims... | f64 data... } |
//   u64 FNV-1a checksum of all preceding bytes
// where str = u32 length + bytes.
struct Checkpoint {
  std::string kind;  // "policy", "reward", "actor-critic"
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  std::string config_json;  // architecture config the parameters were built with
  Parameters params;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws CheckpointError on corruption, version or kind mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL);

// Little-endian byte writer/reader shared by the binary formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);
  void str(std::string_view s);
  void raw(std::string_view s) { buf_.append(s); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what) : data_(bytes), what_(std::move(what)) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();
  std::string str();
  std::string_view raw(std::size_t n);
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n);
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Copies every tensor of `target` from the same-named tensor of `source`.
// Missing names, shape mismatches and extra source tensors are checkpoint errors.
void assign_parameters(Parameters& target, const Parameters& source, const std::string& what);

}  // namespace dancerl
