#pragma once

#include "rsplat/common.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace rsplat {

inline constexpr char kCheckpointMagic[4] = {'R', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian binary encoder for checkpoints. Every field is preceded by a one-byte tag so a
/// reader can detect layout drift.
class BinaryWriter {
 public:
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void str(const std::string& s);
  void f64s(std::span<const double> v);
  void i64s(std::span<const long> v);
  const std::string& bytes() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void tag(char t) { buf_.push_back(t); }
  std::string buf_;
};

class BinaryReader {
 public:
  BinaryReader(std::string bytes, std::string source) : buf_(std::move(bytes)), src_(std::move(source)) {}
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  std::string str();
  std::vector<double> f64s();
  std::vector<long> i64s();
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t position() const { return pos_; }
  void skip(std::size_t n);

 private:
  void raw(void* p, std::size_t n);
  void expect(char t);
  std::string buf_;
  std::string src_;
  std::size_t pos_ = 0;
};

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);
std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace rsplat
