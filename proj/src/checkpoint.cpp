#include "rsplat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rsplat {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

void BinaryWriter::u64(std::uint64_t v) {
  tag('u');
  raw(&v, 8);
}

void BinaryWriter::f64(double v) {
  tag('f');
  raw(&v, 8);
}

void BinaryWriter::str(const std::string& s) {
  tag('s');
  const std::uint64_t n = s.size();
  raw(&n, 8);
  raw(s.data(), s.size());
}

void BinaryWriter::f64s(std::span<const double> v) {
  tag('F');
  const std::uint64_t n = v.size();
  raw(&n, 8);
  raw(v.data(), v.size() * 8);
}

void BinaryWriter::i64s(std::span<const long> v) {
  tag('I');
  const std::uint64_t n = v.size();
  raw(&n, 8);
  for (long x : v) {
    const std::int64_t y = x;
    raw(&y, 8);
  }
}

void BinaryReader::raw(void* p, std::size_t n) {
  if (buf_.size() - pos_ < n) throw IoError(src_ + ": truncated checkpoint");
  std::memcpy(p, buf_.data() + pos_, n);
  pos_ += n;
}

void BinaryReader::skip(std::size_t n) {
  if (buf_.size() - pos_ < n) throw IoError(src_ + ": truncated checkpoint");
  pos_ += n;
}

void BinaryReader::expect(char t) {
  char c = 0;
  raw(&c, 1);
  if (c != t) throw IoError(src_ + ": corrupt checkpoint (unexpected field at byte " + std::to_string(pos_ - 1) + ")");
}

std::uint64_t BinaryReader::u64() {
  expect('u');
  std::uint64_t v;
  raw(&v, 8);
  return v;
}

double BinaryReader::f64() {
  expect('f');
  double v;
  raw(&v, 8);
  return v;
}

std::string BinaryReader::str() {
  expect('s');
  std::uint64_t n;
  raw(&n, 8);
  if (n > buf_.size() - pos_) throw IoError(src_ + ": truncated checkpoint");
  std::string s(buf_.data() + pos_, n);
  pos_ += n;
  return s;
}

std::vector<double> BinaryReader::f64s() {
  expect('F');
  std::uint64_t n;
  raw(&n, 8);
  if (n > (buf_.size() - pos_) / 8) throw IoError(src_ + ": truncated checkpoint");
  std::vector<double> v(n);
  raw(v.data(), n * 8);
  return v;
}

std::vector<long> BinaryReader::i64s() {
  expect('I');
  std::uint64_t n;
  raw(&n, 8);
  if (n > (buf_.size() - pos_) / 8) throw IoError(src_ + ": truncated checkpoint");
  std::vector<long> v(n);
  for (auto& x : v) {
    std::int64_t y;
    raw(&y, 8);
    x = static_cast<long>(y);
  }
  return v;
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  // write-then-rename so an interrupted save never clobbers the previous checkpoint
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError(tmp.string() + ": cannot open for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": rename failed: " + ec.message());
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace rsplat
