#include "cvar/common/binary_io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "cvar/common/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; add byte swapping for this platform");

namespace cvar::io {

void write_f32(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected_count * sizeof(float)) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected_count) +
                      " floats, file holds " + std::to_string(bytes) + " bytes");
  }
  in.seekg(0);
  std::vector<float> values(expected_count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("read failed: " + path.string());
  return values;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto n = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  return bytes;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr)) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

Writer::Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw IoError("cannot open " + path.string() + " for writing");
}

void Writer::u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
void Writer::u64(std::uint64_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
void Writer::f64(double v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }

void Writer::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void Writer::f32s(std::span<const float> v) {
  out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void Writer::close() {
  out_.close();
  if (!out_) throw IoError("write failed: " + path_.string());
}

Reader::Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw IoError("cannot open " + path.string());
}

void Reader::read(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(path_.string() + ": truncated file");
}

std::uint32_t Reader::u32() {
  std::uint32_t v;
  read(&v, sizeof v);
  return v;
}

std::uint64_t Reader::u64() {
  std::uint64_t v;
  read(&v, sizeof v);
  return v;
}

double Reader::f64() {
  double v;
  read(&v, sizeof v);
  return v;
}

std::string Reader::str(std::size_t max_len) {
  const auto n = u32();
  if (n > max_len) throw FormatError(path_.string() + ": string length " + std::to_string(n) + " too large");
  std::string s(n, '\0');
  read(s.data(), n);
  return s;
}

std::vector<float> Reader::f32s(std::size_t count) {
  std::vector<float> v(count);
  read(v.data(), count * sizeof(float));
  return v;
}

bool Reader::at_end() {
  return in_.peek() == std::ifstream::traits_type::eof();
}

}  // namespace cvar::io
