#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace cvar::io {

// Raw little-endian float32 arrays, as used for clips, depth maps and
// attention dumps.
void write_f32(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

// Little-endian stream helpers for versioned binary formats.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(const std::string& s);
  void f32s(std::span<const float> v);
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str(std::size_t max_len = 1 << 20);
  std::vector<float> f32s(std::size_t count);
  bool at_end();

 private:
  void read(void* dst, std::size_t n);
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace cvar::io
