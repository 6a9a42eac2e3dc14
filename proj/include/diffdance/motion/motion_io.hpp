#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diffdance/motion/sequence.hpp"

namespace diffdance {

/// MOTSEQ01 layout, little-endian:
///   8  bytes  magic "MOTSEQ01"
///   u32       version (1)
///   u32       joint count J
///   u32       frame count L
///   f32       fps
///   f64 x L·(6J+3) frame data, row-major
inline constexpr std::uint32_t kMotionFormatVersion = 1;

std::vector<std::uint8_t> encode_motion(const MotionSequence& seq);
/// Throws FormatError on bad magic, version mismatch, truncation or
/// trailing bytes.
MotionSequence decode_motion(const std::vector<std::uint8_t>& bytes);

void save_motion(const MotionSequence& seq, const std::filesystem::path& path);
MotionSequence load_motion(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Little-endian primitive encoding shared with the checkpoint format.
namespace le {
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
void put_f64(std::vector<std::uint8_t>& out, double v);

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str(std::size_t n);
  std::uint8_t u8();
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};
}  // namespace le

}  // namespace diffdance
