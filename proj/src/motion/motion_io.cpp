#include "diffdance/motion/motion_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "diffdance/core/error.hpp"

namespace diffdance {

namespace le {

namespace {
template <typename U>
void put_uint(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
}  // namespace

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) { put_uint(out, v); }
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) { put_uint(out, v); }
void put_f32(std::vector<std::uint8_t>& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::vector<std::uint8_t>& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }

void Reader::need(std::size_t n) const {
  if (remaining() < n) throw FormatError("truncated data");
}

std::uint8_t Reader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

}  // namespace le

namespace {
constexpr char kMagic[] = "MOTSEQ01";
}

std::vector<std::uint8_t> encode_motion(const MotionSequence& seq) {
  const Eigen::Index width = seq.frames.cols();
  if ((width - 3) % 6 != 0 || width < 9) throw ShapeError("encode_motion: frame width is not 6J+3");
  std::vector<std::uint8_t> out;
  out.reserve(28 + 8 * static_cast<std::size_t>(seq.frames.size()));
  out.insert(out.end(), kMagic, kMagic + 8);
  le::put_u32(out, kMotionFormatVersion);
  le::put_u32(out, static_cast<std::uint32_t>((width - 3) / 6));
  le::put_u32(out, static_cast<std::uint32_t>(seq.frames.rows()));
  le::put_f32(out, static_cast<float>(seq.fps));
  for (Eigen::Index i = 0; i < seq.frames.size(); ++i) le::put_f64(out, seq.frames.data()[i]);
  return out;
}

MotionSequence decode_motion(const std::vector<std::uint8_t>& bytes) {
  le::Reader r(bytes);
  if (bytes.size() < 8 || r.str(8) != std::string(kMagic, 8)) throw FormatError("motion file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kMotionFormatVersion) throw FormatError("motion file: unsupported version " + std::to_string(version));
  const std::uint32_t joints = r.u32();
  const std::uint32_t frames = r.u32();
  const float fps = r.f32();
  const std::size_t width = 6 * static_cast<std::size_t>(joints) + 3;
  const std::size_t count = width * frames;
  if (r.remaining() < count * 8) throw FormatError("motion file: truncated frame data");
  if (r.remaining() > count * 8) throw FormatError("motion file: trailing bytes");
  MotionSequence seq;
  seq.fps = static_cast<double>(fps);
  seq.frames.resize(frames, static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < count; ++i) seq.frames.data()[i] = r.f64();
  return seq;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void save_motion(const MotionSequence& seq, const std::filesystem::path& path) {
  write_file_bytes(path, encode_motion(seq));
}

MotionSequence load_motion(const std::filesystem::path& path) { return decode_motion(read_file_bytes(path)); }

}  // namespace diffdance
