#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffdance/core/adam.hpp"
#include "diffdance/core/params.hpp"

namespace diffdance {

class Denoiser;

/// DDCKPT01 layout, little-endian:
///   8 bytes  magic "DDCKPT01"
///   u32      version (1)
///   u32      config byte length, then "key=value\n" lines sorted by key
///   u32      parameter count, then per parameter:
///              u32 name length, name bytes, u8 trainable,
///              u32 ndim (2), u32 rows, u32 cols, f64 x rows·cols
///   u8       optimizer present; if 1: u64 step, then per parameter the
///            first moment then the second moment (f64, same shapes)
struct Checkpoint {
  std::map<std::string, std::string> config;
  ParamStore params;
  std::optional<AdamState> optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, version mismatch, truncation or
/// trailing bytes.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Denoiser config plus "kind" (m2d/ssr) and any extra keys.
Checkpoint denoiser_checkpoint(const Denoiser& model, const std::map<std::string, std::string>& extra = {},
                               const std::optional<AdamState>& optimizer = std::nullopt);
Denoiser denoiser_from_checkpoint(const Checkpoint& ckpt);

}  // namespace diffdance
