#include "diffdance/model/checkpoint.hpp"

#include <sstream>

#include "diffdance/core/error.hpp"
#include "diffdance/model/denoiser.hpp"
#include "diffdance/motion/motion_io.hpp"

namespace diffdance {

namespace {
constexpr char kMagic[] = "DDCKPT01";

void put_matrix_data(std::vector<std::uint8_t>& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) le::put_f64(out, m.data()[i]);
}

void read_matrix_data(le::Reader& r, Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
}
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  le::put_u32(out, kCheckpointVersion);
  std::string cfg;
  for (const auto& [k, v] : ckpt.config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("checkpoint config key/value contains a separator: " + k);
    }
    cfg += k + "=" + v + "\n";
  }
  le::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());

  const ParamStore& p = ckpt.params;
  le::put_u32(out, static_cast<std::uint32_t>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& name = p.name(i);
    le::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(p.trainable(i) ? 1 : 0);
    le::put_u32(out, 2);
    le::put_u32(out, static_cast<std::uint32_t>(p.value(i).rows()));
    le::put_u32(out, static_cast<std::uint32_t>(p.value(i).cols()));
    put_matrix_data(out, p.value(i));
  }
  out.push_back(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const AdamState& s = *ckpt.optimizer;
    if (s.m.size() != p.size() || s.v.size() != p.size()) throw ShapeError("checkpoint: optimizer state size mismatch");
    le::put_u64(out, static_cast<std::uint64_t>(s.step));
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (s.m[i].rows() != p.value(i).rows() || s.m[i].cols() != p.value(i).cols() ||
          s.v[i].rows() != p.value(i).rows() || s.v[i].cols() != p.value(i).cols()) {
        throw ShapeError("checkpoint: optimizer moment shape mismatch for " + p.name(i));
      }
      put_matrix_data(out, s.m[i]);
      put_matrix_data(out, s.v[i]);
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  le::Reader r(bytes);
  if (bytes.size() < 8 || r.str(8) != std::string(kMagic, 8)) throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const std::string cfg = r.str(r.u32());
  std::istringstream lines(cfg);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: malformed config line");
    ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    const bool trainable = r.u8() != 0;
    if (r.u32() != 2) throw FormatError("checkpoint: only rank-2 parameters are supported");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (r.remaining() / 8 < static_cast<std::size_t>(rows) * cols) throw FormatError("truncated data");
    Matrix m(rows, cols);
    read_matrix_data(r, m);
    ckpt.params.add(name, std::move(m), trainable);
  }
  if (r.u8() != 0) {
    AdamState s = AdamState::zeros_like(ckpt.params);
    s.step = static_cast<std::int64_t>(r.u64());
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      read_matrix_data(r, s.m[i]);
      read_matrix_data(r, s.v[i]);
    }
    ckpt.optimizer = std::move(s);
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

Checkpoint denoiser_checkpoint(const Denoiser& model, const std::map<std::string, std::string>& extra,
                               const std::optional<AdamState>& optimizer) {
  Checkpoint c;
  c.config = extra;
  for (const auto& [k, v] : model.config().to_map()) c.config["model." + k] = v;
  c.config["kind"] = model.config().super_resolution ? "ssr" : "m2d";
  c.params = model.params();
  c.optimizer = optimizer;
  return c;
}

Denoiser denoiser_from_checkpoint(const Checkpoint& ckpt) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : ckpt.config) {
    if (k.rfind("model.", 0) == 0) kv[k.substr(6)] = v;
  }
  return Denoiser(DenoiserConfig::from_map(kv), ckpt.params);
}

}  // namespace diffdance
