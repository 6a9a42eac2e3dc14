#include "diffdance/model/denoiser.hpp"

#include <cmath>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"

namespace diffdance {

namespace {

int get_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DomainError("denoiser config: missing key " + key);
  return std::stoi(it->second);
}

double get_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DomainError("denoiser config: missing key " + key);
  return std::stod(it->second);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void DenoiserConfig::validate() const {
  if (layers < 1 || hidden < 2 || heads < 1 || max_frames < 1 || frame_width < 1 || cond_dim < 1) {
    throw DomainError("denoiser config: sizes must be positive");
  }
  if (hidden % 2 != 0) throw DomainError("denoiser config: hidden size must be even");
  if (hidden % heads != 0) throw DomainError("denoiser config: hidden size not divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("denoiser config: dropout outside [0, 1)");
}

std::map<std::string, std::string> DenoiserConfig::to_map() const {
  return {
      {"layers", std::to_string(layers)},
      {"hidden", std::to_string(hidden)},
      {"heads", std::to_string(heads)},
      {"dropout", fmt_double(dropout)},
      {"max_frames", std::to_string(max_frames)},
      {"frame_width", std::to_string(frame_width)},
      {"cond_dim", std::to_string(cond_dim)},
      {"super_resolution", super_resolution ? "1" : "0"},
  };
}

DenoiserConfig DenoiserConfig::from_map(const std::map<std::string, std::string>& kv) {
  DenoiserConfig c;
  c.layers = get_int(kv, "layers");
  c.hidden = get_int(kv, "hidden");
  c.heads = get_int(kv, "heads");
  c.dropout = get_double(kv, "dropout");
  c.max_frames = get_int(kv, "max_frames");
  c.frame_width = get_int(kv, "frame_width");
  c.cond_dim = get_int(kv, "cond_dim");
  c.super_resolution = get_int(kv, "super_resolution") != 0;
  c.validate();
  return c;
}

std::size_t count_params(const DenoiserConfig& c) {
  const std::size_t h = static_cast<std::size_t>(c.hidden);
  const std::size_t in = static_cast<std::size_t>(c.input_width());
  const std::size_t fw = static_cast<std::size_t>(c.frame_width);
  const std::size_t cd = static_cast<std::size_t>(c.cond_dim);
  const std::size_t block = 12 * h * h + 13 * h;
  return (in * h + h)                                   // input projection
         + static_cast<std::size_t>(c.max_frames) * h  // positions
         + 2 * (h * h + h)                              // timestep MLP
         + (cd * h + h)                                 // condition projection
         + cd                                           // null condition
         + static_cast<std::size_t>(c.layers) * block  //
         + 2 * h                                        // final norm
         + (h * fw + fw);                               // output projection
}

RowVector sinusoidal_embedding(int t, int dim) {
  RowVector e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e(i) = std::sin(static_cast<double>(t) * freq);
    e(half + i) = std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(init_seed);
  const int h = config_.hidden;
  const int fw = config_.frame_width;
  auto zeros = [](int r, int c) { return Matrix(Matrix::Zero(r, c)); };
  auto ones = [](int r, int c) { return Matrix(Matrix::Ones(r, c)); };

  params_.add("in.w", xavier_uniform(config_.input_width(), h, rng));
  params_.add("in.b", zeros(1, h));
  params_.add("pos", rng.normal_matrix(config_.max_frames, h) * 0.02);
  params_.add("time.w1", xavier_uniform(h, h, rng));
  params_.add("time.b1", zeros(1, h));
  params_.add("time.w2", xavier_uniform(h, h, rng));
  params_.add("time.b2", zeros(1, h));
  params_.add("cond.w", xavier_uniform(config_.cond_dim, h, rng));
  params_.add("cond.b", zeros(1, h));
  params_.add("cond.null", rng.normal_matrix(1, config_.cond_dim));
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    params_.add(p + "ln1.g", ones(1, h));
    params_.add(p + "ln1.b", zeros(1, h));
    params_.add(p + "attn.w_qkv", xavier_uniform(h, 3 * h, rng));
    params_.add(p + "attn.b_qkv", zeros(1, 3 * h));
    params_.add(p + "attn.w_o", xavier_uniform(h, h, rng));
    params_.add(p + "attn.b_o", zeros(1, h));
    params_.add(p + "ln2.g", ones(1, h));
    params_.add(p + "ln2.b", zeros(1, h));
    params_.add(p + "ff.w1", xavier_uniform(h, 4 * h, rng));
    params_.add(p + "ff.b1", zeros(1, 4 * h));
    params_.add(p + "ff.w2", xavier_uniform(4 * h, h, rng));
    params_.add(p + "ff.b2", zeros(1, h));
  }
  params_.add("final.ln.g", ones(1, h));
  params_.add("final.ln.b", zeros(1, h));
  // Zero output head: an untrained model predicts the data mean.
  params_.add("out.w", zeros(h, fw));
  params_.add("out.b", zeros(1, fw));
  params_.add("norm.mean", zeros(1, fw), false);
  params_.add("norm.std", ones(1, fw), false);
  index_params();
}

Denoiser::Denoiser(const DenoiserConfig& config, ParamStore params) : config_(config), params_(std::move(params)) {
  config_.validate();
  index_params();
  Denoiser reference(config_, 0);
  if (reference.params_.size() != params_.size()) throw ShapeError("denoiser: parameter table does not match config");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& a = reference.params_.value(i);
    const Matrix& b = params_.value(i);
    if (reference.params_.name(i) != params_.name(i) || a.rows() != b.rows() || a.cols() != b.cols()) {
      throw ShapeError("denoiser: parameter " + params_.name(i) + " does not match config");
    }
  }
}

void Denoiser::index_params() {
  w_in_ = params_.index_of("in.w");
  b_in_ = params_.index_of("in.b");
  pos_ = params_.index_of("pos");
  w_t1_ = params_.index_of("time.w1");
  b_t1_ = params_.index_of("time.b1");
  w_t2_ = params_.index_of("time.w2");
  b_t2_ = params_.index_of("time.b2");
  w_c_ = params_.index_of("cond.w");
  b_c_ = params_.index_of("cond.b");
  null_c_ = params_.index_of("cond.null");
  lnf_g_ = params_.index_of("final.ln.g");
  lnf_b_ = params_.index_of("final.ln.b");
  w_out_ = params_.index_of("out.w");
  b_out_ = params_.index_of("out.b");
  norm_mean_ = params_.index_of("norm.mean");
  norm_std_ = params_.index_of("norm.std");
  blocks_.clear();
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    blocks_.push_back({params_.index_of(p + "ln1.g"), params_.index_of(p + "ln1.b"),
                       params_.index_of(p + "attn.w_qkv"), params_.index_of(p + "attn.b_qkv"),
                       params_.index_of(p + "attn.w_o"), params_.index_of(p + "attn.b_o"),
                       params_.index_of(p + "ln2.g"), params_.index_of(p + "ln2.b"),
                       params_.index_of(p + "ff.w1"), params_.index_of(p + "ff.b1"),
                       params_.index_of(p + "ff.w2"), params_.index_of(p + "ff.b2")});
  }
}

Var Denoiser::time_embedding(Tape& tape, const std::vector<Var>& b, int t) const {
  if (t < 0) throw DomainError("timestep must be >= 0");
  Var e = tape.constant(sinusoidal_embedding(t, config_.hidden));
  e = ad::gelu(ad::add(ad::matmul(e, b[w_t1_]), b[b_t1_]));
  return ad::add(ad::matmul(e, b[w_t2_]), b[b_t2_]);
}

Var Denoiser::forward(Tape& tape, const std::vector<Var>& b, const Matrix& x_t, int t, const Condition& c,
                      const Matrix* x_low, int s, Rng* dropout_rng) const {
  const Eigen::Index frames = x_t.rows();
  if (x_t.cols() != config_.frame_width) throw ShapeError("denoiser: frame width mismatch");
  if (frames < 1 || frames > config_.max_frames) {
    throw ShapeError("denoiser: " + std::to_string(frames) + " frames exceeds max_frames " +
                     std::to_string(config_.max_frames));
  }
  if (b.size() != params_.size()) throw ShapeError("denoiser: bound parameter count mismatch");

  Var input = tape.constant(x_t);
  int t_embed = t;
  if (config_.super_resolution) {
    if (x_low == nullptr) throw std::invalid_argument("denoiser: SSR forward needs x_low");
    if (x_low->rows() != frames || x_low->cols() != config_.frame_width) {
      throw ShapeError("denoiser: x_low length/width does not match x_t");
    }
    const Var parts[] = {input, tape.constant(*x_low)};
    input = ad::concat_cols(parts);
    t_embed = t + s;
  }
  const double p_drop = dropout_rng ? config_.dropout : 0.0;

  Var tokens = ad::add(ad::add(ad::matmul(input, b[w_in_]), b[b_in_]), ad::slice_rows(b[pos_], 0, frames));
  Var cond_vec = c ? tape.constant(Matrix(*c)) : b[null_c_];
  if (cond_vec.cols() != config_.cond_dim) throw ShapeError("denoiser: condition width mismatch");
  Var cond_token = ad::add(ad::add(ad::matmul(cond_vec, b[w_c_]), b[b_c_]), time_embedding(tape, b, t_embed));
  const Var seq[] = {cond_token, tokens};
  Var h = ad::concat_rows(seq);
  if (p_drop > 0.0) h = ad::dropout(h, p_drop, *dropout_rng);

  const int heads = config_.heads;
  const int hd = config_.hidden / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  const int hid = config_.hidden;
  for (const Block& blk : blocks_) {
    Var a = ad::layernorm_rows(h, b[blk.ln1_g], b[blk.ln1_b]);
    Var qkv = ad::add(ad::matmul(a, b[blk.w_qkv]), b[blk.b_qkv]);
    std::vector<Var> outs;
    outs.reserve(heads);
    for (int k = 0; k < heads; ++k) {
      Var q = ad::slice_cols(qkv, k * hd, hd);
      Var key = ad::slice_cols(qkv, hid + k * hd, hd);
      Var v = ad::slice_cols(qkv, 2 * hid + k * hd, hd);
      Var att = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(key)), inv_sqrt));
      outs.push_back(ad::matmul(att, v));
    }
    Var o = ad::add(ad::matmul(ad::concat_cols(outs), b[blk.w_o]), b[blk.b_o]);
    if (p_drop > 0.0) o = ad::dropout(o, p_drop, *dropout_rng);
    h = ad::add(h, o);

    Var m = ad::layernorm_rows(h, b[blk.ln2_g], b[blk.ln2_b]);
    Var f = ad::gelu(ad::add(ad::matmul(m, b[blk.w_ff1]), b[blk.b_ff1]));
    f = ad::add(ad::matmul(f, b[blk.w_ff2]), b[blk.b_ff2]);
    if (p_drop > 0.0) f = ad::dropout(f, p_drop, *dropout_rng);
    h = ad::add(h, f);
  }
  h = ad::layernorm_rows(h, b[lnf_g_], b[lnf_b_]);
  Var frame_tokens = ad::slice_rows(h, 1, frames);
  return ad::add(ad::matmul(frame_tokens, b[w_out_]), b[b_out_]);
}

Matrix Denoiser::predict(const Matrix& x_t, int t, const Condition& c) const {
  if (config_.super_resolution) throw std::logic_error("predict: SSR model needs predict_ssr");
  Tape tape(false);
  const std::vector<Var> bound = params_.bind(tape);
  return forward(tape, bound, x_t, t, c).value();
}

Matrix Denoiser::predict_ssr(const Matrix& x_t, int t, const Condition& c, const Matrix& x_low, int s) const {
  if (!config_.super_resolution) throw std::logic_error("predict_ssr: base model has no low-res input");
  Tape tape(false);
  const std::vector<Var> bound = params_.bind(tape);
  return forward(tape, bound, x_t, t, c, &x_low, s).value();
}

RowVector Denoiser::embed_timestep(int t) const {
  Tape tape(false);
  const std::vector<Var> bound = params_.bind(tape);
  return time_embedding(tape, bound, t).value();
}

void Denoiser::set_normalization(const RowVector& mean, const RowVector& std) {
  if (mean.size() != config_.frame_width || std.size() != config_.frame_width) {
    throw ShapeError("set_normalization: width mismatch");
  }
  if ((std.array() <= 0.0).any()) throw DomainError("set_normalization: std must be positive");
  params_.value(norm_mean_) = mean;
  params_.value(norm_std_) = std;
}

Matrix Denoiser::normalize(const Matrix& frames) const {
  Matrix out = frames;
  out.rowwise() -= params_.value(norm_mean_).row(0);
  out.array().rowwise() /= params_.value(norm_std_).row(0).array();
  return out;
}

Matrix Denoiser::denormalize(const Matrix& x) const {
  Matrix out = x;
  out.array().rowwise() *= params_.value(norm_std_).row(0).array();
  out.rowwise() += params_.value(norm_mean_).row(0);
  return out;
}

RowVector Denoiser::norm_mean() const { return params_.value(norm_mean_); }
RowVector Denoiser::norm_std() const { return params_.value(norm_std_); }

}  // namespace diffdance
