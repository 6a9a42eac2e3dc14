#include "diffdance/core/params.hpp"

#include <cmath>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"

namespace diffdance {

std::size_t ParamStore::add(std::string name, Matrix value, bool trainable) {
  if (lookup_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  lookup_[name] = entries_.size();
  entries_.push_back({std::move(name), std::move(value), trainable});
  return entries_.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) throw std::out_of_range("ParamStore: no entry " + name);
  return it->second;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) {
    if (e.trainable) n += static_cast<std::size_t>(e.value.size());
  }
  return n;
}

std::vector<Var> ParamStore::bind(Tape& tape) const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const Entry& e : entries_) out.push_back(tape.leaf(e.value, e.trainable));
  return out;
}

std::vector<Matrix> ParamStore::gradients(const Tape& tape, const std::vector<Var>& bound) const {
  if (bound.size() != entries_.size()) throw ShapeError("ParamStore::gradients: binding size mismatch");
  std::vector<Matrix> out;
  out.reserve(bound.size());
  for (const Var& v : bound) out.push_back(tape.grad(v));
  return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Entry& a = entries_[i];
    const Entry& b = other.entries_[i];
    if (a.name != b.name || a.trainable != b.trainable) return false;
    if (a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
    if (a.value != b.value) return false;
  }
  return true;
}

Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
  return w;
}

}  // namespace diffdance
