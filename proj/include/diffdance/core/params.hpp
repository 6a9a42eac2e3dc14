#pragma once

#include <map>
#include <string>
#include <vector>

#include "diffdance/core/autodiff.hpp"

namespace diffdance {

class Rng;

/// Ordered, named collection of parameter matrices. Order is insertion order
/// and is what checkpoints and optimizer state follow.
class ParamStore {
 public:
  /// Returns the index of the new entry. Non-trainable entries (buffers such
  /// as normalization statistics) are stored and serialized but never bound
  /// as gradient leaves.
  std::size_t add(std::string name, Matrix value, bool trainable = true);

  std::size_t size() const { return entries_.size(); }
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return lookup_.count(name) != 0; }

  const std::string& name(std::size_t i) const { return entries_[i].name; }
  bool trainable(std::size_t i) const { return entries_[i].trainable; }
  Matrix& value(std::size_t i) { return entries_[i].value; }
  const Matrix& value(std::size_t i) const { return entries_[i].value; }
  Matrix& operator[](const std::string& name) { return entries_[index_of(name)].value; }
  const Matrix& operator[](const std::string& name) const { return entries_[index_of(name)].value; }

  /// Total scalar count of trainable entries.
  std::size_t trainable_count() const;

  /// Registers every entry as a tape leaf (buffers as constants).
  std::vector<Var> bind(Tape& tape) const;
  /// Gradients of the bound leaves after tape.backward(); zeros for buffers.
  std::vector<Matrix> gradients(const Tape& tape, const std::vector<Var>& bound) const;

  bool operator==(const ParamStore& other) const;

 private:
  struct Entry {
    std::string name;
    Matrix value;
    bool trainable;
  };
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> lookup_;
};

/// Glorot-uniform initialization for a fan_in x fan_out weight.
Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

}  // namespace diffdance
