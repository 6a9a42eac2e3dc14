#pragma once

#include <cstdint>
#include <vector>

#include "diffdance/core/params.hpp"

namespace diffdance {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW) decay; 0 gives plain Adam.
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;

  /// Zero moments shaped like the store's entries.
  static AdamState zeros_like(const ParamStore& params);
};

/// One bias-corrected AdamW update of every trainable entry. `grads` is
/// parallel to the store. Throws ShapeError on any shape disagreement.
void adam_step(ParamStore& params, const std::vector<Matrix>& grads, AdamState& state,
               const AdamConfig& config);

}  // namespace diffdance
