#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hinet/tensor.hpp"

namespace hinet {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers for a fixed, ordered list of parameters.
struct AdamState {
  AdamOptions options;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(std::span<const Tensor> params, AdamOptions opts = {});
};

/// One bias-corrected Adam update of every parameter from its current grad.
void adam_step(std::span<Tensor> params, AdamState& state);

void zero_grads(std::span<Tensor> params);

}  // namespace hinet
