#pragma once

#include <span>

#include "hinet/rng.hpp"
#include "hinet/tensor.hpp"

namespace hinet {

// Differentiable operations. Sequence activations use a channel-major
// layout: [C, T] for one sequence or [C, N, T] for a batch of N sequences,
// so per-step linear maps and convolutions reduce to a single GEMM.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// x[c, ...] + bias[c].
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

/// weight[out x in] applied along the leading axis of x[in, ...] plus bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// relu'(0) is taken as 0.
Tensor relu(const Tensor& x);
/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Stable log(sum(exp(x))) along `axis`; the axis is removed from the shape.
Tensor log_sum_exp(const Tensor& x, std::size_t axis);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Causal dilated 1-D convolution.
///
/// out[o, t] = bias[o] + sum_{c, j} kernel[o, c, j] * x[c, t - dilation * j],
/// with x taken as zero before the start of each sequence. Accepts x as
/// [C_in, T] or [C_in, N, T]; kernel is [C_out, C_in, K].
Tensor conv1d_causal(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t dilation);

/// w[o, ...] = g[o] * v[o, ...] / ||v[o, ...]||.
Tensor weight_norm(const Tensor& direction, const Tensor& gain);

/// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

/// Last time step of [C, T] -> [C] or [C, N, T] -> [C, N].
Tensor last_step(const Tensor& x);
/// Copies [C] -> [C, steps] or [C, N] -> [C, N, steps].
Tensor repeat_steps(const Tensor& x, std::size_t steps);
/// x[row, ...] -> [...].
Tensor select_row(const Tensor& x, std::size_t row);

/// Mean of squared differences over all elements.
Tensor mse_loss(const Tensor& target, const Tensor& prediction);

inline constexpr double kProbabilityClamp = 1e-7;

/// H(y, p) = -y log p - (1 - y) log(1 - p) with p clamped to [1e-7, 1 - 1e-7].
double binary_cross_entropy(double label, double probability);

/// sum_i weight_i * H(label_i, prob_i). Entries with weight 0 contribute
/// exactly 0 to the value and to the gradient.
Tensor binary_cross_entropy(const Tensor& probabilities, std::span<const double> labels,
                            std::span<const double> weights);

}  // namespace hinet
