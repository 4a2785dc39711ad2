#pragma once

#include <string>
#include <vector>

#include "hinet/ops.hpp"
#include "hinet/rng.hpp"
#include "hinet/tensor.hpp"

namespace hinet {

enum class Mode { train, eval };

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

/// Uniform(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);
Tensor zeros_parameter(Shape shape);
Tensor gaussian_parameter(Shape shape, double sd, Rng& rng);

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  static Linear create(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  /// x is [in, ...]; applied independently to every trailing position.
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Global memory of M basis vectors over V channels.
struct MemoryBank {
  Tensor basis;  // [M, V]

  static MemoryBank create(std::size_t bases, std::size_t channels, Rng& rng, double init_sd = 0.1);
  std::size_t bases() const { return basis.dim(0); }
  std::size_t channels() const { return basis.dim(1); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct MemoryEncoding {
  Tensor output;     // same shape as the input window(s)
  Tensor attention;  // [M, ...] softmax weights per step
};

/// Per step: alpha = softmax(B x), a = sum_j alpha_j b_j.
MemoryEncoding memory_encode(const MemoryBank& bank, const Tensor& x);

/// Weight-normalised causal convolution.
struct CausalConv {
  Tensor direction;  // [C_out, C_in, K]
  Tensor gain;       // [C_out]
  Tensor bias;       // [C_out]
  std::size_t dilation = 1;

  static CausalConv create(std::size_t in, std::size_t out, std::size_t kernel_size, std::size_t dilation, Rng& rng);
  Tensor kernel() const { return weight_norm(direction, gain); }
  Tensor forward(const Tensor& x) const { return conv1d_causal(x, kernel(), bias, dilation); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Residual block: ReLU(conv2(ReLU(conv1(x)))) + proj(x), dropout after each ReLU.
struct TcnBlock {
  CausalConv conv1;
  CausalConv conv2;
  bool has_projection = false;
  Linear projection;  // 1x1 convolution, present iff in != filters
  double dropout_rate = 0.0;

  static TcnBlock create(std::size_t in, std::size_t filters, std::size_t kernel_size, std::size_t dilation,
                         double dropout_rate, Rng& rng);
  std::size_t in_channels() const { return conv1.direction.dim(1); }
  std::size_t filters() const { return conv1.direction.dim(0); }
  std::size_t kernel_size() const { return conv1.direction.dim(2); }
  std::size_t dilation() const { return conv1.dilation; }
  void collect(const std::string& prefix, ParameterList& out) const;
};

Tensor tcn_block_forward(const TcnBlock& block, const Tensor& x, Mode mode, Rng* rng = nullptr);

struct TcnStack {
  std::vector<TcnBlock> blocks;

  static TcnStack create(std::size_t in, std::size_t filters, std::size_t kernel_size,
                         const std::vector<std::size_t>& dilations, double dropout_rate, Rng& rng);
  std::size_t filters() const { return blocks.back().filters(); }
  /// 1 + sum over blocks of 2 (K - 1) d.
  std::size_t receptive_field() const;
  Tensor forward(const Tensor& x, Mode mode, Rng* rng = nullptr) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct TcnEncoding {
  Tensor hidden;  // [F, T] or [F, N, T]
  Tensor last;    // [F] or [F, N]
};

TcnEncoding tcn_encode(const TcnStack& stack, const Tensor& x, Mode mode, Rng* rng = nullptr);

/// One hidden ReLU layer followed by a linear output layer.
struct FcBlock {
  Linear hidden;
  Linear output;

  static FcBlock create(std::size_t in, std::size_t hidden_width, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const { return output.forward(relu(hidden.forward(x))); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace hinet
