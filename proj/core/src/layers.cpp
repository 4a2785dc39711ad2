#include "hinet/layers.hpp"

#include <cmath>

namespace hinet {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor zeros_parameter(Shape shape) {
  const std::size_t n = numel_of(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor gaussian_parameter(Shape shape, double sd, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.normal(0.0, sd);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Linear Linear::create(std::size_t in, std::size_t out, Rng& rng) {
  return Linear{kaiming_uniform({out, in}, in, rng), zeros_parameter({out})};
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

MemoryBank MemoryBank::create(std::size_t bases, std::size_t channels, Rng& rng, double init_sd) {
  if (bases == 0 || channels == 0) throw ParameterError("memory bank needs at least one basis and one channel");
  return MemoryBank{gaussian_parameter({bases, channels}, init_sd, rng)};
}

void MemoryBank::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".basis", basis});
}

MemoryEncoding memory_encode(const MemoryBank& bank, const Tensor& x) {
  if (x.rank() < 1 || x.dim(0) != bank.channels())
    throw DimensionError("memory_encode: input " + to_string(x.shape()) + " has wrong channel count for bank " +
                         to_string(bank.basis.shape()));
  const std::size_t v = bank.channels(), cols = x.numel() / v;
  const Tensor columns = x.rank() == 2 ? x : reshape(x, {v, cols});
  Tensor attention = softmax(matmul(bank.basis, columns), 0);
  Tensor embedded = matmul(transpose(bank.basis), attention);
  if (x.rank() != 2) {
    Shape att_shape = x.shape();
    att_shape[0] = bank.bases();
    embedded = reshape(embedded, x.shape());
    attention = reshape(attention, att_shape);
  }
  return {embedded, attention};
}

CausalConv CausalConv::create(std::size_t in, std::size_t out, std::size_t kernel_size, std::size_t dilation,
                              Rng& rng) {
  if (kernel_size == 0) throw ParameterError("kernel size must be positive");
  if (dilation == 0) throw ParameterError("dilation must be positive");
  CausalConv conv;
  conv.direction = kaiming_uniform({out, in, kernel_size}, in * kernel_size, rng);
  // Gain starts at the direction norm so the effective kernel equals the initial draw.
  std::vector<double> gain(out);
  const std::size_t width = in * kernel_size;
  for (std::size_t o = 0; o < out; ++o) {
    double sq = 0.0;
    for (std::size_t i = 0; i < width; ++i) sq += std::pow(conv.direction[o * width + i], 2);
    gain[o] = std::sqrt(sq);
  }
  conv.gain = Tensor::parameter({out}, std::move(gain));
  conv.bias = zeros_parameter({out});
  conv.dilation = dilation;
  return conv;
}

void CausalConv::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".direction", direction});
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

TcnBlock TcnBlock::create(std::size_t in, std::size_t filters, std::size_t kernel_size, std::size_t dilation,
                          double dropout_rate, Rng& rng) {
  TcnBlock block;
  block.conv1 = CausalConv::create(in, filters, kernel_size, dilation, rng);
  block.conv2 = CausalConv::create(filters, filters, kernel_size, dilation, rng);
  block.has_projection = in != filters;
  if (block.has_projection) block.projection = Linear::create(in, filters, rng);
  block.dropout_rate = dropout_rate;
  return block;
}

void TcnBlock::collect(const std::string& prefix, ParameterList& out) const {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
  if (has_projection) projection.collect(prefix + ".projection", out);
}

Tensor tcn_block_forward(const TcnBlock& block, const Tensor& x, Mode mode, Rng* rng) {
  if (x.rank() < 2 || x.dim(0) != block.in_channels())
    throw DimensionError("tcn block expects " + std::to_string(block.in_channels()) + " input channels, got " +
                         to_string(x.shape()));
  const bool drop = mode == Mode::train && block.dropout_rate > 0.0;
  if (drop && rng == nullptr) throw ContractError("training-mode dropout needs a generator");
  Tensor h = relu(block.conv1.forward(x));
  if (drop) h = dropout(h, block.dropout_rate, *rng);
  h = relu(block.conv2.forward(h));
  if (drop) h = dropout(h, block.dropout_rate, *rng);
  return h + (block.has_projection ? block.projection.forward(x) : x);
}

TcnStack TcnStack::create(std::size_t in, std::size_t filters, std::size_t kernel_size,
                          const std::vector<std::size_t>& dilations, double dropout_rate, Rng& rng) {
  if (dilations.empty()) throw ParameterError("a TCN stack needs at least one block");
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    const std::size_t d = dilations[i];
    if (d == 0 || (d & (d - 1)) != 0) throw ParameterError("TCN dilations must be powers of two");
    if (i > 0 && d <= dilations[i - 1]) throw ParameterError("TCN dilations must be strictly increasing");
  }
  TcnStack stack;
  std::size_t channels = in;
  for (std::size_t d : dilations) {
    stack.blocks.push_back(TcnBlock::create(channels, filters, kernel_size, d, dropout_rate, rng));
    channels = filters;
  }
  return stack;
}

std::size_t TcnStack::receptive_field() const {
  std::size_t field = 1;
  for (const auto& b : blocks) field += 2 * (b.kernel_size() - 1) * b.dilation();
  return field;
}

Tensor TcnStack::forward(const Tensor& x, Mode mode, Rng* rng) const {
  Tensor h = x;
  for (const auto& b : blocks) h = tcn_block_forward(b, h, mode, rng);
  return h;
}

void TcnStack::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".block" + std::to_string(i), out);
}

TcnEncoding tcn_encode(const TcnStack& stack, const Tensor& x, Mode mode, Rng* rng) {
  if (x.rank() < 2 || x.shape().back() == 0) throw DimensionError("tcn_encode: empty window");
  Tensor hidden = stack.forward(x, mode, rng);
  Tensor last = last_step(hidden);
  return {hidden, last};
}

FcBlock FcBlock::create(std::size_t in, std::size_t hidden_width, std::size_t out, Rng& rng) {
  return FcBlock{Linear::create(in, hidden_width, rng), Linear::create(hidden_width, out, rng)};
}

void FcBlock::collect(const std::string& prefix, ParameterList& out) const {
  hidden.collect(prefix + ".hidden", out);
  output.collect(prefix + ".output", out);
}

}  // namespace hinet
