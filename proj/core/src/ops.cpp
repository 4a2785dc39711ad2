#include "hinet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace hinet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

using detail::Node;

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Returns the parent's gradient buffer, or nullptr when it takes no gradient.
double* grad_of(Node* n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

Tensor record(Tensor out, std::initializer_list<const Tensor*> inputs,
              std::function<void(std::span<const double>)> fn) {
  if (!needs_grad(inputs)) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const Tensor* t : inputs) node.parents.push_back(t->node());
  node.backward = std::move(fn);
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size())
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " + to_string(shape));
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// [C, N, T] or [C, T] view as (channels, sequences, steps).
struct SeqDims {
  std::size_t channels, batch, steps;
};

SeqDims seq_dims(const Tensor& x, const char* op) {
  if (x.rank() == 2) return {x.dim(0), 1, x.dim(1)};
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
  throw DimensionError(std::string(op) + ": expected [C, T] or [C, N, T], got " + to_string(x.shape()));
}

// Column matrix for the causal convolution: row (c, j) holds x[c] delayed by dilation * j.
void build_columns(const double* x, const SeqDims& d, std::size_t k, std::size_t dilation, double* col) {
  const std::size_t cols = d.batch * d.steps;
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t j = 0; j < k; ++j) {
      double* row = col + (c * k + j) * cols;
      const std::size_t shift = dilation * j;
      for (std::size_t n = 0; n < d.batch; ++n) {
        const double* src = x + c * cols + n * d.steps;
        double* dst = row + n * d.steps;
        const std::size_t zeros = std::min(shift, d.steps);
        std::fill(dst, dst + zeros, 0.0);
        for (std::size_t t = zeros; t < d.steps; ++t) dst[t] = src[t - shift];
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  MapMat(out.mutable_data().data(), m, n).noalias() =
      ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return record(out, {&a, &b}, [pa, pb, m, k, n](std::span<const double> g) {
    ConstMapMat dc(g.data(), m, n);
    if (double* ga = grad_of(pa))
      MapMat(ga, m, k).noalias() += dc * ConstMapMat(pb->value.data(), k, n).transpose();
    if (double* gb = grad_of(pb))
      MapMat(gb, k, n).noalias() += ConstMapMat(pa->value.data(), m, k).transpose() * dc;
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + to_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out(Shape{n, m});
  MapMat(out.mutable_data().data(), n, m) = ConstMapMat(a.data().data(), m, n).transpose();
  Node* pa = a.node().get();
  return record(out, {&a}, [pa, m, n](std::span<const double> g) {
    if (double* ga = grad_of(pa)) MapMat(ga, m, n) += ConstMapMat(g.data(), n, m).transpose();
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel())
    throw DimensionError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  Node* pa = a.node().get();
  return record(out, {&a}, [pa](std::span<const double> g) {
    if (double* ga = grad_of(pa))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return record(out, {&a, &b}, [pa, pb](std::span<const double> g) {
    if (double* ga = grad_of(pa))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = grad_of(pb))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return record(out, {&a, &b}, [pa, pb](std::span<const double> g) {
    if (double* ga = grad_of(pa))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = grad_of(pb))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return record(out, {&a, &b}, [pa, pb](std::span<const double> g) {
    if (double* ga = grad_of(pa))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb->value[i];
    if (double* gb = grad_of(pb))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa->value[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * a[i];
  Node* pa = a.node().get();
  return record(out, {&a}, [pa, factor](std::span<const double> g) {
    if (double* ga = grad_of(pa))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 1 || bias.rank() != 1 || bias.dim(0) != x.dim(0))
    throw DimensionError("add_channel_bias: " + to_string(x.shape()) + " + " + to_string(bias.shape()));
  const std::size_t c = x.dim(0), inner = x.numel() / c;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < inner; ++j) o[i * inner + j] = x[i * inner + j] + bias[i];
  Node* px = x.node().get();
  Node* pb = bias.node().get();
  return record(out, {&x, &bias}, [px, pb, c, inner](std::span<const double> g) {
    if (double* gx = grad_of(px))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    if (double* gb = grad_of(pb))
      for (std::size_t i = 0; i < c; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < inner; ++j) s += g[i * inner + j];
        gb[i] += s;
      }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(0) != weight.dim(1) || bias.rank() != 1 ||
      bias.dim(0) != weight.dim(0))
    throw DimensionError("linear: weight " + to_string(weight.shape()) + ", bias " + to_string(bias.shape()) +
                         ", input " + to_string(x.shape()));
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1), cols = x.numel() / in_dim;
  Shape shape = x.shape();
  shape[0] = out_dim;
  Tensor out(shape);
  MapMat o(out.mutable_data().data(), out_dim, cols);
  o.noalias() = ConstMapMat(weight.data().data(), out_dim, in_dim) * ConstMapMat(x.data().data(), in_dim, cols);
  o.colwise() += ConstMapVec(bias.data().data(), out_dim);
  Node* px = x.node().get();
  Node* pw = weight.node().get();
  Node* pb = bias.node().get();
  return record(out, {&x, &weight, &bias}, [px, pw, pb, out_dim, in_dim, cols](std::span<const double> g) {
    ConstMapMat dout(g.data(), out_dim, cols);
    if (double* gw = grad_of(pw))
      MapMat(gw, out_dim, in_dim).noalias() += dout * ConstMapMat(px->value.data(), in_dim, cols).transpose();
    if (double* gx = grad_of(px))
      MapMat(gx, in_dim, cols).noalias() += ConstMapMat(pw->value.data(), out_dim, in_dim).transpose() * dout;
    if (double* gb = grad_of(pb)) Eigen::Map<Eigen::VectorXd>(gb, out_dim) += dout.rowwise().sum();
  });
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
  Node* px = x.node().get();
  Node* po = out.node().get();
  return record(out, {&x}, [px, po](std::span<const double> g) {
    if (double* gx = grad_of(px))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (po->value[i] > 0.0) gx[i] += g[i];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis, "softmax");
  Tensor out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t a = 0; a < s.outer; ++a)
    for (std::size_t b = 0; b < s.inner; ++b) {
      const std::size_t base = a * s.n * s.inner + b;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, x[base + i * s.inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) {
        const double e = std::exp(x[base + i * s.inner] - mx);
        o[base + i * s.inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < s.n; ++i) o[base + i * s.inner] /= total;
    }
  Node* px = x.node().get();
  Node* po = out.node().get();
  return record(out, {&x}, [px, po, s](std::span<const double> g) {
    double* gx = grad_of(px);
    if (!gx) return;
    const auto& y = po->value;
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t b = 0; b < s.inner; ++b) {
        const std::size_t base = a * s.n * s.inner + b;
        double dot = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) dot += g[base + i * s.inner] * y[base + i * s.inner];
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t idx = base + i * s.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
  });
}

Tensor log_sum_exp(const Tensor& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis, "log_sum_exp");
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(shape);
  auto o = out.mutable_data();
  for (std::size_t a = 0; a < s.outer; ++a)
    for (std::size_t b = 0; b < s.inner; ++b) {
      const std::size_t base = a * s.n * s.inner + b;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, x[base + i * s.inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) total += std::exp(x[base + i * s.inner] - mx);
      o[a * s.inner + b] = mx + std::log(total);
    }
  Node* px = x.node().get();
  Node* po = out.node().get();
  return record(out, {&x}, [px, po, s](std::span<const double> g) {
    double* gx = grad_of(px);
    if (!gx) return;
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t b = 0; b < s.inner; ++b) {
        const std::size_t base = a * s.n * s.inner + b;
        const double lse = po->value[a * s.inner + b];
        const double up = g[a * s.inner + b];
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t idx = base + i * s.inner;
          gx[idx] += up * std::exp(px->value[idx] - lse);
        }
      }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Node* px = x.node().get();
  return record(Tensor::scalar(total), {&x}, [px](std::span<const double> g) {
    if (double* gx = grad_of(px))
      for (std::size_t i = 0; i < px->value.size(); ++i) gx[i] += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor conv1d_causal(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t dilation) {
  if (dilation == 0) throw ParameterError("conv1d_causal: dilation must be positive");
  const SeqDims d = seq_dims(x, "conv1d_causal");
  if (kernel.rank() != 3 || kernel.dim(1) != d.channels || kernel.dim(2) == 0)
    throw DimensionError("conv1d_causal: kernel " + to_string(kernel.shape()) + " for input " +
                         to_string(x.shape()));
  if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0))
    throw DimensionError("conv1d_causal: bias " + to_string(bias.shape()));
  const std::size_t c_out = kernel.dim(0), k = kernel.dim(2), rows = d.channels * k, cols = d.batch * d.steps;

  Shape shape = x.shape();
  shape[0] = c_out;
  Tensor out(shape);
  {
    RowMat col(rows, cols);
    build_columns(x.data().data(), d, k, dilation, col.data());
    MapMat o(out.mutable_data().data(), c_out, cols);
    o.noalias() = ConstMapMat(kernel.data().data(), c_out, rows) * col;
    o.colwise() += ConstMapVec(bias.data().data(), c_out);
  }
  Node* px = x.node().get();
  Node* pk = kernel.node().get();
  Node* pb = bias.node().get();
  return record(out, {&x, &kernel, &bias}, [px, pk, pb, d, k, dilation, c_out, rows, cols](std::span<const double> g) {
    ConstMapMat dout(g.data(), c_out, cols);
    if (double* gk = grad_of(pk)) {
      // Columns are rebuilt rather than kept alive between passes.
      RowMat col(rows, cols);
      build_columns(px->value.data(), d, k, dilation, col.data());
      MapMat(gk, c_out, rows).noalias() += dout * col.transpose();
    }
    if (double* gb = grad_of(pb)) Eigen::Map<Eigen::VectorXd>(gb, c_out) += dout.rowwise().sum();
    if (double* gx = grad_of(px)) {
      RowMat dcol(rows, cols);
      dcol.noalias() = ConstMapMat(pk->value.data(), c_out, rows).transpose() * dout;
      for (std::size_t c = 0; c < d.channels; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const double* row = dcol.data() + (c * k + j) * cols;
          const std::size_t shift = dilation * j;
          for (std::size_t n = 0; n < d.batch; ++n) {
            double* dst = gx + c * cols + n * d.steps;
            const double* src = row + n * d.steps;
            for (std::size_t t = shift; t < d.steps; ++t) dst[t - shift] += src[t];
          }
        }
    }
  });
}

Tensor weight_norm(const Tensor& direction, const Tensor& gain) {
  if (direction.rank() < 1 || gain.rank() != 1 || gain.dim(0) != direction.dim(0))
    throw DimensionError("weight_norm: direction " + to_string(direction.shape()) + ", gain " +
                         to_string(gain.shape()));
  const std::size_t rows = direction.dim(0), width = direction.numel() / rows;
  auto norms = std::make_shared<std::vector<double>>(rows);
  Tensor out(direction.shape());
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t i = 0; i < width; ++i) sq += direction[r * width + i] * direction[r * width + i];
    // A zero direction maps to a zero weight instead of 0/0.
    const double norm = std::max(std::sqrt(sq), 1e-12);
    (*norms)[r] = norm;
    for (std::size_t i = 0; i < width; ++i) o[r * width + i] = gain[r] * direction[r * width + i] / norm;
  }
  Node* pv = direction.node().get();
  Node* pg = gain.node().get();
  return record(out, {&direction, &gain}, [pv, pg, norms, rows, width](std::span<const double> g) {
    double* gv = grad_of(pv);
    double* gg = grad_of(pg);
    for (std::size_t r = 0; r < rows; ++r) {
      const double norm = (*norms)[r];
      const double* v = pv->value.data() + r * width;
      const double* dw = g.data() + r * width;
      double proj = 0.0;
      for (std::size_t i = 0; i < width; ++i) proj += dw[i] * v[i] / norm;
      if (gg) gg[r] += proj;
      if (gv) {
        const double a = pg->value[r] / norm;
        for (std::size_t i = 0; i < width; ++i) gv[r * width + i] += a * (dw[i] - proj * v[i] / norm);
      }
    }
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ParameterError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  Tensor out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    o[i] = x[i] * (*mask)[i];
  }
  Node* px = x.node().get();
  return record(out, {&x}, [px, mask](std::span<const double> g) {
    if (double* gx = grad_of(px))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

Tensor last_step(const Tensor& x) {
  const SeqDims d = seq_dims(x, "last_step");
  Shape shape = x.rank() == 2 ? Shape{d.channels} : Shape{d.channels, d.batch};
  Tensor out(shape);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < d.channels * d.batch; ++i) o[i] = x[i * d.steps + d.steps - 1];
  Node* px = x.node().get();
  return record(out, {&x}, [px, d](std::span<const double> g) {
    if (double* gx = grad_of(px))
      for (std::size_t i = 0; i < d.channels * d.batch; ++i) gx[i * d.steps + d.steps - 1] += g[i];
  });
}

Tensor repeat_steps(const Tensor& x, std::size_t steps) {
  if (x.rank() != 1 && x.rank() != 2) throw DimensionError("repeat_steps: expected [C] or [C, N], got " + to_string(x.shape()));
  if (steps == 0) throw ParameterError("repeat_steps: steps must be positive");
  Shape shape = x.shape();
  shape.push_back(steps);
  Tensor out(shape);
  auto o = out.mutable_data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) std::fill_n(o.data() + i * steps, steps, x[i]);
  Node* px = x.node().get();
  return record(out, {&x}, [px, n, steps](std::span<const double> g) {
    if (double* gx = grad_of(px))
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < steps; ++t) s += g[i * steps + t];
        gx[i] += s;
      }
  });
}

Tensor select_row(const Tensor& x, std::size_t row) {
  if (x.rank() < 1 || row >= x.dim(0))
    throw DimensionError("select_row: row " + std::to_string(row) + " of " + to_string(x.shape()));
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t width = x.numel() / x.dim(0);
  std::vector<double> v(x.data().begin() + static_cast<std::ptrdiff_t>(row * width),
                        x.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * width));
  Node* px = x.node().get();
  return record(Tensor(shape, std::move(v)), {&x}, [px, row, width](std::span<const double> g) {
    if (double* gx = grad_of(px))
      for (std::size_t i = 0; i < width; ++i) gx[row * width + i] += g[i];
  });
}

Tensor mse_loss(const Tensor& target, const Tensor& prediction) {
  require_same_shape(target, prediction, "mse_loss");
  if (target.numel() == 0) throw DimensionError("mse_loss of empty tensors");
  const double inv_n = 1.0 / static_cast<double>(target.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const double diff = prediction[i] - target[i];
    total += diff * diff;
  }
  Node* pt = target.node().get();
  Node* pp = prediction.node().get();
  return record(Tensor::scalar(total * inv_n), {&target, &prediction}, [pt, pp, inv_n](std::span<const double> g) {
    double* gp = grad_of(pp);
    double* gt = grad_of(pt);
    for (std::size_t i = 0; i < pp->value.size(); ++i) {
      const double d = 2.0 * inv_n * (pp->value[i] - pt->value[i]) * g[0];
      if (gp) gp[i] += d;
      if (gt) gt[i] -= d;
    }
  });
}

double binary_cross_entropy(double label, double probability) {
  const double p = std::clamp(probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -label * std::log(p) - (1.0 - label) * std::log(1.0 - p);
}

Tensor binary_cross_entropy(const Tensor& probabilities, std::span<const double> labels,
                            std::span<const double> weights) {
  const std::size_t n = probabilities.numel();
  if (labels.size() != n || weights.size() != n)
    throw DimensionError("binary_cross_entropy: " + std::to_string(n) + " probabilities, " +
                         std::to_string(labels.size()) + " labels, " + std::to_string(weights.size()) + " weights");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (weights[i] != 0.0) total += weights[i] * binary_cross_entropy(labels[i], probabilities[i]);
  std::vector<double> y(labels.begin(), labels.end()), w(weights.begin(), weights.end());
  Node* pp = probabilities.node().get();
  return record(Tensor::scalar(total), {&probabilities},
                [pp, y = std::move(y), w = std::move(w)](std::span<const double> g) {
                  double* gp = grad_of(pp);
                  if (!gp) return;
                  for (std::size_t i = 0; i < y.size(); ++i) {
                    if (w[i] == 0.0) continue;
                    const double p = pp->value[i];
                    if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) continue;
                    gp[i] += g[0] * w[i] * (-y[i] / p + (1.0 - y[i]) / (1.0 - p));
                  }
                });
}

}  // namespace hinet
