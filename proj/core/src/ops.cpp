// SPDX-License-Identifier: Apache-2.0
#include "hkd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "hkd/errors.hpp"

namespace hkd::ops {

using detail::make_result;
using detail::Node;

namespace {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(x.shape()));
  }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

template <typename F>
Tensor unary(const Tensor& x, F&& f, detail::BackwardFn fn) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {&x}, std::move(fn));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& in = parent(self, p);
      if (!in.requires_grad) continue;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    Node& lhs = parent(self, 0);
    Node& rhs = parent(self, 1);
    if (lhs.requires_grad) {
      auto& g = lhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (rhs.requires_grad) {
      auto& g = rhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    Node& lhs = parent(self, 0);
    Node& rhs = parent(self, 1);
    if (lhs.requires_grad) {
      auto& g = lhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * rhs.value[i];
    }
    if (rhs.requires_grad) {
      auto& g = rhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * lhs.value[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / y[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    Node& num = parent(self, 0);
    Node& den = parent(self, 1);
    if (num.requires_grad) {
      auto& g = num.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / den.value[i];
    }
    if (den.requires_grad) {
      auto& g = den.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= self.grad[i] * self.value[i] / den.value[i];
      }
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; }, [factor](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(x, [value](double v) { return v + value; }, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (bias.size() != s.extent) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match axis " + std::to_string(axis) + " of " +
                         shape_string(x.shape()));
  }
  const auto in = x.data();
  const auto b = bias.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const std::size_t base = (o * s.extent + e) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) out[base + i] = in[base + i] + b[e];
    }
  }
  return make_result(x.shape(), std::move(out), {&x, &bias}, [s](Node& self) {
    Node& xin = parent(self, 0);
    Node& bin = parent(self, 1);
    if (xin.requires_grad) {
      auto& g = xin.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bin.requires_grad) {
      auto& g = bin.grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t base = (o * s.extent + e) * s.inner;
          double acc = 0.0;
          for (std::size_t i = 0; i < s.inner; ++i) acc += self.grad[base + i];
          g[e] += acc;
        }
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](Node& self) {
    Node& in = parent(self, 0);
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](Node& self) {
        constexpr double inv_sqrt_2pi = 0.39894228040143267794;
        Node& in = parent(self, 0);
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = in.value[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
          const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
          g[i] += self.grad[i] * (cdf + v * pdf);
        }
      });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
  });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw ContractError("log: argument must be positive");
  }
  return unary(x, [](double v) { return std::log(v); }, [](Node& self) {
    Node& in = parent(self, 0);
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / in.value[i];
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({1}, {acc}, {&x}, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({1}, {acc / n}, {&x}, [n](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    const double d = self.grad[0] / n;
    for (double& v : g) v += d;
  });
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = in.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  return make_result(reduced_shape(x.shape(), axis), std::move(out), {&x}, [s](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t e = 0; e < s.extent; ++e) {
        double* dst = g.data() + (o * s.extent + e) * s.inner;
        const double* src = self.grad.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const double n = static_cast<double>(x.dim(axis));
  return scale(sum_axis(x, axis), 1.0 / n);
}

Tensor l2_norm(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = in.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i] * src[i];
    }
  }
  for (double& v : out) v = std::sqrt(v);
  return make_result(reduced_shape(x.shape(), axis), std::move(out), {&x}, [s](Node& self) {
    Node& in_node = parent(self, 0);
    auto& g = in_node.grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t e = 0; e < s.extent; ++e) {
        const std::size_t base = (o * s.extent + e) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) {
          const double norm = self.value[o * s.inner + i];
          if (norm > 0.0) {
            g[base + i] += self.grad[o * s.inner + i] * in_node.value[base + i] / norm;
          }
        }
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = x[i * k + p];
      const double* brow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    Node& lhs = parent(self, 0);
    Node& rhs = parent(self, 1);
    const double* dy = self.grad.data();
    if (lhs.requires_grad) {
      // dA = dY * B^T
      auto& g = lhs.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = rhs.value.data() + p * n;
          const double* dyrow = dy + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += dyrow[j] * brow[j];
          g[i * k + p] += acc;
        }
      }
    }
    if (rhs.requires_grad) {
      // dB = A^T * dY
      auto& g = rhs.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = lhs.value[i * k + p];
          double* grow = g.data() + p * n;
          const double* dyrow = dy + i * n;
          for (std::size_t j = 0; j < n; ++j) grow[j] += av * dyrow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0);
  const std::size_t c = x.dim(1);
  const auto in = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  }
  return make_result({c, r}, std::move(out), {&x}, [r, c](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {&x}, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  if (begin >= end || end > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  const auto in = x.data();
  std::vector<double> out(rows * w);
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(in.data() + i * cols + begin, w, out.data() + i * w);
  }
  return make_result({rows, w}, std::move(out), {&x}, [rows, cols, begin, w](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < w; ++j) g[i * cols + begin + j] += self.grad[i * w + j];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto in = parts[k].data();
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(in.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    }
    offset += widths[k];
  }
  return make_result({rows, total}, std::move(out), parts,
                     [rows, total, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         Node& in = parent(self, k);
                         if (in.requires_grad) {
                           auto& g = in.grad_buffer();
                           for (std::size_t i = 0; i < rows; ++i) {
                             for (std::size_t j = 0; j < widths[k]; ++j) {
                               g[i * widths[k] + j] += self.grad[i * total + off + j];
                             }
                           }
                         }
                         off += widths[k];
                       }
                     });
}

namespace {

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, k, stride, pad, oh, ow;
};

// Valid output range [lo, hi) along one axis for kernel tap `tap`.
inline void tap_range(std::size_t tap, const ConvGeometry& g, std::size_t in_extent,
                      std::size_t out_extent, std::size_t& lo, std::size_t& hi) {
  // input index = o * stride + tap - pad must lie in [0, in_extent)
  lo = 0;
  if (tap < g.pad) lo = (g.pad - tap + g.stride - 1) / g.stride;
  const std::ptrdiff_t last =
      static_cast<std::ptrdiff_t>(in_extent) - 1 + static_cast<std::ptrdiff_t>(g.pad) -
      static_cast<std::ptrdiff_t>(tap);
  hi = last < 0 ? 0 : std::min(out_extent, static_cast<std::size_t>(last) / g.stride + 1);
  if (hi < lo) hi = lo;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(x, 3, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.c_in = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.c_out = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.c_in || weight.dim(3) != g.k) {
    throw DimensionError("conv2d: kernel " + shape_string(weight.shape()) +
                         " incompatible with input " + shape_string(x.shape()));
  }
  if (bias.defined() && bias.size() != g.c_out) {
    throw DimensionError("conv2d: bias " + shape_string(bias.shape()) + " for " +
                         std::to_string(g.c_out) + " output channels");
  }
  const std::size_t span_h = g.h + 2 * padding;
  const std::size_t span_w = g.w + 2 * padding;
  if (span_h < g.k || span_w < g.k || (span_h - g.k) % stride != 0 ||
      (span_w - g.k) % stride != 0) {
    throw DimensionError("conv2d: non-integral output size for input " +
                         shape_string(x.shape()) + ", kernel " + std::to_string(g.k) +
                         ", stride " + std::to_string(stride) + ", padding " +
                         std::to_string(padding));
  }
  g.oh = (span_h - g.k) / stride + 1;
  g.ow = (span_w - g.k) / stride + 1;

  const auto in = x.data();
  const auto wt = weight.data();
  const std::size_t plane = g.oh * g.ow;
  std::vector<double> out(g.c_out * plane, 0.0);
  if (bias.defined()) {
    const auto b = bias.data();
    for (std::size_t o = 0; o < g.c_out; ++o) {
      std::fill_n(out.data() + o * plane, plane, b[o]);
    }
  }
  for (std::size_t o = 0; o < g.c_out; ++o) {
    double* dst = out.data() + o * plane;
    for (std::size_t c = 0; c < g.c_in; ++c) {
      const double* src = in.data() + c * g.h * g.w;
      for (std::size_t ki = 0; ki < g.k; ++ki) {
        std::size_t r0, r1;
        tap_range(ki, g, g.h, g.oh, r0, r1);
        for (std::size_t kj = 0; kj < g.k; ++kj) {
          std::size_t c0, c1;
          tap_range(kj, g, g.w, g.ow, c0, c1);
          const double wv = wt[((o * g.c_in + c) * g.k + ki) * g.k + kj];
          for (std::size_t r = r0; r < r1; ++r) {
            const double* srow = src + (r * stride + ki - padding) * g.w;
            double* drow = dst + r * g.ow;
            for (std::size_t col = c0; col < c1; ++col) {
              drow[col] += wv * srow[col * stride + kj - padding];
            }
          }
        }
      }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result({g.c_out, g.oh, g.ow}, std::move(out), inputs, [g, has_bias](Node& self) {
    Node& xin = parent(self, 0);
    Node& win = parent(self, 1);
    const std::size_t plane = g.oh * g.ow;
    const double* dy = self.grad.data();
    double* dx = xin.requires_grad ? xin.grad_buffer().data() : nullptr;
    double* dw = win.requires_grad ? win.grad_buffer().data() : nullptr;
    for (std::size_t o = 0; o < g.c_out; ++o) {
      const double* gy = dy + o * plane;
      for (std::size_t c = 0; c < g.c_in; ++c) {
        const double* src = xin.value.data() + c * g.h * g.w;
        double* gsrc = dx ? dx + c * g.h * g.w : nullptr;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
          std::size_t r0, r1;
          tap_range(ki, g, g.h, g.oh, r0, r1);
          for (std::size_t kj = 0; kj < g.k; ++kj) {
            std::size_t c0, c1;
            tap_range(kj, g, g.w, g.ow, c0, c1);
            const std::size_t widx = ((o * g.c_in + c) * g.k + ki) * g.k + kj;
            const double wv = win.value[widx];
            double wacc = 0.0;
            for (std::size_t r = r0; r < r1; ++r) {
              const std::size_t row_off = (r * g.stride + ki - g.pad) * g.w;
              const double* gyrow = gy + r * g.ow;
              for (std::size_t col = c0; col < c1; ++col) {
                const std::size_t idx = row_off + col * g.stride + kj - g.pad;
                wacc += gyrow[col] * src[idx];
                if (gsrc) gsrc[idx] += gyrow[col] * wv;
              }
            }
            if (dw) dw[widx] += wacc;
          }
        }
      }
    }
    if (has_bias) {
      Node& bin = parent(self, 2);
      if (bin.requires_grad) {
        auto& gb = bin.grad_buffer();
        for (std::size_t o = 0; o < g.c_out; ++o) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += dy[o * plane + i];
          gb[o] += acc;
        }
      }
    }
  });
}

Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  require_rank(x, 3, "avg_pool2d");
  if (kernel < 1 || stride < 1) throw DimensionError("avg_pool2d: kernel and stride must be >= 1");
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  if (h < kernel || w < kernel || (h - kernel) % stride != 0 || (w - kernel) % stride != 0) {
    throw DimensionError("avg_pool2d: " + shape_string(x.shape()) + " not divisible by kernel " +
                         std::to_string(kernel) + " / stride " + std::to_string(stride));
  }
  const std::size_t oh = (h - kernel) / stride + 1;
  const std::size_t ow = (w - kernel) / stride + 1;
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
  const auto in = x.data();
  std::vector<double> out(c * oh * ow, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t q = 0; q < ow; ++q) {
        double acc = 0.0;
        for (std::size_t i = 0; i < kernel; ++i) {
          for (std::size_t j = 0; j < kernel; ++j) {
            acc += in[(ch * h + r * stride + i) * w + q * stride + j];
          }
        }
        out[(ch * oh + r) * ow + q] = acc * inv;
      }
    }
  }
  return make_result({c, oh, ow}, std::move(out), {&x},
                     [c, h, w, oh, ow, kernel, stride, inv](Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         for (std::size_t r = 0; r < oh; ++r) {
                           for (std::size_t q = 0; q < ow; ++q) {
                             const double d = self.grad[(ch * oh + r) * ow + q] * inv;
                             for (std::size_t i = 0; i < kernel; ++i) {
                               for (std::size_t j = 0; j < kernel; ++j) {
                                 g[(ch * h + r * stride + i) * w + q * stride + j] += d;
                               }
                             }
                           }
                         }
                       }
                     });
}

namespace {

struct LerpTap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "upsample_bilinear");
  if (out_h == 0 || out_w == 0) throw DimensionError("upsample_bilinear: empty target size");
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  auto rows = lerp_taps(h, out_h);
  auto cols = lerp_taps(w, out_w);
  const auto in = x.data();
  std::vector<double> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = in.data() + ch * h * w;
    for (std::size_t r = 0; r < out_h; ++r) {
      const LerpTap& tr = rows[r];
      for (std::size_t q = 0; q < out_w; ++q) {
        const LerpTap& tc = cols[q];
        out[(ch * out_h + r) * out_w + q] =
            tr.w0 * (tc.w0 * src[tr.i0 * w + tc.i0] + tc.w1 * src[tr.i0 * w + tc.i1]) +
            tr.w1 * (tc.w0 * src[tr.i1 * w + tc.i0] + tc.w1 * src[tr.i1 * w + tc.i1]);
      }
    }
  }
  return make_result({c, out_h, out_w}, std::move(out), {&x},
                     [c, h, w, out_h, out_w, rows = std::move(rows),
                      cols = std::move(cols)](Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         double* dst = g.data() + ch * h * w;
                         for (std::size_t r = 0; r < out_h; ++r) {
                           const LerpTap& tr = rows[r];
                           for (std::size_t q = 0; q < out_w; ++q) {
                             const LerpTap& tc = cols[q];
                             const double d = self.grad[(ch * out_h + r) * out_w + q];
                             dst[tr.i0 * w + tc.i0] += d * tr.w0 * tc.w0;
                             dst[tr.i0 * w + tc.i1] += d * tr.w0 * tc.w1;
                             dst[tr.i1 * w + tc.i0] += d * tr.w1 * tc.w0;
                             dst[tr.i1 * w + tc.i1] += d * tr.w1 * tc.w1;
                           }
                         }
                       }
                     });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = in[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, in[base + e * s.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double v = std::exp(in[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        z += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= z;
    }
  }
  return make_result(x.shape(), std::move(out), {&x}, [s](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        double dot = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          dot += self.grad[base + e * s.inner] * self.value[base + e * s.inner];
        }
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t idx = base + e * s.inner;
          g[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = in[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, in[base + e * s.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) z += std::exp(in[base + e * s.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t e = 0; e < s.extent; ++e) {
        out[base + e * s.inner] = in[base + e * s.inner] - lse;
      }
    }
  }
  return make_result(x.shape(), std::move(out), {&x}, [s](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        double total = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) total += self.grad[base + e * s.inner];
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t idx = base + e * s.inner;
          g[idx] += self.grad[idx] - std::exp(self.value[idx]) * total;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  if (gain.size() != d || shift.size() != d) {
    throw DimensionError("layer_norm: gain/shift " + shape_string(gain.shape()) + "/" +
                         shape_string(shift.shape()) + " for rows of width " +
                         std::to_string(d));
  }
  const auto in = x.data();
  const auto ga = gain.data();
  const auto sh = shift.data();
  std::vector<double> normalized(n * d);
  std::vector<double> inv_std(n);
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * is;
      normalized[r * d + j] = xh;
      out[r * d + j] = xh * ga[j] + sh[j];
    }
  }
  return make_result(
      {n, d}, std::move(out), {&x, &gain, &shift},
      [n, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
        Node& xin = parent(self, 0);
        Node& gin = parent(self, 1);
        Node& sin = parent(self, 2);
        const double* dy = self.grad.data();
        if (gin.requires_grad) {
          auto& g = gin.grad_buffer();
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[r * d + j] * normalized[r * d + j];
          }
        }
        if (sin.requires_grad) {
          auto& g = sin.grad_buffer();
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[r * d + j];
          }
        }
        if (xin.requires_grad) {
          auto& g = xin.grad_buffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < n; ++r) {
            double mean_dxh = 0.0;
            double mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[r * d + j] * gin.value[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * normalized[r * d + j];
            }
            mean_dxh *= inv_d;
            mean_dxh_xh *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[r * d + j] * gin.value[j];
              g[r * d + j] +=
                  inv_std[r] * (dxh - mean_dxh - normalized[r * d + j] * mean_dxh_xh);
            }
          }
        }
      });
}

Tensor gather_channel(const Tensor& x, std::span<const std::uint8_t> labels,
                      std::uint8_t ignore) {
  require_rank(x, 3, "gather_channel");
  const std::size_t k = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  if (labels.size() != plane) {
    throw DimensionError("gather_channel: " + std::to_string(labels.size()) +
                         " labels for map " + shape_string(x.shape()));
  }
  std::vector<std::uint8_t> picked(labels.begin(), labels.end());
  const auto in = x.data();
  std::vector<double> out(plane, 0.0);
  for (std::size_t i = 0; i < plane; ++i) {
    if (picked[i] == ignore) continue;
    if (picked[i] >= k) {
      throw DataError("label " + std::to_string(picked[i]) + " outside [0, " +
                      std::to_string(k) + ")");
    }
    out[i] = in[picked[i] * plane + i];
  }
  return make_result({x.dim(1), x.dim(2)}, std::move(out), {&x},
                     [plane, ignore, picked = std::move(picked)](Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < plane; ++i) {
                         if (picked[i] == ignore) continue;
                         g[picked[i] * plane + i] += self.grad[i];
                       }
                     });
}

Tensor detach(const Tensor& x) {
  auto node = std::make_shared<Node>();
  node->shape = x.shape();
  node->value.assign(x.data().begin(), x.data().end());
  node->op_output = true;
  return Tensor(std::move(node));
}

Tensor map_to_tokens(const Tensor& map) {
  require_rank(map, 3, "map_to_tokens");
  return transpose(reshape(map, {map.dim(0), map.dim(1) * map.dim(2)}));
}

Tensor tokens_to_map(const Tensor& tokens, std::size_t height, std::size_t width) {
  require_rank(tokens, 2, "tokens_to_map");
  if (tokens.dim(0) != height * width) {
    throw DimensionError("tokens_to_map: " + shape_string(tokens.shape()) +
                         " cannot form a " + std::to_string(height) + "x" +
                         std::to_string(width) + " map");
  }
  return reshape(transpose(tokens), {tokens.dim(1), height, width});
}

}  // namespace hkd::ops
