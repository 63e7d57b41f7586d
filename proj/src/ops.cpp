#include "sts/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sts/errors.hpp"

namespace sts::ops {

namespace {

using detail::Node;

// Gradient sink for input i, or nullptr if that input does not need one.
std::vector<double>* sink(Node& node, std::size_t i) {
  auto& in = *node.inputs[i];
  return in.requires_grad ? &in.ensure_grad() : nullptr;
}

std::string shapes(const Tensor& a, const Tensor& b) {
  return to_string(a.shape()) + " and " + to_string(b.shape());
}

bool is_bias(const Tensor& a, const Tensor& b) {
  return b.rank() == 1 && a.rank() >= 1 && b.extent(0) == a.shape().back() && a.shape() != b.shape();
}

template <typename F, typename G>
Tensor unary(const Tensor& a, const char* op, F forward, G derivative) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = forward(x[i]);
  return make_result(a.shape(), std::move(out), op, {a}, [derivative](Node& n) {
    auto* ga = sink(n, 0);
    if (!ga) return;
    const auto& x = n.inputs[0]->data;
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += n.grad[i] * derivative(x[i], n.data[i]);
  });
}

void check_axis(const Tensor& a, std::size_t axis, const char* op) {
  if (axis >= a.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         to_string(a.shape()));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    const auto x = a.data(), y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& n) {
      for (std::size_t k = 0; k < 2; ++k) {
        if (auto* g = sink(n, k)) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
        }
      }
    });
  }
  if (!is_bias(a, b)) throw DimensionError("add: incompatible shapes " + shapes(a, b));
  const auto x = a.data(), y = b.data();
  const std::size_t w = y.size();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i % w];
  return make_result(a.shape(), std::move(out), "add_bias", {a, b}, [w](Node& n) {
    if (auto* g = sink(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    }
    if (auto* g = sink(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i % w] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    const auto x = a.data(), y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    return make_result(a.shape(), std::move(out), "sub", {a, b}, [](Node& n) {
      if (auto* g = sink(n, 0)) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
      }
      if (auto* g = sink(n, 1)) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] -= n.grad[i];
      }
    });
  }
  if (!is_bias(a, b)) throw DimensionError("sub: incompatible shapes " + shapes(a, b));
  return add(a, scale(b, -1.0));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("mul: incompatible shapes " + shapes(a, b));
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& n) {
    const auto& x = n.inputs[0]->data;
    const auto& y = n.inputs[1]->data;
    if (auto* g = sink(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * y[i];
    }
    if (auto* g = sink(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, "leaky_relu", [slope](double x) { return x >= 0 ? x : slope * x; },
      [slope](double x, double) { return x >= 0 ? 1.0 : slope; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ArgumentError("clamp: lo > hi");
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor mask(const Tensor& a, std::span<const std::uint8_t> keep) {
  if (keep.size() != a.numel()) {
    throw DimensionError("mask: " + std::to_string(keep.size()) + " flags for " + to_string(a.shape()));
  }
  const auto x = a.data();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (keep[i]) out[i] = x[i];
  std::vector<std::uint8_t> flags(keep.begin(), keep.end());
  return make_result(a.shape(), std::move(out), "mask", {a}, [flags = std::move(flags)](Node& n) {
    auto* g = sink(n, 0);
    if (!g) return;
    for (std::size_t i = 0; i < flags.size(); ++i)
      if (flags[i]) (*g)[i] += n.grad[i];
  });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "sum");
  const AxisView v = axis_view(a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto x = a.data();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t e = 0; e < v.extent; ++e)
      for (std::size_t i = 0; i < v.inner; ++i) out[o * v.inner + i] += x[(o * v.extent + e) * v.inner + i];
  return make_result(std::move(shape), std::move(out), "sum", {a}, [v](Node& n) {
    auto* g = sink(n, 0);
    if (!g) return;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t e = 0; e < v.extent; ++e)
        for (std::size_t i = 0; i < v.inner; ++i) (*g)[(o * v.extent + e) * v.inner + i] += n.grad[o * v.inner + i];
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "mean");
  return scale(sum(a, axis), 1.0 / static_cast<double>(a.extent(axis)));
}

Tensor sum_all(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({}, {total}, "sum_all", {a}, [](Node& n) {
    if (auto* g = sink(n, 0)) {
      for (double& v : *g) v += n.grad[0];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul: incompatible shapes " + shapes(a, b));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  const auto x = a.data(), y = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += xv * y[p * n + j];
    }
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& nd) {
    const auto& x = nd.inputs[0]->data;
    const auto& y = nd.inputs[1]->data;
    const auto& g = nd.grad;
    if (auto* ga = sink(nd, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * y[p * n + j];
          (*ga)[i * k + p] += acc;
        }
    }
    if (auto* gb = sink(nd, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += xv * g[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + to_string(a.shape()));
  return permute(a, {1, 0});
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0) || a.extent(2) != b.extent(1)) {
    throw DimensionError("bmm: incompatible shapes " + shapes(a, b));
  }
  const std::size_t B = a.extent(0), m = a.extent(1), k = a.extent(2), n = b.extent(2);
  const auto x = a.data(), y = b.data();
  std::vector<double> out(B * m * n, 0.0);
  for (std::size_t s = 0; s < B; ++s) {
    const double* xs = x.data() + s * m * k;
    const double* ys = y.data() + s * k * n;
    double* os = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double xv = xs[i * k + p];
        for (std::size_t j = 0; j < n; ++j) os[i * n + j] += xv * ys[p * n + j];
      }
  }
  return make_result({B, m, n}, std::move(out), "bmm", {a, b}, [B, m, k, n](Node& nd) {
    const auto& x = nd.inputs[0]->data;
    const auto& y = nd.inputs[1]->data;
    auto* ga = sink(nd, 0);
    auto* gb = sink(nd, 1);
    for (std::size_t s = 0; s < B; ++s) {
      const double* gs = nd.grad.data() + s * m * n;
      const double* xs = x.data() + s * m * k;
      const double* ys = y.data() + s * k * n;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          if (ga) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += gs[i * n + j] * ys[p * n + j];
            (*ga)[s * m * k + i * k + p] += acc;
          }
          if (gb) {
            const double xv = xs[i * k + p];
            double* gbs = gb->data() + s * k * n + p * n;
            for (std::size_t j = 0; j < n; ++j) gbs[j] += xv * gs[i * n + j];
          }
        }
    }
  });
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0) || a.extent(2) != b.extent(2)) {
    throw DimensionError("bmm_nt: incompatible shapes " + shapes(a, b));
  }
  const std::size_t B = a.extent(0), m = a.extent(1), k = a.extent(2), n = b.extent(1);
  const auto x = a.data(), y = b.data();
  std::vector<double> out(B * m * n, 0.0);
  for (std::size_t s = 0; s < B; ++s) {
    const double* xs = x.data() + s * m * k;
    const double* ys = y.data() + s * n * k;
    double* os = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += xs[i * k + p] * ys[j * k + p];
        os[i * n + j] = acc;
      }
  }
  return make_result({B, m, n}, std::move(out), "bmm_nt", {a, b}, [B, m, k, n](Node& nd) {
    const auto& x = nd.inputs[0]->data;
    const auto& y = nd.inputs[1]->data;
    auto* ga = sink(nd, 0);
    auto* gb = sink(nd, 1);
    for (std::size_t s = 0; s < B; ++s) {
      const double* gs = nd.grad.data() + s * m * n;
      const double* xs = x.data() + s * m * k;
      const double* ys = y.data() + s * n * k;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = gs[i * n + j];
          if (gv == 0.0) continue;
          if (ga) {
            double* gas = ga->data() + s * m * k + i * k;
            for (std::size_t p = 0; p < k; ++p) gas[p] += gv * ys[j * k + p];
          }
          if (gb) {
            double* gbs = gb->data() + s * n * k + j * k;
            for (std::size_t p = 0; p < k; ++p) gbs[p] += gv * xs[i * k + p];
          }
        }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || x.rank() < 1 || x.shape().back() != w.extent(1)) {
    throw DimensionError("linear: incompatible shapes " + shapes(x, w));
  }
  const std::size_t k = w.extent(1), m = w.extent(0), rows = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = m;
  const auto xs = x.data(), ws = w.data();
  std::vector<double> out(rows * m);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ws[j * k + p] * xs[r * k + p];
      out[r * m + j] = acc;
    }
  return make_result(std::move(out_shape), std::move(out), "linear", {x, w}, [rows, k, m](Node& nd) {
    const auto& xs = nd.inputs[0]->data;
    const auto& ws = nd.inputs[1]->data;
    auto* gx = sink(nd, 0);
    auto* gw = sink(nd, 1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < m; ++j) {
        const double g = nd.grad[r * m + j];
        if (g == 0.0) continue;
        if (gx) {
          double* gxr = gx->data() + r * k;
          for (std::size_t p = 0; p < k; ++p) gxr[p] += g * ws[j * k + p];
        }
        if (gw) {
          double* gwj = gw->data() + j * k;
          for (std::size_t p = 0; p < k; ++p) gwj[p] += g * xs[r * k + p];
        }
      }
  });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "softmax");
  const AxisView v = axis_view(a.shape(), axis);
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < v.extent; ++e) hi = std::max(hi, x[base + e * v.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) {
        const double ev = std::exp(x[base + e * v.inner] - hi);
        out[base + e * v.inner] = ev;
        total += ev;
      }
      for (std::size_t e = 0; e < v.extent; ++e) out[base + e * v.inner] /= total;
    }
  return make_result(a.shape(), std::move(out), "softmax", {a}, [v](Node& n) {
    auto* g = sink(n, 0);
    if (!g) return;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.extent * v.inner + i;
        double dot = 0.0;
        for (std::size_t e = 0; e < v.extent; ++e) dot += n.grad[base + e * v.inner] * n.data[base + e * v.inner];
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t idx = base + e * v.inner;
          (*g)[idx] += n.data[idx] * (n.grad[idx] - dot);
        }
      }
  });
}

Tensor masked_softmax(const Tensor& a, std::span<const std::uint8_t> mask) {
  if (a.rank() < 1 || mask.size() != a.numel()) {
    throw DimensionError("masked_softmax: mask of length " + std::to_string(mask.size()) +
                         " does not cover " + to_string(a.shape()));
  }
  const std::size_t width = a.shape().back(), rows = a.numel() / width;
  const auto x = a.data();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * width;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j)
      if (mask[base + j]) hi = std::max(hi, x[base + j]);
    if (!std::isfinite(hi)) continue;  // empty support stays all-zero
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      if (!mask[base + j]) continue;
      out[base + j] = std::exp(x[base + j] - hi);
      total += out[base + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[base + j] /= total;
  }
  return make_result(a.shape(), std::move(out), "masked_softmax", {a}, [width, rows](Node& n) {
    auto* g = sink(n, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * width;
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += n.grad[base + j] * n.data[base + j];
      for (std::size_t j = 0; j < width; ++j) (*g)[base + j] += n.data[base + j] * (n.grad[base + j] - dot);
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no tensors");
  const Shape& ref = parts.front().shape();
  check_axis(parts.front(), axis, "concat");
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == ref.size();
    for (std::size_t d = 0; ok && d < ref.size(); ++d)
      if (d != axis && p.shape()[d] != ref[d]) ok = false;
    if (!ok) throw DimensionError("concat: incompatible shapes " + shapes(parts.front(), p));
    widths.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  Shape shape = ref;
  shape[axis] = total;
  const AxisView v = axis_view(shape, axis);
  std::vector<double> out(numel(shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto x = parts[k].data();
    const std::size_t w = widths[k];
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy_n(x.data() + o * w * v.inner, w * v.inner, out.data() + (o * total + offset) * v.inner);
    offset += w;
  }
  return make_result(std::move(shape), std::move(out), "concat", parts, [v, widths, total](Node& n) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::size_t w = widths[k];
      if (auto* g = sink(n, k)) {
        for (std::size_t o = 0; o < v.outer; ++o) {
          const double* src = n.grad.data() + (o * total + offset) * v.inner;
          double* dst = g->data() + o * w * v.inner;
          for (std::size_t i = 0; i < w * v.inner; ++i) dst[i] += src[i];
        }
      }
      offset += w;
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis(a, axis, "slice");
  if (length == 0 || start + length > a.extent(axis)) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis " + std::to_string(axis) + " of " + to_string(a.shape()));
  }
  const AxisView v = axis_view(a.shape(), axis);
  Shape shape = a.shape();
  shape[axis] = length;
  const auto x = a.data();
  std::vector<double> out(numel(shape));
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy_n(x.data() + (o * v.extent + start) * v.inner, length * v.inner, out.data() + o * length * v.inner);
  return make_result(std::move(shape), std::move(out), "slice", {a}, [v, start, length](Node& n) {
    auto* g = sink(n, 0);
    if (!g) return;
    for (std::size_t o = 0; o < v.outer; ++o) {
      const double* src = n.grad.data() + o * length * v.inner;
      double* dst = g->data() + (o * v.extent + start) * v.inner;
      for (std::size_t i = 0; i < length * v.inner; ++i) dst[i] += src[i];
    }
  });
}

std::vector<Tensor> split(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& sizes) {
  std::vector<Tensor> parts;
  std::size_t start = 0;
  for (std::size_t s : sizes) {
    parts.push_back(slice(a, axis, start, s));
    start += s;
  }
  if (start != a.extent(axis)) {
    throw DimensionError("split: sizes cover " + std::to_string(start) + " of axis extent " +
                         std::to_string(a.extent(axis)));
  }
  return parts;
}

Tensor stack(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("stack: no tensors");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    if (axis > p.rank()) throw DimensionError("stack: axis out of range for " + to_string(p.shape()));
    Shape s = p.shape();
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, axis);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + to_string(a.shape()) + " cannot become " + to_string(shape));
  }
  return make_result(std::move(shape), a.to_vector(), "reshape", {a}, [](Node& n) {
    if (auto* g = sink(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    }
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  if (axes.size() != r) throw DimensionError("permute: axis list does not match " + to_string(a.shape()));
  std::vector<bool> used(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r || used[ax]) throw ArgumentError("permute: invalid axis permutation");
    used[ax] = true;
  }
  const Shape& in = a.shape();
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t d = r; d-- > 1;) in_strides[d - 1] = in_strides[d] * in[d];
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = in[axes[d]];
    src_strides[d] = in_strides[axes[d]];
  }
  // map[i] = source offset of output element i
  const std::size_t n = a.numel();
  auto map = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*map)[i] = src;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      src += src_strides[d];
      if (idx[d] < out_shape[d]) break;
      src -= src_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  const auto x = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[(*map)[i]];
  return make_result(std::move(out_shape), std::move(out), "permute", {a}, [map](Node& nd) {
    auto* g = sink(nd, 0);
    if (!g) return;
    for (std::size_t i = 0; i < map->size(); ++i) (*g)[(*map)[i]] += nd.grad[i];
  });
}

Tensor index_select(const Tensor& a, std::span<const std::size_t> indices) {
  if (a.rank() < 1 || indices.empty()) throw DimensionError("index_select: needs rank >= 1 and indices");
  const std::size_t rows = a.extent(0), width = a.numel() / rows;
  for (std::size_t i : indices)
    if (i >= rows) throw ArgumentError("index_select: index " + std::to_string(i) + " out of range");
  Shape shape = a.shape();
  shape[0] = indices.size();
  const auto x = a.data();
  std::vector<double> out(indices.size() * width);
  for (std::size_t p = 0; p < indices.size(); ++p)
    std::copy_n(x.data() + indices[p] * width, width, out.data() + p * width);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(shape), std::move(out), "index_select", {a}, [idx, width](Node& n) {
    auto* g = sink(n, 0);
    if (!g) return;
    for (std::size_t p = 0; p < idx.size(); ++p) {
      const double* src = n.grad.data() + p * width;
      double* dst = g->data() + idx[p] * width;
      for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
    }
  });
}

Tensor index_add(const Tensor& a, std::span<const std::size_t> indices, std::size_t rows) {
  if (a.rank() < 1 || indices.size() != a.extent(0)) {
    throw DimensionError("index_add: " + std::to_string(indices.size()) + " indices for " + to_string(a.shape()));
  }
  for (std::size_t i : indices)
    if (i >= rows) throw ArgumentError("index_add: index " + std::to_string(i) + " out of range");
  const std::size_t width = a.numel() / a.extent(0);
  Shape shape = a.shape();
  shape[0] = rows;
  const auto x = a.data();
  std::vector<double> out(rows * width, 0.0);
  for (std::size_t p = 0; p < indices.size(); ++p) {
    const double* src = x.data() + p * width;
    double* dst = out.data() + indices[p] * width;
    for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(shape), std::move(out), "index_add", {a}, [idx, width](Node& n) {
    auto* g = sink(n, 0);
    if (!g) return;
    for (std::size_t p = 0; p < idx.size(); ++p) {
      const double* src = n.grad.data() + idx[p] * width;
      double* dst = g->data() + p * width;
      for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
    }
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& w) {
  if (a.rank() < 1 || w.rank() != 1 || w.extent(0) != a.extent(0)) {
    throw DimensionError("scale_rows: incompatible shapes " + shapes(a, w));
  }
  const std::size_t rows = a.extent(0), width = a.numel() / rows;
  const auto x = a.data(), ws = w.data();
  std::vector<double> out(x.size());
  for (std::size_t p = 0; p < rows; ++p)
    for (std::size_t i = 0; i < width; ++i) out[p * width + i] = x[p * width + i] * ws[p];
  return make_result(a.shape(), std::move(out), "scale_rows", {a, w}, [rows, width](Node& n) {
    const auto& x = n.inputs[0]->data;
    const auto& ws = n.inputs[1]->data;
    auto* ga = sink(n, 0);
    auto* gw = sink(n, 1);
    for (std::size_t p = 0; p < rows; ++p) {
      double acc = 0.0;
      for (std::size_t i = 0; i < width; ++i) {
        const double g = n.grad[p * width + i];
        if (ga) (*ga)[p * width + i] += g * ws[p];
        acc += g * x[p * width + i];
      }
      if (gw) (*gw)[p] += acc;
    }
  });
}

}  // namespace sts::ops
