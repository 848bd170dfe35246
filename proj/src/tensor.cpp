// SPDX-License-Identifier: Apache-2.0
#include "saga/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace saga {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (int64_t d : shape_) {
    if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension in " + shape_str(shape_));
  }
  data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

double Tensor::item() const {
  if (size() != 1) throw std::runtime_error("Tensor::item on tensor of shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out;
  size_t n = std::max(a.size(), b.size());
  out.resize(n);
  for (size_t i = 0; i < n; ++i) {
    int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument("incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

namespace {

std::vector<int64_t> row_major_strides(const Shape& shape) {
  std::vector<int64_t> strides(shape.size());
  int64_t s = 1;
  for (size_t i = shape.size(); i-- > 0;) {
    strides[i] = s;
    s *= shape[i];
  }
  return strides;
}

// Strides for reading `src` as if broadcast to `out` (stride 0 on expanded axes).
std::vector<int64_t> broadcast_strides(const Shape& src, const Shape& out) {
  std::vector<int64_t> strides(out.size(), 0);
  auto base = row_major_strides(src);
  size_t off = out.size() - src.size();
  for (size_t i = 0; i < src.size(); ++i) {
    strides[off + i] = src[i] == 1 ? 0 : base[i];
  }
  return strides;
}

template <typename F>
Tensor binary_op(const Tensor& a, const Tensor& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  Shape oshape = broadcast_shape(a.shape(), b.shape());
  Tensor out(oshape);
  auto sa = broadcast_strides(a.shape(), oshape);
  auto sb = broadcast_strides(b.shape(), oshape);
  std::vector<int64_t> idx(oshape.size(), 0);
  int64_t n = out.size();
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t ia = 0, ib = 0;
    for (size_t d = 0; d < oshape.size(); ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    out[flat] = f(a[ia], b[ib]);
    for (size_t d = oshape.size(); d-- > 0;) {
      if (++idx[d] < oshape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

Tensor t_add(const Tensor& a, const Tensor& b) { return binary_op(a, b, [](double x, double y) { return x + y; }); }
Tensor t_sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, [](double x, double y) { return x - y; }); }
Tensor t_mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, [](double x, double y) { return x * y; }); }
Tensor t_div(const Tensor& a, const Tensor& b) { return binary_op(a, b, [](double x, double y) { return x / y; }); }
Tensor t_minimum(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x <= y ? x : y; });
}

Tensor t_scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Tensor t_matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out(Shape{m, n});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      for (int64_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
    }
  }
  return out;
}

Tensor t_broadcast_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  if (broadcast_shape(a.shape(), shape) != shape) {
    throw std::invalid_argument("cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  Tensor ones(shape, 0.0);
  return binary_op(a, ones, [](double x, double) { return x; });
}

Tensor t_reduce_to(const Tensor& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  Tensor out(shape);
  auto strides = broadcast_strides(shape, g.shape());
  std::vector<int64_t> idx(g.ndim(), 0);
  for (int64_t flat = 0; flat < g.size(); ++flat) {
    int64_t it = 0;
    for (size_t d = 0; d < idx.size(); ++d) it += idx[d] * strides[d];
    out[it] += g[flat];
    for (size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < g.shape()[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

Tensor t_conv2d_same(const Tensor& a, const Tensor& kernel) {
  if (a.ndim() != 2 || kernel.ndim() != 2) throw std::invalid_argument("conv2d: inputs must be 2-D");
  int64_t h = a.shape()[0], w = a.shape()[1];
  int64_t kh = kernel.shape()[0], kw = kernel.shape()[1];
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel dims must be odd");
  int64_t ph = kh / 2, pw = kw / 2;
  Tensor out(a.shape());
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int64_t u = 0; u < kh; ++u) {
        int64_t ii = i + u - ph;
        if (ii < 0 || ii >= h) continue;
        for (int64_t v = 0; v < kw; ++v) {
          int64_t jj = j + v - pw;
          if (jj < 0 || jj >= w) continue;
          acc += a[ii * w + jj] * kernel[u * kw + v];
        }
      }
      out[i * w + j] = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Tensor value, std::function<void(const Tensor&, Tape&)> backprop) {
  nodes_.push_back(Node{std::move(value), std::move(backprop)});
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

const Tensor& Tape::value(Var v) const { return nodes_.at(static_cast<size_t>(v.id)).value; }

const Tensor& Tape::grad(Var v) const {
  static const Tensor empty;
  const Tensor& g = grads_.at(static_cast<size_t>(v.id));
  if (g.size() == 0) {
    // Unreachable node: materialize zeros lazily is not possible from const
    // context, so callers get an empty tensor; treat as all-zero.
    return empty;
  }
  return g;
}

void Tape::accumulate(int32_t id, const Tensor& g) {
  Tensor& slot = grads_[static_cast<size_t>(id)];
  if (slot.size() == 0) {
    slot = g;
  } else {
    for (int64_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
  }
}

void Tape::backward(Var out) {
  if (value(out).size() != 1) {
    throw std::runtime_error("backward: output must be scalar, got shape " + shape_str(value(out).shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[static_cast<size_t>(out.id)] = Tensor::scalar(1.0);
  for (int32_t id = out.id; id >= 0; --id) {
    const Node& node = nodes_[static_cast<size_t>(id)];
    const Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.size() == 0 || !node.backprop) continue;
    node.backprop(g, *this);
  }
}

Var Tape::add(Var a, Var b) {
  Tensor out = t_add(value(a), value(b));
  Shape sa = value(a).shape(), sb = value(b).shape();
  return push(std::move(out), [a, b, sa, sb](const Tensor& g, Tape& t) {
    t.accumulate(a.id, t_reduce_to(g, sa));
    t.accumulate(b.id, t_reduce_to(g, sb));
  });
}

Var Tape::sub(Var a, Var b) {
  Tensor out = t_sub(value(a), value(b));
  Shape sa = value(a).shape(), sb = value(b).shape();
  return push(std::move(out), [a, b, sa, sb](const Tensor& g, Tape& t) {
    t.accumulate(a.id, t_reduce_to(g, sa));
    t.accumulate(b.id, t_scale(t_reduce_to(g, sb), -1.0));
  });
}

Var Tape::mul(Var a, Var b) {
  Tensor out = t_mul(value(a), value(b));
  Shape sa = value(a).shape(), sb = value(b).shape();
  return push(std::move(out), [a, b, sa, sb](const Tensor& g, Tape& t) {
    t.accumulate(a.id, t_reduce_to(t_mul(g, t.value(b)), sa));
    t.accumulate(b.id, t_reduce_to(t_mul(g, t.value(a)), sb));
  });
}

Var Tape::div(Var a, Var b) {
  Tensor out = t_div(value(a), value(b));
  Shape sa = value(a).shape(), sb = value(b).shape();
  return push(std::move(out), [a, b, sa, sb](const Tensor& g, Tape& t) {
    const Tensor& bv = t.value(b);
    t.accumulate(a.id, t_reduce_to(t_div(g, bv), sa));
    Tensor gb = t_mul(g, t_div(t_scale(t.value(a), -1.0), t_mul(bv, bv)));
    t.accumulate(b.id, t_reduce_to(gb, sb));
  });
}

Var Tape::minimum(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  Tensor out = t_minimum(av, bv);
  Shape sa = av.shape(), sb = bv.shape();
  // Subgradient: ties route to the first operand (lower flat order of the
  // argument pair), i.e. a wins on a == b.
  return push(std::move(out), [a, b, sa, sb](const Tensor& g, Tape& t) {
    Tensor av_b = t_broadcast_to(t.value(a), g.shape());
    Tensor bv_b = t_broadcast_to(t.value(b), g.shape());
    Tensor ga(g.shape()), gb(g.shape());
    for (int64_t i = 0; i < g.size(); ++i) {
      if (av_b[i] <= bv_b[i]) {
        ga[i] = g[i];
      } else {
        gb[i] = g[i];
      }
    }
    t.accumulate(a.id, t_reduce_to(ga, sa));
    t.accumulate(b.id, t_reduce_to(gb, sb));
  });
}

Var Tape::scale(Var a, double s) {
  return push(t_scale(value(a), s), [a, s](const Tensor& g, Tape& t) { t.accumulate(a.id, t_scale(g, s)); });
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = t_matmul(value(a), value(b));
  return push(std::move(out), [a, b](const Tensor& g, Tape& t) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    int64_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
    Tensor ga(av.shape()), gb(bv.shape());
    for (int64_t i = 0; i < m; ++i)
      for (int64_t p = 0; p < k; ++p) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
        ga[i * k + p] = acc;
      }
    for (int64_t p = 0; p < k; ++p)
      for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < m; ++i) acc += av[i * k + p] * g[i * n + j];
        gb[p * n + j] = acc;
      }
    t.accumulate(a.id, ga);
    t.accumulate(b.id, gb);
  });
}

Tensor t_transpose2d(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("transpose2d: input must be 2-D");
  int64_t m = a.shape()[0], n = a.shape()[1];
  Tensor out(Shape{n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

Var Tape::transpose2d(Var a) {
  return push(t_transpose2d(value(a)), [a](const Tensor& g, Tape& t) {
    t.accumulate(a.id, t_transpose2d(g));
  });
}

Var Tape::reshape(Var a, Shape shape) {
  const Tensor& av = value(a);
  if (shape_numel(shape) != av.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(av.shape()) + " as " + shape_str(shape));
  }
  Shape orig = av.shape();
  Tensor out(shape, av.data());
  return push(std::move(out), [a, orig](const Tensor& g, Tape& t) {
    t.accumulate(a.id, Tensor(orig, g.data()));
  });
}

Var Tape::broadcast_to(Var a, Shape shape) {
  Shape sa = value(a).shape();
  Tensor out = t_broadcast_to(value(a), shape);
  return push(std::move(out), [a, sa](const Tensor& g, Tape& t) { t.accumulate(a.id, t_reduce_to(g, sa)); });
}

Var Tape::sum(Var a) {
  double acc = 0.0;
  const Tensor& av = value(a);
  for (int64_t i = 0; i < av.size(); ++i) acc += av[i];
  Shape sa = av.shape();
  return push(Tensor::scalar(acc), [a, sa](const Tensor& g, Tape& t) {
    t.accumulate(a.id, Tensor(sa, g.item()));
  });
}

Var Tape::sum_axis(Var a, int axis) {
  const Tensor& av = value(a);
  if (axis < 0 || axis >= av.ndim()) throw std::invalid_argument("sum_axis: bad axis");
  Shape oshape;
  for (int i = 0; i < av.ndim(); ++i)
    if (i != axis) oshape.push_back(av.shape()[i]);
  if (oshape.empty()) oshape.push_back(1);
  int64_t outer = 1, mid = av.shape()[axis], inner = 1;
  for (int i = 0; i < axis; ++i) outer *= av.shape()[i];
  for (int i = axis + 1; i < av.ndim(); ++i) inner *= av.shape()[i];
  Tensor out(oshape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t m = 0; m < mid; ++m)
      for (int64_t in = 0; in < inner; ++in) out[o * inner + in] += av[(o * mid + m) * inner + in];
  Shape sa = av.shape();
  return push(std::move(out), [a, sa, outer, mid, inner](const Tensor& g, Tape& t) {
    Tensor ga(sa);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t m = 0; m < mid; ++m)
        for (int64_t in = 0; in < inner; ++in) ga[(o * mid + m) * inner + in] = g[o * inner + in];
    t.accumulate(a.id, ga);
  });
}

Var Tape::mean(Var a) {
  int64_t n = value(a).size();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Tape::max_all(Var a) {
  const Tensor& av = value(a);
  int64_t arg = 0;
  for (int64_t i = 1; i < av.size(); ++i)
    if (av[i] > av[arg]) arg = i;
  Shape sa = av.shape();
  return push(Tensor::scalar(av[arg]), [a, sa, arg](const Tensor& g, Tape& t) {
    Tensor ga(sa);
    ga[arg] = g.item();
    t.accumulate(a.id, ga);
  });
}

Var Tape::max_axis(Var a, int axis) {
  const Tensor& av = value(a);
  if (axis < 0 || axis >= av.ndim()) throw std::invalid_argument("max_axis: bad axis");
  int64_t outer = 1, mid = av.shape()[axis], inner = 1;
  for (int i = 0; i < axis; ++i) outer *= av.shape()[i];
  for (int i = axis + 1; i < av.ndim(); ++i) inner *= av.shape()[i];
  Shape oshape;
  for (int i = 0; i < av.ndim(); ++i)
    if (i != axis) oshape.push_back(av.shape()[i]);
  if (oshape.empty()) oshape.push_back(1);
  Tensor out(oshape);
  std::vector<int64_t> args(static_cast<size_t>(outer * inner), 0);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      int64_t best = 0;
      double bv = av[(o * mid) * inner + in];
      for (int64_t m = 1; m < mid; ++m) {
        double v = av[(o * mid + m) * inner + in];
        if (v > bv) {
          bv = v;
          best = m;
        }
      }
      out[o * inner + in] = bv;
      args[static_cast<size_t>(o * inner + in)] = best;
    }
  Shape sa = av.shape();
  return push(std::move(out), [a, sa, args, outer, mid, inner](const Tensor& g, Tape& t) {
    Tensor ga(sa);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t in = 0; in < inner; ++in) {
        int64_t m = args[static_cast<size_t>(o * inner + in)];
        ga[(o * mid + m) * inner + in] = g[o * inner + in];
      }
    t.accumulate(a.id, ga);
  });
}

Var Tape::softmax(Var a, int axis) {
  const Tensor& av = value(a);
  if (axis < 0 || axis >= av.ndim()) throw std::invalid_argument("softmax: bad axis");
  int64_t outer = 1, mid = av.shape()[axis], inner = 1;
  for (int i = 0; i < axis; ++i) outer *= av.shape()[i];
  for (int i = axis + 1; i < av.ndim(); ++i) inner *= av.shape()[i];
  Tensor out(av.shape());
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      double mx = av[(o * mid) * inner + in];
      for (int64_t m = 1; m < mid; ++m) mx = std::max(mx, av[(o * mid + m) * inner + in]);
      double z = 0.0;
      for (int64_t m = 0; m < mid; ++m) {
        double e = std::exp(av[(o * mid + m) * inner + in] - mx);
        out[(o * mid + m) * inner + in] = e;
        z += e;
      }
      for (int64_t m = 0; m < mid; ++m) out[(o * mid + m) * inner + in] /= z;
    }
  Var node = push(std::move(out), nullptr);
  // ds_i = y_i (g_i - sum_j g_j y_j) per slice
  nodes_.back().backprop = [a, node, outer, mid, inner](const Tensor& g, Tape& t) {
    const Tensor& y = t.value(node);
    Tensor ga(t.value(a).shape());
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t in = 0; in < inner; ++in) {
        double dot = 0.0;
        for (int64_t m = 0; m < mid; ++m) {
          int64_t i = (o * mid + m) * inner + in;
          dot += g[i] * y[i];
        }
        for (int64_t m = 0; m < mid; ++m) {
          int64_t i = (o * mid + m) * inner + in;
          ga[i] = y[i] * (g[i] - dot);
        }
      }
    t.accumulate(a.id, ga);
  };
  return node;
}

Var Tape::exp(Var a) {
  const Tensor& av = value(a);
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
  Var node = push(std::move(out), nullptr);
  nodes_.back().backprop = [a, node](const Tensor& g, Tape& t) {
    t.accumulate(a.id, t_mul(g, t.value(node)));
  };
  return node;
}

Var Tape::log(Var a) {
  const Tensor& av = value(a);
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) {
    if (av[i] < 0.0) throw std::domain_error("log of negative input");
    out[i] = std::log(av[i]);
  }
  return push(std::move(out), [a](const Tensor& g, Tape& t) {
    t.accumulate(a.id, t_div(g, t.value(a)));
  });
}

Var Tape::square(Var a) {
  const Tensor& av = value(a);
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * av[i];
  return push(std::move(out), [a](const Tensor& g, Tape& t) {
    t.accumulate(a.id, t_mul(g, t_scale(t.value(a), 2.0)));
  });
}

Var Tape::sqrt(Var a) {
  const Tensor& av = value(a);
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) {
    if (av[i] < 0.0) throw std::domain_error("sqrt of negative input");
    out[i] = std::sqrt(av[i]);
  }
  Var node = push(std::move(out), nullptr);
  nodes_.back().backprop = [a, node](const Tensor& g, Tape& t) {
    const Tensor& y = t.value(node);
    Tensor ga(g.shape());
    for (int64_t i = 0; i < g.size(); ++i) ga[i] = g[i] * 0.5 / y[i];
    t.accumulate(a.id, ga);
  };
  return node;
}

Var Tape::clamp_min(Var a, double floor) {
  const Tensor& av = value(a);
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) out[i] = std::max(av[i], floor);
  return push(std::move(out), [a, floor](const Tensor& g, Tape& t) {
    const Tensor& av2 = t.value(a);
    Tensor ga(g.shape());
    for (int64_t i = 0; i < g.size(); ++i) ga[i] = av2[i] >= floor ? g[i] : 0.0;
    t.accumulate(a.id, ga);
  });
}

Var Tape::conv2d_same(Var a, const Tensor& kernel) {
  Tensor out = t_conv2d_same(value(a), kernel);
  Tensor flipped(kernel.shape());
  int64_t kn = kernel.size();
  for (int64_t i = 0; i < kn; ++i) flipped[i] = kernel[kn - 1 - i];
  return push(std::move(out), [a, flipped](const Tensor& g, Tape& t) {
    t.accumulate(a.id, t_conv2d_same(g, flipped));
  });
}

Var Tape::stddev(Var a) {
  int64_t n = value(a).size();
  Var m = mean(a);
  Var centered = sub(a, broadcast_to(m, value(a).shape()));
  Var var = scale(sum(square(centered)), 1.0 / static_cast<double>(n));
  return sqrt(var);
}

Var Tape::stack_scalars(const std::vector<Var>& parts) {
  Tensor out(Shape{static_cast<int64_t>(parts.size())});
  for (size_t i = 0; i < parts.size(); ++i) out[static_cast<int64_t>(i)] = value(parts[i]).item();
  std::vector<Var> ps = parts;
  return push(std::move(out), [ps](const Tensor& g, Tape& t) {
    for (size_t i = 0; i < ps.size(); ++i) t.accumulate(ps[i].id, Tensor::scalar(g[static_cast<int64_t>(i)]));
  });
}

Var Tape::pick(Var a, int64_t flat_index) {
  const Tensor& av = value(a);
  if (flat_index < 0 || flat_index >= av.size()) throw std::out_of_range("pick: index out of range");
  Shape sa = av.shape();
  return push(Tensor::scalar(av[flat_index]), [a, sa, flat_index](const Tensor& g, Tape& t) {
    Tensor ga(sa);
    ga[flat_index] = g.item();
    t.accumulate(a.id, ga);
  });
}

Var Tape::custom(Tensor value, std::function<void(const Tensor&, Tape&)> backprop) {
  return push(std::move(value), std::move(backprop));
}

void Tape::add_grad(Var v, const Tensor& g) { accumulate(v.id, g); }

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h) {
  Tape tape;
  Var in = tape.leaf(x);
  Var out = f(tape, in);
  if (tape.value(out).size() != 1) throw std::runtime_error("grad_check: f must be scalar-valued");
  tape.backward(out);
  Tensor autograd = tape.grad(in);
  if (autograd.size() == 0) autograd = Tensor(x.shape());

  double worst = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    Tape tp, tm;
    double fp = tp.value(f(tp, tp.leaf(xp))).item();
    double fm = tm.value(f(tm, tm.leaf(xm))).item();
    double cd = (fp - fm) / (2.0 * h);
    double err = std::abs(autograd[i] - cd) / (std::max(std::abs(autograd[i]), std::abs(cd)) + 1e-6);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace saga
