#include "ficots/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>
#include <utility>

#include "ficots/errors.hpp"

namespace ficots {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {
struct NodeAccess {
  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};
}  // namespace detail

namespace {

using detail::Node;
using detail::NodeAccess;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

NodePtr make_node(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  return n;
}

const NodePtr& checked(const Tensor& t, const char* op) {
  const auto& n = NodeAccess::node(t);
  if (!n) throw ShapeError(std::string(op) + ": undefined tensor");
  return n;
}

void require_2d(const NodePtr& n, const char* op) {
  if (n->shape.size() != 2)
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " +
                     shape_str(n->shape));
}

void require_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
  if (a->shape != b->shape)
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a->shape) + " vs " + shape_str(b->shape));
}

void accumulate(const NodePtr& p, const std::vector<double>& delta) {
  p->ensure_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) p->grad[i] += delta[i];
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(shape_size(shape), value));
  n->requires_grad = requires_grad;
  return NodeAccess::wrap(std::move(n));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_size(shape) != values.size())
    throw ShapeError("from_values: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  auto n = make_node(std::move(shape), std::move(values));
  n->requires_grad = requires_grad;
  return NodeAccess::wrap(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_values({1, 1}, {v}); }

Tensor Tensor::row(std::vector<double> values) {
  Shape s{1, values.size()};
  return from_values(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values, bool requires_grad) {
  return from_values({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return checked(*this, "shape")->shape; }
std::size_t Tensor::ndim() const { return shape().size(); }
std::size_t Tensor::size() const { return checked(*this, "size")->size(); }

std::size_t Tensor::rows() const {
  const auto& n = checked(*this, "rows");
  require_2d(n, "rows");
  return n->shape[0];
}

std::size_t Tensor::cols() const {
  const auto& n = checked(*this, "cols");
  require_2d(n, "cols");
  return n->shape[1];
}

bool Tensor::requires_grad() const {
  return checked(*this, "requires_grad")->requires_grad;
}

const std::vector<double>& Tensor::values() const {
  return checked(*this, "values")->values;
}

const std::vector<double>& Tensor::grad() const {
  auto& n = checked(*this, "grad");
  n->ensure_grad();
  return n->grad;
}

std::vector<double>& Tensor::mutable_values() {
  return checked(*this, "mutable_values")->values;
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& n = checked(*this, "at");
  require_2d(n, "at");
  return n->values[r * n->shape[1] + c];
}

double Tensor::scalar_value() const {
  const auto& n = checked(*this, "scalar_value");
  if (n->size() != 1)
    throw ShapeError("scalar_value: tensor has shape " + shape_str(n->shape));
  return n->values[0];
}

void Tensor::zero_grad() {
  auto& n = checked(*this, "zero_grad");
  n->grad.assign(n->values.size(), 0.0);
}

// --- op helpers ---------------------------------------------------------

namespace {

NodePtr unary_out(const NodePtr& x, Shape shape, std::vector<double> values) {
  auto out = make_node(std::move(shape), std::move(values));
  out->requires_grad = x->requires_grad;
  if (out->requires_grad) out->parents = {x};
  return out;
}

NodePtr binary_out(const NodePtr& a, const NodePtr& b, Shape shape,
                   std::vector<double> values) {
  auto out = make_node(std::move(shape), std::move(values));
  out->requires_grad = a->requires_grad || b->requires_grad;
  if (out->requires_grad) out->parents = {a, b};
  return out;
}

}  // namespace

// --- ops ----------------------------------------------------------------

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  const auto& a = checked(ta, "matmul");
  const auto& b = checked(tb, "matmul");
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a->shape[1] != b->shape[0])
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a->shape) + " vs " + shape_str(b->shape));
  const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a->values[i * k + l];
      const double* brow = &b->values[l * n];
      double* crow = &c[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  auto out = binary_out(a, b, {m, n}, std::move(c));
  if (out->requires_grad) {
    out->backward = [a, b, m, k, n](Node& self) {
      const auto& g = self.grad;
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            double s = 0.0;
            const double* grow = &g[i * n];
            const double* brow = &b->values[l * n];
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            a->grad[i * k + l] += s;
          }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            const double av = a->values[i * k + l];
            const double* grow = &g[i * n];
            double* brow = &b->grad[l * n];
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
      }
    };
  }
  return NodeAccess::wrap(out);
}

Tensor transpose(const Tensor& tx) {
  const auto& x = checked(tx, "transpose");
  require_2d(x, "transpose");
  const std::size_t m = x->shape[0], n = x->shape[1];
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j * m + i] = x->values[i * n + j];
  auto out = unary_out(x, {n, m}, std::move(v));
  if (out->requires_grad) {
    out->backward = [x, m, n](Node& self) {
      x->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          x->grad[i * n + j] += self.grad[j * m + i];
    };
  }
  return NodeAccess::wrap(out);
}

Tensor add(const Tensor& ta, const Tensor& tb) {
  const auto& a = checked(ta, "add");
  const auto& b = checked(tb, "add");
  require_same_shape(a, b, "add");
  std::vector<double> v(a->size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a->values[i] + b->values[i];
  auto out = binary_out(a, b, a->shape, std::move(v));
  if (out->requires_grad) {
    out->backward = [a, b](Node& self) {
      if (a->requires_grad) accumulate(a, self.grad);
      if (b->requires_grad) accumulate(b, self.grad);
    };
  }
  return NodeAccess::wrap(out);
}

Tensor subtract(const Tensor& ta, const Tensor& tb) {
  const auto& a = checked(ta, "subtract");
  const auto& b = checked(tb, "subtract");
  require_same_shape(a, b, "subtract");
  std::vector<double> v(a->size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a->values[i] - b->values[i];
  auto out = binary_out(a, b, a->shape, std::move(v));
  if (out->requires_grad) {
    out->backward = [a, b](Node& self) {
      if (a->requires_grad) accumulate(a, self.grad);
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          b->grad[i] -= self.grad[i];
      }
    };
  }
  return NodeAccess::wrap(out);
}

Tensor multiply(const Tensor& ta, const Tensor& tb) {
  const auto& a = checked(ta, "multiply");
  const auto& b = checked(tb, "multiply");
  require_same_shape(a, b, "multiply");
  std::vector<double> v(a->size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a->values[i] * b->values[i];
  auto out = binary_out(a, b, a->shape, std::move(v));
  if (out->requires_grad) {
    out->backward = [a, b](Node& self) {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          a->grad[i] += self.grad[i] * b->values[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          b->grad[i] += self.grad[i] * a->values[i];
      }
    };
  }
  return NodeAccess::wrap(out);
}

Tensor scale(const Tensor& tx, double c) {
  const auto& x = checked(tx, "scale");
  std::vector<double> v(x->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * x->values[i];
  auto out = unary_out(x, x->shape, std::move(v));
  if (out->requires_grad) {
    out->backward = [x, c](Node& self) {
      x->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        x->grad[i] += c * self.grad[i];
    };
  }
  return NodeAccess::wrap(out);
}

Tensor add_row_bias(const Tensor& tx, const Tensor& tbias) {
  const auto& x = checked(tx, "add_row_bias");
  const auto& b = checked(tbias, "add_row_bias");
  require_2d(x, "add_row_bias");
  if (b->size() != x->shape[1])
    throw ShapeError("add_row_bias: bias " + shape_str(b->shape) +
                     " does not match columns of " + shape_str(x->shape));
  const std::size_t m = x->shape[0], n = x->shape[1];
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      v[i * n + j] = x->values[i * n + j] + b->values[j];
  auto out = binary_out(x, b, x->shape, std::move(v));
  if (out->requires_grad) {
    out->backward = [x, b, m, n](Node& self) {
      if (x->requires_grad) accumulate(x, self.grad);
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            b->grad[j] += self.grad[i * n + j];
      }
    };
  }
  return NodeAccess::wrap(out);
}

Tensor relu(const Tensor& tx) {
  const auto& x = checked(tx, "relu");
  std::vector<double> v(x->size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = x->values[i] > 0.0 ? x->values[i] : 0.0;
  auto out = unary_out(x, x->shape, std::move(v));
  if (out->requires_grad) {
    out->backward = [x](Node& self) {
      x->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (x->values[i] > 0.0) x->grad[i] += self.grad[i];
    };
  }
  return NodeAccess::wrap(out);
}

Tensor sigmoid(const Tensor& tx) {
  const auto& x = checked(tx, "sigmoid");
  // Clamped away from {0, 1} so the output stays strictly inside (0, 1)
  // even when exp() underflows.
  const double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  std::vector<double> v(x->size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double t = x->values[i];
    double s;
    if (t >= 0.0) {
      s = 1.0 / (1.0 + std::exp(-t));
    } else {
      const double e = std::exp(t);
      s = e / (1.0 + e);
    }
    v[i] = std::min(hi, std::max(lo, s));
  }
  auto out = unary_out(x, x->shape, std::move(v));
  if (out->requires_grad) {
    out->backward = [x](Node& self) {
      x->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double s = self.values[i];
        x->grad[i] += self.grad[i] * s * (1.0 - s);
      }
    };
  }
  return NodeAccess::wrap(out);
}

Tensor softmax_rows(const Tensor& tx) {
  const auto& x = checked(tx, "softmax_rows");
  require_2d(x, "softmax_rows");
  const std::size_t m = x->shape[0], n = x->shape[1];
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = &x->values[i * n];
    double* vr = &v[i * n];
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      vr[j] = std::exp(xr[j] - mx);
      sum += vr[j];
    }
    for (std::size_t j = 0; j < n; ++j) vr[j] /= sum;
  }
  auto out = unary_out(x, x->shape, std::move(v));
  if (out->requires_grad) {
    out->backward = [x, m, n](Node& self) {
      x->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* s = &self.values[i * n];
        const double* g = &self.grad[i * n];
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * s[j];
        for (std::size_t j = 0; j < n; ++j)
          x->grad[i * n + j] += s[j] * (g[j] - dot);
      }
    };
  }
  return NodeAccess::wrap(out);
}

Tensor layer_norm(const Tensor& tx, const Tensor& tgamma, const Tensor& tbeta,
                  double eps) {
  const auto& x = checked(tx, "layer_norm");
  const auto& gamma = checked(tgamma, "layer_norm");
  const auto& beta = checked(tbeta, "layer_norm");
  require_2d(x, "layer_norm");
  const std::size_t m = x->shape[0], d = x->shape[1];
  if (gamma->size() != d || beta->size() != d)
    throw ShapeError("layer_norm: affine params must have " +
                     std::to_string(d) + " elements, got " +
                     shape_str(gamma->shape) + " and " +
                     shape_str(beta->shape));
  std::vector<double> v(m * d);
  std::vector<double> inv_std(m);
  std::vector<double> xhat(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = &x->values[i * d];
    double mean = 0.0, lo = xr[0], hi = xr[0];
    for (std::size_t j = 0; j < d; ++j) {
      mean += xr[j];
      lo = std::min(lo, xr[j]);
      hi = std::max(hi, xr[j]);
    }
    mean = std::clamp(mean / static_cast<double>(d), lo, hi);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xr[j] - mean) * inv_std[i];
      v[i * d + j] = gamma->values[j] * xhat[i * d + j] + beta->values[j];
    }
  }
  auto out = make_node(x->shape, std::move(v));
  out->requires_grad =
      x->requires_grad || gamma->requires_grad || beta->requires_grad;
  if (out->requires_grad) {
    out->parents = {x, gamma, beta};
    out->backward = [x, gamma, beta, m, d, inv_std = std::move(inv_std),
                     xhat = std::move(xhat)](Node& self) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = &self.grad[i * d];
        const double* xh = &xhat[i * d];
        if (gamma->requires_grad) {
          gamma->ensure_grad();
          for (std::size_t j = 0; j < d; ++j)
            gamma->grad[j] += g[j] * xh[j];
        }
        if (beta->requires_grad) {
          beta->ensure_grad();
          for (std::size_t j = 0; j < d; ++j) beta->grad[j] += g[j];
        }
        if (x->requires_grad) {
          x->ensure_grad();
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[j] * gamma->values[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = g[j] * gamma->values[j];
            x->grad[i * d + j] +=
                inv_std[i] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
          }
        }
      }
    };
  }
  return NodeAccess::wrap(out);
}

Tensor concat(const Tensor& ta, const Tensor& tb, std::size_t axis) {
  const auto& a = checked(ta, "concat");
  const auto& b = checked(tb, "concat");
  require_2d(a, "concat");
  require_2d(b, "concat");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  const std::size_t other = 1 - axis;
  if (a->shape[other] != b->shape[other])
    throw ShapeError("concat: shapes " + shape_str(a->shape) + " and " +
                     shape_str(b->shape) + " disagree off axis " +
                     std::to_string(axis));
  std::size_t m, n;
  std::vector<double> v;
  if (axis == 0) {
    m = a->shape[0] + b->shape[0];
    n = a->shape[1];
    v = a->values;
    v.insert(v.end(), b->values.begin(), b->values.end());
  } else {
    m = a->shape[0];
    n = a->shape[1] + b->shape[1];
    v.resize(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(&a->values[i * a->shape[1]], a->shape[1], &v[i * n]);
      std::copy_n(&b->values[i * b->shape[1]], b->shape[1],
                  &v[i * n + a->shape[1]]);
    }
  }
  auto out = binary_out(a, b, {m, n}, std::move(v));
  if (out->requires_grad) {
    out->backward = [a, b, axis, m, n](Node& self) {
      if (axis == 0) {
        const std::size_t asz = a->size();
        if (a->requires_grad) {
          a->ensure_grad();
          for (std::size_t i = 0; i < asz; ++i) a->grad[i] += self.grad[i];
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (std::size_t i = 0; i < b->size(); ++i)
            b->grad[i] += self.grad[asz + i];
        }
      } else {
        const std::size_t an = a->shape[1], bn = b->shape[1];
        if (a->requires_grad) {
          a->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < an; ++j)
              a->grad[i * an + j] += self.grad[i * n + j];
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < bn; ++j)
              b->grad[i * bn + j] += self.grad[i * n + an + j];
        }
      }
    };
  }
  return NodeAccess::wrap(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no tensors");
  Tensor out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i)
    out = concat(out, parts[i], 0);
  return out;
}

Tensor slice_rows(const Tensor& tx, std::size_t r0, std::size_t r1) {
  const auto& x = checked(tx, "slice_rows");
  require_2d(x, "slice_rows");
  if (r0 > r1 || r1 > x->shape[0])
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " +
                     std::to_string(r1) + ") out of " + shape_str(x->shape));
  const std::size_t n = x->shape[1];
  std::vector<double> v(x->values.begin() + r0 * n, x->values.begin() + r1 * n);
  auto out = unary_out(x, {r1 - r0, n}, std::move(v));
  if (out->requires_grad) {
    out->backward = [x, r0, n](Node& self) {
      x->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        x->grad[r0 * n + i] += self.grad[i];
    };
  }
  return NodeAccess::wrap(out);
}

Tensor slice_cols(const Tensor& tx, std::size_t c0, std::size_t c1) {
  const auto& x = checked(tx, "slice_cols");
  require_2d(x, "slice_cols");
  if (c0 > c1 || c1 > x->shape[1])
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") out of " + shape_str(x->shape));
  const std::size_t m = x->shape[0], n = x->shape[1], w = c1 - c0;
  std::vector<double> v(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(&x->values[i * n + c0], w, &v[i * w]);
  auto out = unary_out(x, {m, w}, std::move(v));
  if (out->requires_grad) {
    out->backward = [x, c0, m, n, w](Node& self) {
      x->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j)
          x->grad[i * n + c0 + j] += self.grad[i * w + j];
    };
  }
  return NodeAccess::wrap(out);
}

Tensor index_select_rows(const Tensor& tx, std::vector<std::size_t> rows) {
  const auto& x = checked(tx, "index_select_rows");
  require_2d(x, "index_select_rows");
  const std::size_t n = x->shape[1];
  std::vector<double> v(rows.size() * n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x->shape[0])
      throw ShapeError("index_select_rows: index " + std::to_string(rows[r]) +
                       " out of " + shape_str(x->shape));
    std::copy_n(&x->values[rows[r] * n], n, &v[r * n]);
  }
  auto out = unary_out(x, {rows.size(), n}, std::move(v));
  if (out->requires_grad) {
    out->backward = [x, rows = std::move(rows), n](Node& self) {
      x->ensure_grad();
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < n; ++j)
          x->grad[rows[r] * n + j] += self.grad[r * n + j];
    };
  }
  return NodeAccess::wrap(out);
}

Tensor mean_axis(const Tensor& tx, std::size_t axis) {
  const auto& x = checked(tx, "mean_axis");
  require_2d(x, "mean_axis");
  if (axis > 1) throw ShapeError("mean_axis: axis must be 0 or 1");
  const std::size_t m = x->shape[0], n = x->shape[1];
  const std::size_t kept = axis == 0 ? n : m;
  const std::size_t reduced = axis == 0 ? m : n;
  std::vector<double> v(kept);
  for (std::size_t j = 0; j < kept; ++j) {
    double sum = 0.0, lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < reduced; ++i) {
      const double e =
          axis == 0 ? x->values[i * n + j] : x->values[j * n + i];
      if (i == 0) lo = hi = e;
      lo = std::min(lo, e);
      hi = std::max(hi, e);
      sum += e;
    }
    // The true mean lies in [min, max]; clamping removes summation
    // round-off so constant slices reduce exactly.
    v[j] = std::clamp(sum / static_cast<double>(reduced), lo, hi);
  }
  Shape out_shape = axis == 0 ? Shape{1, n} : Shape{m, 1};
  auto out = unary_out(x, std::move(out_shape), std::move(v));
  if (out->requires_grad) {
    out->backward = [x, axis, m, n, reduced](Node& self) {
      x->ensure_grad();
      const double inv = 1.0 / static_cast<double>(reduced);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          x->grad[i * n + j] += inv * self.grad[axis == 0 ? j : i];
    };
  }
  return NodeAccess::wrap(out);
}

Tensor mean_all(const Tensor& tx) {
  const auto& x = checked(tx, "mean_all");
  if (x->size() == 0) throw ShapeError("mean_all: empty tensor");
  double sum = 0.0, lo = x->values[0], hi = x->values[0];
  for (double e : x->values) {
    sum += e;
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  const double mean =
      std::clamp(sum / static_cast<double>(x->size()), lo, hi);
  auto out = unary_out(x, {1, 1}, {mean});
  if (out->requires_grad) {
    const double inv = 1.0 / static_cast<double>(x->size());
    out->backward = [x, inv](Node& self) {
      x->ensure_grad();
      for (std::size_t i = 0; i < x->grad.size(); ++i)
        x->grad[i] += inv * self.grad[0];
    };
  }
  return NodeAccess::wrap(out);
}

Tensor scatter_mean(const Tensor& src,
                    std::vector<std::vector<std::size_t>> groups) {
  std::vector<std::vector<double>> weights(groups.size());
  for (std::size_t r = 0; r < groups.size(); ++r)
    weights[r].assign(groups[r].size(),
                      groups[r].empty()
                          ? 0.0
                          : 1.0 / static_cast<double>(groups[r].size()));
  return scatter_weighted_sum(src, std::move(groups), std::move(weights));
}

Tensor scatter_weighted_sum(const Tensor& tsrc,
                            std::vector<std::vector<std::size_t>> groups,
                            std::vector<std::vector<double>> weights) {
  const auto& x = checked(tsrc, "scatter_weighted_sum");
  require_2d(x, "scatter_weighted_sum");
  if (groups.size() != weights.size())
    throw ShapeError("scatter_weighted_sum: group/weight count mismatch");
  const std::size_t n = x->shape[1];
  std::vector<double> v(groups.size() * n, 0.0);
  for (std::size_t r = 0; r < groups.size(); ++r) {
    if (groups[r].size() != weights[r].size())
      throw ShapeError("scatter_weighted_sum: row " + std::to_string(r) +
                       " group/weight length mismatch");
    for (std::size_t k = 0; k < groups[r].size(); ++k) {
      const std::size_t idx = groups[r][k];
      if (idx >= x->shape[0])
        throw ShapeError("scatter_weighted_sum: index " + std::to_string(idx) +
                         " out of " + shape_str(x->shape));
      const double w = weights[r][k];
      for (std::size_t j = 0; j < n; ++j)
        v[r * n + j] += w * x->values[idx * n + j];
    }
  }
  auto out = unary_out(x, {groups.size(), n}, std::move(v));
  if (out->requires_grad) {
    out->backward = [x, groups = std::move(groups),
                     weights = std::move(weights), n](Node& self) {
      x->ensure_grad();
      for (std::size_t r = 0; r < groups.size(); ++r)
        for (std::size_t k = 0; k < groups[r].size(); ++k) {
          const std::size_t idx = groups[r][k];
          const double w = weights[r][k];
          for (std::size_t j = 0; j < n; ++j)
            x->grad[idx * n + j] += w * self.grad[r * n + j];
        }
    };
  }
  return NodeAccess::wrap(out);
}

Tensor reshape(const Tensor& tx, Shape new_shape) {
  const auto& x = checked(tx, "reshape");
  if (shape_size(new_shape) != x->size())
    throw ShapeError("reshape: cannot view " + shape_str(x->shape) + " as " +
                     shape_str(new_shape));
  auto out = unary_out(x, std::move(new_shape), x->values);
  if (out->requires_grad) {
    out->backward = [x](Node& self) { accumulate(x, self.grad); };
  }
  return NodeAccess::wrap(out);
}

void backward(const Tensor& loss) {
  const auto& root = checked(loss, "backward");
  if (root->size() != 1)
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(root->shape));
  if (!std::isfinite(root->values[0]))
    throw NumericError("backward: loss is not finite");
  if (!root->requires_grad) return;

  // Reverse postorder over the grad-requiring subgraph: every node is
  // processed after all of its consumers.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    Node* node = top.first;
    if (top.second < node->parents.size()) {
      Node* p = node->parents[top.second].get();
      ++top.second;
      if (p->requires_grad && visited.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    n->ensure_grad();
    if (n->backward) n->backward(*n);
  }
}

}  // namespace ficots
