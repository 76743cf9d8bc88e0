#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ficots {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

// One node of the reverse-mode tape. Ops build a DAG of these; backward()
// walks it in reverse topological order. Values are immutable after the
// forward construction; only grad accumulates.
struct Node {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::size_t size() const { return values.size(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

struct NodeAccess;

}  // namespace detail

// Dense row-major tensor of 64-bit floats with optional gradient tracking.
// Cheap to copy (shared handle to the tape node).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);      // shape {1, n}
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const;
  std::size_t size() const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only
  bool requires_grad() const;

  const std::vector<double>& values() const;
  const std::vector<double>& grad() const;
  // Direct access for optimizer updates and finite-difference perturbation.
  // Must not be called on tensors that are part of a live tape.
  std::vector<double>& mutable_values();

  double at(std::size_t r, std::size_t c) const;
  double scalar_value() const;

  void zero_grad();

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
  friend struct detail::NodeAccess;
};

// --- differentiable ops -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);  // Hadamard
Tensor scale(const Tensor& x, double c);
Tensor add_row_bias(const Tensor& x, const Tensor& bias);  // x[m,n] + bias[1,n]
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);
Tensor index_select_rows(const Tensor& x, std::vector<std::size_t> rows);
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor mean_all(const Tensor& x);
// out[r] = mean of src rows listed in groups[r]; empty group -> zero row.
Tensor scatter_mean(const Tensor& src,
                    std::vector<std::vector<std::size_t>> groups);
// out[r] = sum_k weights[r][k] * src[groups[r][k]].
Tensor scatter_weighted_sum(const Tensor& src,
                            std::vector<std::vector<std::size_t>> groups,
                            std::vector<std::vector<double>> weights);
Tensor reshape(const Tensor& x, Shape new_shape);

// Runs reverse-mode accumulation from a scalar loss. Throws NumericError if
// the loss is not finite.
void backward(const Tensor& scalar_loss);

}  // namespace ficots
