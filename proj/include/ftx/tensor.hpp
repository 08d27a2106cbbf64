#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ftx {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized on first accumulation, empty before
  bool requires_grad = false;  // leaf marker
  bool on_graph = false;       // gradient flows to or through this tensor

  std::size_t size() const { return data.size(); }
  void accumulate(const double* g, std::size_t n);
};

using ImplPtr = std::shared_ptr<TensorImpl>;

}  // namespace detail

// Dense row-major tensor of doubles. Copies are shallow handles onto shared
// storage; ops return fresh tensors. Reverse-mode gradients are recorded on
// the thread-local Tape whenever an input participates in the graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  double value() const;  // single-element tensors
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  std::vector<double>& data();
  const std::vector<double>& data() const;

  bool requires_grad() const;
  bool on_graph() const;
  // Accumulated gradient; empty until backward() reaches this tensor.
  const std::vector<double>& grad() const;
  void zero_grad();

  detail::ImplPtr impl() const { return impl_; }

 private:
  explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}
  detail::ImplPtr impl_;

  friend Tensor make_op_output(Shape shape, std::vector<double> data,
                               bool track);
};

// Per-thread record of differentiable ops in creation (topological) order.
// The tape is rebuilt each forward pass; reset() re-arms backward().
class Tape {
 public:
  static Tape& active();

  void reset();
  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void record(std::function<void()> pull) { nodes_.push_back(std::move(pull)); }

 private:
  friend void backward(const Tensor& loss);
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

// Suspends graph recording within a scope (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// --- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Same-shape elementwise add, or bias-row broadcast [m x n] + [n].
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor sigmoid(const Tensor& a);

// Elementwise sqrt(re^2 + im^2). Gradient d/d(re) = re / A, zeroed where
// A < 1e-12 to avoid the singularity at the origin.
Tensor amplitude(const Tensor& re, const Tensor& im);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);
Tensor transpose(const Tensor& a);  // 2-D
Tensor reshape(const Tensor& a, Shape shape);
// Explicit broadcast of a length-n vector to m rows.
Tensor expand_rows(const Tensor& row, std::size_t m);

Tensor sum(const Tensor& a, std::size_t axis);   // 2-D -> 1-D
Tensor mean(const Tensor& a, std::size_t axis);  // 2-D -> 1-D
Tensor sum_all(const Tensor& a);                 // -> scalar
Tensor mean_all(const Tensor& a);                // -> scalar

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps);

Tensor mse(const Tensor& a, const Tensor& b);  // mean over all elements
Tensor mae(const Tensor& a, const Tensor& b);

// Reverse pass from a scalar loss over the active tape. Errors on a
// non-scalar loss, an empty tape, or a tape already consumed.
void backward(const Tensor& loss);

}  // namespace ftx
