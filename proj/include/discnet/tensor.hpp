#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace discnet {

// Thrown when an op produces NaN/Inf from finite inputs, or when a
// numeric contract (missing gradient, non-scalar backward) is violated.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// Per-traversal gradient flow buffers, keyed by node identity.
using GradMap = std::unordered_map<const TensorImpl*, std::vector<double>>;
using BackwardFn =
    std::function<void(const std::vector<double>& grad_out, GradMap& flow)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until a backward traversal reaches it
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward_fn;  // empty for leaves
};

// Dense n-d array of doubles, row-major, with reverse-mode autodiff over a
// dynamically recorded graph. Value semantics: copies share the buffer;
// values are not mutated after an op records them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor ones_like(const Tensor& t);

  // Custom-op factory: records a graph node with an analytic backward rule.
  // The result requires grad iff any parent does. Output values are
  // finite-checked; a NaN/Inf raises NumericError tagged with op_name.
  static Tensor from_op(const std::string& op_name, Shape shape,
                        std::vector<double> values,
                        std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t numel() const { return static_cast<int64_t>(impl_->values.size()); }
  int64_t rank() const { return static_cast<int64_t>(impl_->shape.size()); }

  const std::vector<double>& values() const { return impl_->values; }
  double value_at(int64_t i) const { return impl_->values[i]; }
  double item() const;  // scalar only

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  void clear_grad() { impl_->grad.clear(); }

  // In-place overwrite of the raw buffer. Only the optimizer and
  // initialization use this; the graph must not be live across it.
  std::vector<double>& mutable_values() { return impl_->values; }

  // Accumulates d(this)/d(leaf) into every reachable requires_grad tensor.
  // Repeated calls accumulate; clear_grad resets.
  void backward() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

enum class EwKind { Add, Sub, Mul, Div };

// Elementwise with symmetric singleton broadcasting (equal rank, each dim
// pair equal or 1) or scalar rhs.
Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);
Tensor elementwise(EwKind kind, const Tensor& a, double b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);  // rank-2 only
Tensor transpose(const Tensor& a);                // rank-2 only

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sum(const Tensor& a);  // -> scalar
Tensor reshape(const Tensor& a, Shape new_shape);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  bool pass = false;
};

// Central-difference gradient check of a scalar-valued function at x.
// Entries where both gradients are below 1e-6 in magnitude are compared
// absolutely, otherwise relatively.
FiniteDiffReport finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
    double step, double tol);

void check_finite(const std::vector<double>& v, const std::string& op_name);

// Gradient-flow buffer for a node, created zero-filled on first touch.
// Custom backward rules accumulate into these.
std::vector<double>& flow_at(GradMap& flow, const TensorImpl* node);

}  // namespace discnet
