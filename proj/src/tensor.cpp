#include "discnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace discnet {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw std::invalid_argument("non-positive extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

void check_finite(const std::vector<double>& v, const std::string& op_name) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError("non-finite value produced by op '" + op_name + "'");
    }
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  int64_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->values.assign(static_cast<size_t>(n), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("value count does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::ones_like(const Tensor& t) { return full(t.shape(), 1.0); }

Tensor Tensor::from_op(const std::string& op_name, Shape shape,
                       std::vector<double> values, std::vector<Tensor> parents,
                       BackwardFn backward) {
  check_finite(values, op_name);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  auto impl = std::make_shared<TensorImpl>();
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("op '" + op_name + "': value count does not match shape");
  }
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = rg;
  if (rg) {
    for (const auto& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward);
  }
  return Tensor(std::move(impl));
}

double Tensor::item() const {
  if (numel() != 1) throw NumericError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->values[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw NumericError("tensor has no gradient");
  return impl_->grad;
}

std::vector<double>& flow_at(GradMap& flow, const TensorImpl* node) {
  auto it = flow.find(node);
  if (it == flow.end()) {
    it = flow.emplace(node, std::vector<double>(node->values.size(), 0.0)).first;
  }
  return it->second;
}

namespace {

void topo_visit(const std::shared_ptr<TensorImpl>& node,
                std::unordered_set<const TensorImpl*>& seen,
                std::vector<std::shared_ptr<TensorImpl>>& order) {
  if (seen.count(node.get())) return;
  seen.insert(node.get());
  for (const auto& p : node->parents) topo_visit(p, seen, order);
  order.push_back(node);
}

}  // namespace

void Tensor::backward() const {
  if (numel() != 1) throw NumericError("backward() requires a scalar loss");
  if (!impl_->requires_grad) {
    throw NumericError("backward() on a tensor with no graph (no requires_grad ancestry)");
  }
  std::unordered_set<const TensorImpl*> seen;
  std::vector<std::shared_ptr<TensorImpl>> order;
  topo_visit(impl_, seen, order);

  GradMap flow;
  flow[impl_.get()] = {1.0};
  // Reverse topological order: every consumer runs before its producer.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = it->get();
    auto fit = flow.find(node);
    if (fit == flow.end()) continue;  // not on a grad path
    if (node->backward_fn) node->backward_fn(fit->second, flow);
  }
  // Persist accumulated gradients on requires_grad tensors.
  for (const auto& node : order) {
    if (!node->requires_grad) continue;
    auto fit = flow.find(node.get());
    if (fit == flow.end()) continue;
    if (node->grad.empty()) node->grad.assign(node->values.size(), 0.0);
    for (size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += fit->second[i];
  }
}

namespace {

// Broadcast helpers: equal rank, every dim pair equal or 1.
bool broadcast_shape(const Shape& a, const Shape& b, Shape& out) {
  if (a.size() != b.size()) return false;
  out.resize(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) out[i] = a[i];
    else if (a[i] == 1) out[i] = b[i];
    else if (b[i] == 1) out[i] = a[i];
    else return false;
  }
  return true;
}

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 0);
  int64_t acc = 1;
  for (int64_t i = static_cast<int64_t>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

const char* ew_name(EwKind k) {
  switch (k) {
    case EwKind::Add: return "add";
    case EwKind::Sub: return "sub";
    case EwKind::Mul: return "mul";
    case EwKind::Div: return "div";
  }
  return "?";
}

double ew_apply(EwKind k, double x, double y) {
  switch (k) {
    case EwKind::Add: return x + y;
    case EwKind::Sub: return x - y;
    case EwKind::Mul: return x * y;
    case EwKind::Div: return x / y;
  }
  return 0.0;
}

}  // namespace

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  Shape out_shape;
  if (!broadcast_shape(a.shape(), b.shape(), out_shape)) {
    throw std::invalid_argument(std::string(ew_name(kind)) + ": shapes " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                                " are not broadcast-compatible");
  }
  const int64_t n = shape_numel(out_shape);
  const auto out_st = row_major_strides(out_shape);
  const auto a_st = row_major_strides(a.shape());
  const auto b_st = row_major_strides(b.shape());
  const size_t rank = out_shape.size();

  // Flat index of out -> flat indices of a and b under singleton broadcast.
  auto map_index = [&](int64_t flat, const Shape& s, const std::vector<int64_t>& st) {
    int64_t idx = 0;
    for (size_t d = 0; d < rank; ++d) {
      int64_t coord = (flat / out_st[d]) % out_shape[d];
      if (s[d] != 1) idx += coord * st[d];
    }
    return idx;
  };

  std::vector<int64_t> ai(static_cast<size_t>(n)), bi(static_cast<size_t>(n));
  std::vector<double> vals(static_cast<size_t>(n));
  const bool same = a.shape() == b.shape();
  for (int64_t i = 0; i < n; ++i) {
    int64_t ia = same ? i : map_index(i, a.shape(), a_st);
    int64_t ib = same ? i : map_index(i, b.shape(), b_st);
    ai[static_cast<size_t>(i)] = ia;
    bi[static_cast<size_t>(i)] = ib;
    vals[static_cast<size_t>(i)] = ew_apply(kind, a.value_at(ia), b.value_at(ib));
  }

  auto a_impl = a.impl();
  auto b_impl = b.impl();
  auto backward = [kind, ai = std::move(ai), bi = std::move(bi), a_impl, b_impl](
                      const std::vector<double>& g, GradMap& flow) {
    if (a_impl->requires_grad || !a_impl->parents.empty() || a_impl->backward_fn) {
      auto& ga = flow_at(flow, a_impl.get());
      for (size_t i = 0; i < g.size(); ++i) {
        double d = 0.0;
        switch (kind) {
          case EwKind::Add: d = g[i]; break;
          case EwKind::Sub: d = g[i]; break;
          case EwKind::Mul: d = g[i] * b_impl->values[static_cast<size_t>(bi[i])]; break;
          case EwKind::Div: d = g[i] / b_impl->values[static_cast<size_t>(bi[i])]; break;
        }
        ga[static_cast<size_t>(ai[i])] += d;
      }
    }
    if (b_impl->requires_grad || !b_impl->parents.empty() || b_impl->backward_fn) {
      auto& gb = flow_at(flow, b_impl.get());
      for (size_t i = 0; i < g.size(); ++i) {
        double av = a_impl->values[static_cast<size_t>(ai[i])];
        double bv = b_impl->values[static_cast<size_t>(bi[i])];
        double d = 0.0;
        switch (kind) {
          case EwKind::Add: d = g[i]; break;
          case EwKind::Sub: d = -g[i]; break;
          case EwKind::Mul: d = g[i] * av; break;
          case EwKind::Div: d = -g[i] * av / (bv * bv); break;
        }
        gb[static_cast<size_t>(bi[i])] += d;
      }
    }
  };
  return Tensor::from_op(ew_name(kind), out_shape, std::move(vals), {a, b},
                         std::move(backward));
}

Tensor elementwise(EwKind kind, const Tensor& a, double b) {
  // scalar promoted to a rank-matched all-singleton tensor
  Shape s(std::max<size_t>(a.shape().size(), 1), 1);
  return elementwise(kind, a, Tensor::from_values(s, {b}));
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Add, a, b); }
Tensor add(const Tensor& a, double b) { return elementwise(EwKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Mul, a, b); }
Tensor mul(const Tensor& a, double b) { return elementwise(EwKind::Mul, a, b); }
Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul: both operands must be rank-2");
  }
  const int64_t m = a.shape()[0], k = a.shape()[1];
  const int64_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> vals(static_cast<size_t>(m * n), 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double aip = av[static_cast<size_t>(i * k + p)];
      for (int64_t j = 0; j < n; ++j) {
        vals[static_cast<size_t>(i * n + j)] += aip * bv[static_cast<size_t>(p * n + j)];
      }
    }
  }
  auto a_impl = a.impl();
  auto b_impl = b.impl();
  auto backward = [m, k, n, a_impl, b_impl](const std::vector<double>& g, GradMap& flow) {
    // dA = dC * B^T
    auto& ga = flow_at(flow, a_impl.get());
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        const double gij = g[static_cast<size_t>(i * n + j)];
        for (int64_t p = 0; p < k; ++p)
          ga[static_cast<size_t>(i * k + p)] += gij * b_impl->values[static_cast<size_t>(p * n + j)];
      }
    // dB = A^T * dC
    auto& gb = flow_at(flow, b_impl.get());
    for (int64_t p = 0; p < k; ++p)
      for (int64_t i = 0; i < m; ++i) {
        const double aip = a_impl->values[static_cast<size_t>(i * k + p)];
        for (int64_t j = 0; j < n; ++j)
          gb[static_cast<size_t>(p * n + j)] += aip * g[static_cast<size_t>(i * n + j)];
      }
  };
  return Tensor::from_op("matmul", {m, n}, std::move(vals), {a, b}, std::move(backward));
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
  const int64_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> vals(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      vals[static_cast<size_t>(j * m + i)] = a.value_at(i * n + j);
  auto a_impl = a.impl();
  auto backward = [m, n, a_impl](const std::vector<double>& g, GradMap& flow) {
    auto& ga = flow_at(flow, a_impl.get());
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        ga[static_cast<size_t>(i * n + j)] += g[static_cast<size_t>(j * m + i)];
  };
  return Tensor::from_op("transpose", {n, m}, std::move(vals), {a}, std::move(backward));
}

Tensor relu(const Tensor& a) {
  std::vector<double> vals(a.values().size());
  for (size_t i = 0; i < vals.size(); ++i) vals[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  auto a_impl = a.impl();
  auto backward = [a_impl](const std::vector<double>& g, GradMap& flow) {
    auto& ga = flow_at(flow, a_impl.get());
    for (size_t i = 0; i < g.size(); ++i)
      if (a_impl->values[i] > 0.0) ga[i] += g[i];
  };
  return Tensor::from_op("relu", a.shape(), std::move(vals), {a}, std::move(backward));
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> vals(a.values().size());
  for (size_t i = 0; i < vals.size(); ++i) {
    const double x = a.values()[i];
    // Split form avoids overflow of exp at large |x|.
    vals[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                       : std::exp(x) / (1.0 + std::exp(x));
  }
  auto a_impl = a.impl();
  auto out_vals = vals;  // sigma(x) reused in the backward rule
  auto backward = [a_impl, out_vals = std::move(out_vals)](const std::vector<double>& g,
                                                           GradMap& flow) {
    auto& ga = flow_at(flow, a_impl.get());
    for (size_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * out_vals[i] * (1.0 - out_vals[i]);
  };
  return Tensor::from_op("sigmoid", a.shape(), std::move(vals), {a}, std::move(backward));
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto a_impl = a.impl();
  auto backward = [a_impl](const std::vector<double>& g, GradMap& flow) {
    auto& ga = flow_at(flow, a_impl.get());
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  };
  return Tensor::from_op("sum", {1}, {s}, {a}, std::move(backward));
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    throw std::invalid_argument("reshape: element count mismatch, " +
                                shape_str(a.shape()) + " -> " + shape_str(new_shape));
  }
  auto a_impl = a.impl();
  auto backward = [a_impl](const std::vector<double>& g, GradMap& flow) {
    auto& ga = flow_at(flow, a_impl.get());
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return Tensor::from_op("reshape", std::move(new_shape), a.values(), {a},
                         std::move(backward));
}

FiniteDiffReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                                   const Tensor& x, double step, double tol) {
  if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");

  Tensor probe = Tensor::from_values(x.shape(), x.values(), /*requires_grad=*/true);
  Tensor y = f(probe);
  y.backward();
  const std::vector<double> analytic = probe.grad();

  FiniteDiffReport report;
  std::vector<double> base = x.values();
  for (size_t i = 0; i < base.size(); ++i) {
    auto eval_at = [&](double v) {
      std::vector<double> shifted = base;
      shifted[i] = v;
      Tensor out = f(Tensor::from_values(x.shape(), shifted));
      double val = out.item();
      if (!std::isfinite(val)) throw NumericError("finite_diff_check: f non-finite at probe point");
      return val;
    };
    const double numeric = (eval_at(base[i] + step) - eval_at(base[i] - step)) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max(std::abs(a), std::abs(numeric));
    const double err = denom < 1e-6 ? std::abs(a - numeric) : std::abs(a - numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace discnet
