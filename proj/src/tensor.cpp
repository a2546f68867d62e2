#include "medex/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "medex/errors.hpp"

namespace medex {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ShapeError("tensor rank must be 1 or 2, got " + shape_string(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("zero dimension in shape " + shape_string(shape));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

using detail::Node;

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---- Tensor ----

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<double>(product(shape), 0.0), requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (product(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({m, n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return values().size(); }

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }

std::size_t Tensor::cols() const { return shape().back(); }

std::span<const double> Tensor::values() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string(shape()));
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->ensure_grad();
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

Tensor Tensor::clone() const { return Tensor(shape(), node_->value, node_->requires_grad); }

// ---- grad mode ----

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- tape ----

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.requires_grad()) return tape;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

std::size_t Tape::position(const Tensor& t) const {
  auto it = std::find(nodes_.begin(), nodes_.end(), t.node().get());
  return static_cast<std::size_t>(it - nodes_.begin());
}

std::vector<std::size_t> Tape::input_positions(std::size_t i) const {
  std::vector<std::size_t> out;
  for (const auto& in : nodes_.at(i)->inputs) {
    if (!in->requires_grad) continue;
    auto it = std::find(nodes_.begin(), nodes_.end(), in.get());
    out.push_back(static_cast<std::size_t>(it - nodes_.begin()));
  }
  return out;
}

void Tape::replay() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ContractError("backward() needs a scalar root, got " +
                        (root.defined() ? shape_string(root.shape()) : std::string("undefined")));
  }
  if (!root.requires_grad()) return;
  Tape tape = Tape::record(root);
  // Interior buffers restart from zero; leaves accumulate across calls.
  for (std::size_t i = 0; i < tape.size(); ++i) {
    Node* node = tape.nodes_[i];
    if (!node->is_leaf()) node->grad.assign(node->value.size(), 0.0);
  }
  root.node()->ensure_grad()[0] += 1.0;
  tape.replay();
}

void zero_grad(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

namespace detail {

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
  }
  Tensor out(std::move(shape), std::move(values), false);
  if (!g_grad_enabled) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.inputs.reserve(inputs.size());
  for (auto& t : inputs) node.inputs.push_back(t.node());
  node.backward = std::move(backward_fn);
  return out;
}

}  // namespace detail

namespace {

// Gradient sink for input `i` of `node`, or nullptr if that input needs none.
double* grad_of(Node& node, std::size_t i) {
  Node& in = *node.inputs[i];
  return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

}  // namespace

// ---- operations ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return detail::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    const auto& A = self.inputs[0]->value;
    const auto& B = self.inputs[1]->value;
    if (double* ga = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (double* gb = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return detail::make_result("transpose", {n, m}, std::move(out), {a}, [m, n](Node& self) {
    double* ga = grad_of(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return detail::make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = grad_of(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return detail::make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& A = self.inputs[0]->value;
    const auto& B = self.inputs[1]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * B[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * A[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return detail::make_result("scale", a.shape(), std::move(out), {a}, [factor](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.numel() != n) {
    throw ShapeError("add_row: bias " + shape_string(bias.shape()) + " does not fit " +
                     shape_string(a.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return detail::make_result("add_row", a.shape(), std::move(out), {a, bias},
                             [m, n](Node& self) {
                               if (double* g = grad_of(self, 0))
                                 for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
                               if (double* g = grad_of(self, 1))
                                 for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < n; ++j)
                                     g[j] += self.grad[i * n + j];
                             });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_result("relu", a.shape(), std::move(out), {a}, [](Node& self) {
    double* g = grad_of(self, 0);
    const auto& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (x[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &av[i * n];
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return detail::make_result("softmax_rows", a.shape(), out, {a}, [m, n](Node& self) {
    double* g = grad_of(self, 0);
    const auto& y = self.value;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t m = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                     shape_string(bias.shape()) + " do not fit " + shape_string(x.shape()));
  }
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> normalized(m * d), inv_std(m), out(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &xv[i * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      normalized[i * d + j] = (row[j] - mu) * inv_std[i];
      out[i * d + j] = normalized[i * d + j] * gv[j] + bv[j];
    }
  }
  return detail::make_result(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [m, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = self.inputs[1]->value;
        double* gx = grad_of(self, 0);
        double* gg = grad_of(self, 1);
        double* gb = grad_of(self, 2);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < m; ++i) {
          const double* dy = &self.grad[i * d];
          const double* xh = &normalized[i * d];
          if (gg)
            for (std::size_t j = 0; j < d; ++j) gg[j] += dy[j] * xh[j];
          if (gb)
            for (std::size_t j = 0; j < d; ++j) gb[j] += dy[j];
          if (gx) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[j] * gv[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[j];
            }
            mean_dxh *= inv_d;
            mean_dxh_xh *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[j] * gv[j];
              gx[i * d + j] += inv_std[i] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
            }
          }
        }
      });
}

Tensor sum(const Tensor& a) {
  auto av = a.values();
  const double total = std::accumulate(av.begin(), av.end(), 0.0);
  return detail::make_result("sum", {1}, {total}, {a}, [](Node& self) {
    double* g = grad_of(self, 0);
    const std::size_t n = self.inputs[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw ContractError("logsumexp of an empty sequence");
  const double mx = *std::max_element(values.begin(), values.end());
  if (std::isinf(mx)) return mx;
  double total = 0.0;
  for (double v : values) total += std::exp(v - mx);
  return mx + std::log(total);
}

Tensor logsumexp(const Tensor& a) {
  const double lse = logsumexp(a.values());
  return detail::make_result("logsumexp", {1}, {lse}, {a}, [lse](Node& self) {
    double* g = grad_of(self, 0);
    const auto& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[0] * std::exp(x[i] - lse);
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  const std::size_t m = a.rows(), n = a.cols();
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  std::vector<double> out;
  out.reserve(indices.size() * n);
  auto av = a.values();
  for (auto r : indices) {
    if (r >= m) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                       shape_string(a.shape()));
    }
    out.insert(out.end(), av.begin() + static_cast<std::ptrdiff_t>(r * n),
               av.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const std::size_t rows = idx.size();
  return detail::make_result("gather_rows", {rows, n}, std::move(out), {a},
                             [n, idx = std::move(idx)](Node& self) {
                               double* g = grad_of(self, 0);
                               for (std::size_t k = 0; k < idx.size(); ++k)
                                 for (std::size_t j = 0; j < n; ++j)
                                   g[idx[k] * n + j] += self.grad[k * n + j];
                             });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || begin + count > n) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     shape_string(a.shape()));
  }
  std::vector<double> out(m * count);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = av[i * n + begin + j];
  return detail::make_result("slice_cols", {m, count}, std::move(out), {a},
                             [m, n, begin, count](Node& self) {
                               double* g = grad_of(self, 0);
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < count; ++j)
                                   g[i * n + begin + j] += self.grad[i * count + j];
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row count mismatch " + shape_string(parts[0].shape()) +
                       " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j)
        out[i * total + offset + j] = pv[i * widths[k] + j];
    offset += widths[k];
  }
  return detail::make_result(
      "concat_cols", {m, total}, std::move(out), {parts.begin(), parts.end()},
      [m, total, widths = std::move(widths)](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (double* g = grad_of(self, k))
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j)
                g[i * widths[k] + j] += self.grad[i * total + offset + j];
          offset += widths[k];
        }
      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::vector<std::size_t> sizes;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column count mismatch " + shape_string(parts[0].shape()) +
                       " vs " + shape_string(p.shape()));
    }
    sizes.push_back(p.numel());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  const std::size_t m = out.size() / n;
  return detail::make_result("concat_rows", {m, n}, std::move(out), {parts.begin(), parts.end()},
                             [sizes = std::move(sizes)](Node& self) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < sizes.size(); ++k) {
                                 if (double* g = grad_of(self, k))
                                   for (std::size_t i = 0; i < sizes[k]; ++i)
                                     g[i] += self.grad[offset + i];
                                 offset += sizes[k];
                               }
                             });
}

Tensor mean_rows(const Tensor& a, std::size_t first, std::size_t last) {
  const std::size_t m = a.rows(), n = a.cols();
  if (first > last || last >= m) {
    throw ContractError("mean_rows: rows [" + std::to_string(first) + ", " +
                        std::to_string(last) + "] out of range for " + shape_string(a.shape()));
  }
  const double inv = 1.0 / static_cast<double>(last - first + 1);
  std::vector<double> out(n, 0.0);
  auto av = a.values();
  for (std::size_t i = first; i <= last; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  for (auto& v : out) v *= inv;
  return detail::make_result("mean_rows", {1, n}, std::move(out), {a},
                             [first, last, n, inv](Node& self) {
                               double* g = grad_of(self, 0);
                               for (std::size_t i = first; i <= last; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   g[i * n + j] += inv * self.grad[j];
                             });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape);
  if (product(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return detail::make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t m = logits.rows(), c = logits.cols();
  if (targets.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(logits.shape()));
  }
  auto lv = logits.values();
  std::vector<double> probs(m * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] >= c) {
      throw ContractError("cross_entropy: target " + std::to_string(targets[i]) +
                          " outside " + std::to_string(c) + " classes");
    }
    auto row = lv.subspan(i * c, c);
    const double lse = logsumexp(row);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
    loss += lse - row[targets[i]];
  }
  loss /= static_cast<double>(m);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return detail::make_result(
      "cross_entropy", {1}, {loss}, {logits},
      [m, c, probs = std::move(probs), tgt = std::move(tgt)](Node& self) {
        double* g = grad_of(self, 0);
        const double w = self.grad[0] / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < c; ++j) g[i * c + j] += w * probs[i * c + j];
          g[i * c + tgt[i]] -= w;
        }
      });
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng, bool requires_grad) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> values(rows * cols);
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

// ---- finite differences ----

double finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");
  zero_grad(params);
  {
    Tensor y = f();
    backward(y);
  }
  double worst = 0.0;
  NoGradGuard no_grad;
  for (auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_diff_check: non-finite evaluation at coordinate " +
                           std::to_string(i));
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const std::function<Tensor()>& f, Tensor params, double h) {
  return finite_diff_check(f, std::span<Tensor>(&params, 1), h);
}

}  // namespace medex
