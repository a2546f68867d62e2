#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "medex/random.hpp"

namespace medex {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major double tensor of rank 1 or 2 with an optional gradient slot.
//
// Tensor is a handle: copies share storage and graph position. Use clone() for
// an independent leaf.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  // Zero-filled view when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Topologically ordered record of the operations reachable from a root.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  // Position of a tensor's node on the tape, or size() if absent.
  std::size_t position(const Tensor& t) const;
  std::vector<std::size_t> input_positions(std::size_t i) const;

  // Replays backward rules from the last entry to the first.
  void replay();

 private:
  friend void backward(const Tensor& root);
  std::vector<detail::Node*> nodes_;
};

// Accumulates d(root)/d(leaf) into every leaf that requires grad.
void backward(const Tensor& root);

void zero_grad(std::span<Tensor> params);

// ---- operations ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a [m×n] + bias [n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor logsumexp(const Tensor& a);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
// Mean of rows first..last inclusive, as a [1×n] tensor.
Tensor mean_rows(const Tensor& a, std::size_t first, std::size_t last);
Tensor reshape(const Tensor& a, Shape shape);
// Mean over rows of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

double logsumexp(std::span<const double> values);

// Matrix with entries uniform in ±sqrt(6 / (rows + cols)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng, bool requires_grad = true);

// Max relative error |a-b|/max(1,|a|,|b|) between central differences and the
// autodiff gradient over every coordinate of every parameter.
double finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                         double h = 1e-5);
double finite_diff_check(const std::function<Tensor()>& f, Tensor params, double h = 1e-5);

// ---- helpers for custom operations ----

namespace detail {

// Builds an op output. Inputs are recorded and the backward rule attached only
// when grad mode is on and some input requires grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn);

}  // namespace detail

}  // namespace medex
