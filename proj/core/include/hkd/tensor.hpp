// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hkd {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

// One vertex of the dynamic tape. Values are written once by the producing
// op; only parameter leaves may be mutated afterwards (by optimizers).
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until the first backward touches it
  bool requires_grad = false;
  bool is_leaf = true;
  bool op_output = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor of doubles with optional gradient tracking.
///
/// A Tensor is a cheap shared handle. Copies refer to the same storage; the
/// values of op outputs never change after construction.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node);

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }
  double item() const;

  /// Writable view of a leaf's values. Throws ContractError on op outputs.
  std::span<double> mutable_data();

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  /// Accumulated gradient; empty span when nothing has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  /// Fresh leaf holding a copy of the values, with no gradient history.
  Tensor clone(bool requires_grad) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode sweep from a single-element tensor. Leaf gradients
/// accumulate across calls; use zero_grad / zero_grads to reset.
void backward(const Tensor& scalar_loss);

void zero_grads(std::span<Tensor> tensors);

bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Builds an op output. When recording is enabled and any input tracks
// gradients, the output is linked to all inputs and `fn` is kept for replay.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs, BackwardFn fn);
Tensor make_result(Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs, BackwardFn fn);

}  // namespace detail

}  // namespace hkd
