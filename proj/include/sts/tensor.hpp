#pragma once

// Dense row-major float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto an immutable node. Operations on tensors that
// require gradients record their inputs and a local gradient rule; calling
// backward() on a scalar result walks the recorded graph once in reverse
// topological order and accumulates gradients into every participating leaf.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sts {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  /// Copies `values` into a new leaf. Throws DimensionError if the extents do
  /// not match the value count and NumericError on NaN/Inf.
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::vector<double> to_vector() const;
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  bool is_leaf() const;
  const char* op_name() const;

  /// Accumulated gradient; all zeros if the tensor never took part in a backward pass.
  std::vector<double> grad() const;
  bool has_grad() const;
  void zero_grad();

  /// Only valid on leaves: optimisers and checkpoint loading overwrite
  /// parameters in place so that handles held by models stay valid.
  std::span<double> mutable_data();

  /// Detached copy of the values; never requires grad.
  Tensor detach() const;

  void backward() const;

  const detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape, std::vector<double>, const char*, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);
  friend class ComputeGraph;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Builds an op result. The gradient rule is kept only when grad mode is on and
/// at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward);

/// Nodes reachable from a root through grad-requiring edges, in topological order
/// (every input precedes its consumers).
class ComputeGraph {
 public:
  struct Record {
    std::size_t id;
    std::string op;
    std::vector<std::size_t> inputs;
  };

  static ComputeGraph trace(const Tensor& root);

  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  /// Seeds d(root)/d(root) = 1 and propagates in reverse order.
  void backward();

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  std::vector<Record> records_;
};

/// Disables graph recording for its lifetime (evaluation passes).
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

namespace testing {

/// Scales the gradient flowing out of every node of the named op while alive.
/// Used as a negative control for gradient checking.
class ScopedGradientFault {
 public:
  ScopedGradientFault(std::string op, double scale);
  ~ScopedGradientFault();
  ScopedGradientFault(const ScopedGradientFault&) = delete;
  ScopedGradientFault& operator=(const ScopedGradientFault&) = delete;
};

}  // namespace testing

}  // namespace sts
