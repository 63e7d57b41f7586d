#include "sts/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "sts/errors.hpp"

namespace sts {

namespace {

thread_local bool g_grad_enabled = true;

struct FaultState {
  std::string op;
  double scale = 1.0;
  bool active = false;
};

thread_local FaultState g_fault;

void check_finite(std::span<const double> values, const char* op) {
  double probe = 0.0;
  for (double v : values) probe += v * 0.0;
  if (probe != 0.0) throw NumericError(std::string("non-finite value produced by ") + op);
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
  if (sts::numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " needs " + std::to_string(sts::numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  check_finite(values, "tensor construction");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = sts::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::vector<double> Tensor::to_vector() const { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::is_leaf() const { return node_->inputs.empty(); }

const char* Tensor::op_name() const { return node_->op; }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::zero_grad() { node_->grad.clear(); }

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw ContractError("mutable_data() is only available on leaf tensors");
  return node_->data;
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar, got shape " + to_string(shape()));
  }
  if (!requires_grad()) return;
  ComputeGraph::trace(*this).backward();
}

Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
  check_finite(values, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  const bool track = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
                       return t.requires_grad();
                     });
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

ComputeGraph ComputeGraph::trace(const Tensor& root) {
  ComputeGraph graph;
  if (!root.defined() || !root.requires_grad()) return graph;

  std::unordered_map<const detail::Node*, std::size_t> ids;
  // Iterative post-order DFS; a node is emitted after all of its inputs.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  std::unordered_map<const detail::Node*, bool> seen;
  stack.emplace_back(root.node_.get(), 0);
  seen[root.node_.get()] = true;
  std::unordered_map<const detail::Node*, std::shared_ptr<detail::Node>> owner;
  owner[root.node_.get()] = root.node_;

  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const auto& in = node->inputs[next++];
      if (in->requires_grad && !seen[in.get()]) {
        seen[in.get()] = true;
        owner[in.get()] = in;
        stack.emplace_back(in.get(), 0);
      }
      continue;
    }
    Record rec;
    rec.id = graph.nodes_.size();
    rec.op = node->op;
    for (const auto& in : node->inputs) {
      if (in->requires_grad) rec.inputs.push_back(ids.at(in.get()));
    }
    ids[node] = rec.id;
    graph.nodes_.push_back(owner.at(node));
    graph.records_.push_back(std::move(rec));
    stack.pop_back();
  }
  return graph;
}

void ComputeGraph::backward() {
  if (nodes_.empty()) return;
  auto& root = *nodes_.back();
  auto& seed = root.ensure_grad();
  for (double& g : seed) g += 1.0;

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& node = *nodes_[i];
    if (node.inputs.empty() || !node.backward || node.grad.empty()) continue;
    if (g_fault.active && g_fault.op == node.op) {
      for (double& g : node.grad) g *= g_fault.scale;
    }
    node.backward(node);
    // Intermediate gradients are consumed; only leaves keep theirs.
    std::vector<double>().swap(node.grad);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace testing {

ScopedGradientFault::ScopedGradientFault(std::string op, double scale) {
  g_fault.op = std::move(op);
  g_fault.scale = scale;
  g_fault.active = true;
}

ScopedGradientFault::~ScopedGradientFault() { g_fault = FaultState{}; }

}  // namespace testing

}  // namespace sts
