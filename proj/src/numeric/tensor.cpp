#include "copyhan/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <string_view>
#include <unordered_set>

#include "copyhan/errors.hpp"

namespace copyhan {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_to_string(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  n->shape = std::move(shape);
  n->data = std::move(data);
  return n;
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return from_node(new_node(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  return from_node(new_node(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return from_data({1, n}, std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t = from_data(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  if (s.size() != 2) throw DimensionError("expected a matrix, got " + shape_to_string(s));
  return s[0];
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.size() != 2) throw DimensionError("expected a matrix, got " + shape_to_string(s));
  return s[1];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("use of undefined tensor");
  if (!node_->parents.empty()) throw ContractError("cannot mutate a non-leaf tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const std::size_t nc = cols();
  if (r >= rows() || c >= nc) throw ContractError("index out of range");
  return node_->data[r * nc + c];
}

std::vector<double> Tensor::row_values(std::size_t r) const {
  const std::size_t nc = cols();
  if (r >= rows()) throw ContractError("row index out of range");
  return {node_->data.begin() + static_cast<std::ptrdiff_t>(r * nc),
          node_->data.begin() + static_cast<std::ptrdiff_t>((r + 1) * nc)};
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("use of undefined tensor");
  if (!node_->parents.empty()) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = on;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return from_data(shape(), node_->data); }

std::uint64_t Tensor::id() const { return node_ ? node_->id : 0; }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

void Tensor::backward() const {
  if (!node_) throw ContractError("backward on undefined tensor");
  if (numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Collect the reachable subgraph once; creation order is a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  node_->grad_buffer()[0] += 1.0;
  for (detail::Node* n : order) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior gradients are no longer needed; leaves keep theirs.
  for (detail::Node* n : order) {
    if (!n->parents.empty()) n->grad.clear();
  }
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor detail::make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                           const char* op, BackwardFn backward) {
#ifndef NDEBUG
  for (double v : data) {
    if (std::string_view(op) == "masked_fill") break;
    if (!std::isfinite(v)) {
      bool inputs_finite = true;
      for (const Tensor& t : inputs) {
        for (double x : t.data()) inputs_finite = inputs_finite && std::isfinite(x);
      }
      if (inputs_finite) throw NumericalError(std::string("non-finite output from op ") + op);
      break;
    }
  }
#endif
  auto node = new_node(std::move(shape), std::move(data));
  node->op = op;
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace copyhan
