#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace copyhan {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

// One vertex of the define-by-run graph. Nodes are numbered in creation order,
// so every node's inputs carry smaller ids than the node itself.
struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

// Dense row-major array of doubles with an optional gradient slot. Copies share
// the underlying node (handle semantics), like most autograd tensors.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);
  // Leaf that records gradients.
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view; only allowed on graph leaves.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> row_values(std::size_t r) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Fresh leaf holding a copy of the values, cut from any graph.
  Tensor detach() const;
  // Reverse-mode sweep from a scalar. Leaf gradients accumulate.
  void backward() const;

  std::uint64_t id() const;
  const char* op_name() const;

  // Internal hooks for op implementations.
  static Tensor from_node(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled() noexcept;

// Disables graph recording on this thread while alive.
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

// Builds an op result; records parents and the backward rule only when grad
// mode is on and some input requires gradients.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   const char* op, BackwardFn backward);

}  // namespace detail

}  // namespace copyhan
