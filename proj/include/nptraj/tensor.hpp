#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nptraj/errors.hpp"

namespace nptraj {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tape;

// Handle to a node recorded on a tape.
struct NodeRef {
  Tape* tape = nullptr;
  std::size_t index = 0;

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

// Dense row-major f64 array. The buffer is shared between copies and is
// copy-on-write through mutable_data(), so passing tensors by value is cheap.
// A tensor produced by an op on a tracked input carries the node that
// recorded it.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(Shape shape, double fill = 0.0);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_->size(); }

  std::span<const double> data() const { return *data_; }
  const std::shared_ptr<const std::vector<double>> buffer() const { return data_; }
  // Throws ContractError on a tracked tensor: its value is already on a tape.
  std::span<double> mutable_data();

  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t row, std::size_t col) const;
  // Value of a single-element tensor.
  double item() const;

  bool tracked() const { return node_.has_value(); }
  const std::optional<NodeRef>& node() const { return node_; }
  Tensor detach() const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::optional<NodeRef> node_;
};

// Receives gradient contributions for the inputs of one recorded op. A null
// entry means that input is not tracked and needs no gradient.
using GradSinks = std::span<std::vector<double>* const>;
using BackwardFn = std::function<void(std::span<const double> grad_out, GradSinks sinks)>;

class Gradients;

// Define-by-run gradient tape. Nodes are appended in evaluation order, so
// every parent index is smaller than its child's.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Records t as a leaf and returns a tracked alias sharing its buffer.
  Tensor watch(const Tensor& t);

  // Records an op output. Inputs may be untracked; all tracked inputs must
  // belong to this tape.
  Tensor record(const char* op, Shape shape, std::vector<double> value,
                std::span<const Tensor* const> inputs, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  const char* op_name(std::size_t index) const { return nodes_[index].op; }
  const Shape& node_shape(std::size_t index) const { return nodes_[index].shape; }
  std::span<const std::ptrdiff_t> parents(std::size_t index) const { return nodes_[index].parents; }

  // Reverse sweep from a scalar root.
  Gradients backward(const Tensor& root) const;

 private:
  struct Node {
    const char* op;
    std::vector<std::ptrdiff_t> parents;  // -1 for untracked inputs
    Shape shape;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// d root / d node for every node reached by a backward sweep.
class Gradients {
 public:
  Gradients(const Tape* tape, std::vector<std::vector<double>> grads, std::vector<Shape> shapes)
      : tape_(tape), grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  bool reached(const NodeRef& node) const;
  // Gradient with respect to a tracked tensor; zeros when unreached.
  Tensor of(const Tensor& t) const;
  Tensor of(const NodeRef& node) const;

 private:
  const Tape* tape_;
  std::vector<std::vector<double>> grads_;
  std::vector<Shape> shapes_;
};

}  // namespace nptraj
