#include "nptraj/tensor.hpp"

#include <sstream>

namespace nptraj {

std::string shape_str(const Shape& shape) {
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
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& shape, std::size_t data_len) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimension of size 0 in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != data_len) {
    throw DimensionError("data length " + std::to_string(data_len) + " does not match shape " +
                         shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor() : shape_{1}, data_(std::make_shared<std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(data))) {
  check_shape(shape_, data_->size());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_, shape_numel(shape_));
  data_ = std::make_shared<std::vector<double>>(shape_numel(shape_), fill);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  }
  return shape_[axis];
}

std::span<double> Tensor::mutable_data() {
  if (node_) throw ContractError("cannot mutate a tensor recorded on a tape");
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  return *data_;
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a rank-2 tensor, got " + shape_str(shape_));
  return (*data_)[row * shape_[1] + col];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() needs a single-element tensor, got " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor out = *this;
  out.node_.reset();
  return out;
}

Tensor Tape::watch(const Tensor& t) {
  Tensor out = t.detach();
  nodes_.push_back(Node{"leaf", {}, t.shape(), nullptr});
  out.node_ = NodeRef{this, nodes_.size() - 1};
  return out;
}

Tensor Tape::record(const char* op, Shape shape, std::vector<double> value,
                    std::span<const Tensor* const> inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(value));
  std::vector<std::ptrdiff_t> parents;
  parents.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    if (in->node_) {
      if (in->node_->tape != this) throw ContractError(std::string(op) + ": inputs recorded on a different tape");
      parents.push_back(static_cast<std::ptrdiff_t>(in->node_->index));
    } else {
      parents.push_back(-1);
    }
  }
  nodes_.push_back(Node{op, std::move(parents), out.shape(), std::move(backward)});
  out.node_ = NodeRef{this, nodes_.size() - 1};
  return out;
}

Gradients Tape::backward(const Tensor& root) const {
  if (!root.node_ || root.node_->tape != this) throw ContractError("backward: root is not recorded on this tape");
  if (root.size() != 1) throw ContractError("backward: root must be a scalar, got shape " + shape_str(root.shape()));

  const std::size_t root_index = root.node_->index;
  std::vector<std::vector<double>> grads(nodes_.size());
  grads[root_index].assign(1, 1.0);

  std::vector<std::vector<double>*> sinks;
  for (std::size_t k = root_index + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (grads[k].empty() || !node.backward) continue;
    sinks.assign(node.parents.size(), nullptr);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      const auto parent = node.parents[p];
      if (parent < 0) continue;
      auto& g = grads[static_cast<std::size_t>(parent)];
      if (g.empty()) g.assign(shape_numel(nodes_[static_cast<std::size_t>(parent)].shape), 0.0);
      sinks[p] = &g;
    }
    node.backward(grads[k], sinks);
  }

  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (const auto& n : nodes_) shapes.push_back(n.shape);
  return Gradients(this, std::move(grads), std::move(shapes));
}

bool Gradients::reached(const NodeRef& node) const {
  return node.tape == tape_ && node.index < grads_.size() && !grads_[node.index].empty();
}

Tensor Gradients::of(const NodeRef& node) const {
  if (node.tape != tape_ || node.index >= grads_.size()) throw ContractError("gradient requested for a foreign node");
  if (grads_[node.index].empty()) return Tensor(shapes_[node.index], 0.0);
  return Tensor(shapes_[node.index], grads_[node.index]);
}

Tensor Gradients::of(const Tensor& t) const {
  if (!t.node()) throw ContractError("gradient requested for an untracked tensor");
  return of(*t.node());
}

}  // namespace nptraj
