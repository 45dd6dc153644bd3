#pragma once

#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "nptraj/tensor.hpp"

// Differentiable tensor operations. Each op records itself on the tape of
// its tracked inputs; with no tracked input it only computes the value.
namespace nptraj::ops {

enum class UnaryKind { kTanh, kRelu, kSigmoid, kSoftplus, kExp, kLog, kNeg, kSquare };
enum class BinaryKind { kAdd, kSub, kMul, kDiv };
enum class ReduceKind { kSum, kMean };

const char* name(UnaryKind kind);
const char* name(BinaryKind kind);
const char* name(ReduceKind kind);

// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor unary(UnaryKind kind, const Tensor& x);
inline Tensor tanh(const Tensor& x) { return unary(UnaryKind::kTanh, x); }
inline Tensor relu(const Tensor& x) { return unary(UnaryKind::kRelu, x); }
inline Tensor sigmoid(const Tensor& x) { return unary(UnaryKind::kSigmoid, x); }
inline Tensor softplus(const Tensor& x) { return unary(UnaryKind::kSoftplus, x); }
inline Tensor exp(const Tensor& x) { return unary(UnaryKind::kExp, x); }
inline Tensor log(const Tensor& x) { return unary(UnaryKind::kLog, x); }
inline Tensor neg(const Tensor& x) { return unary(UnaryKind::kNeg, x); }
inline Tensor square(const Tensor& x) { return unary(UnaryKind::kSquare, x); }

// b's shape must equal a's shape or be a suffix of it; b then repeats along
// a's leading axes.
Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::kAdd, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::kSub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::kMul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return binary(BinaryKind::kDiv, a, b); }

// scale * x + offset with constant scalars.
Tensor scale_shift(const Tensor& x, double scale, double offset = 0.0);

// Removes `axis`. A rank-1 input reduces to shape [1].
Tensor reduce(ReduceKind kind, const Tensor& x, std::size_t axis);
inline Tensor sum(const Tensor& x, std::size_t axis) { return reduce(ReduceKind::kSum, x, axis); }
inline Tensor mean(const Tensor& x, std::size_t axis) { return reduce(ReduceKind::kMean, x, axis); }
// Sum of every entry, shape [1].
Tensor sum_all(const Tensor& x);

Tensor concat_last(std::span<const Tensor> xs);
Tensor concat_last(std::initializer_list<Tensor> xs);
// Columns [begin, end) of the last axis.
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);
// Softmax over the last axis.
Tensor softmax_last(const Tensor& x);
// Same data under a new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);
// Rows `index` of a rank-2 tensor, in the given order; indices may repeat.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
// Repeats x (shape S) `rows` times into shape [rows, S...].
Tensor repeat_rows(const Tensor& x, std::size_t rows);

// Fused LSTM cell update. gates [n x 4H] are pre-activations in the order
// input, forget, cell, output; c_prev [n x H]. Returns [n x 2H] = (h | c).
Tensor lstm_cell(const Tensor& gates, const Tensor& c_prev);

namespace testing {
// Scales the registered derivative of the named op by 1.01. Used as a
// negative control for gradient checking; pass an empty name to disable.
void set_derivative_fault(std::string_view op);
}  // namespace testing

}  // namespace nptraj::ops
