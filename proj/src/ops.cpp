#include "nptraj/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace nptraj::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using Buffer = std::shared_ptr<const std::vector<double>>;

std::string g_fault_op;

double fault_factor(const char* op) { return (!g_fault_op.empty() && g_fault_op == op) ? 1.01 : 1.0; }

Tape* tape_of(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t->tracked()) return t->node()->tape;
  }
  return nullptr;
}

Tensor finish(const char* op, Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
              BackwardFn backward) {
  Tape* tape = tape_of(inputs);
  if (!tape) return Tensor(std::move(shape), std::move(value));
  std::vector<const Tensor*> in(inputs);
  return tape->record(op, std::move(shape), std::move(value), in, std::move(backward));
}

bool any_tracked(std::initializer_list<const Tensor*> inputs) { return tape_of(inputs) != nullptr; }

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + shape_str(t.shape()));
}

}  // namespace

const char* name(UnaryKind kind) {
  switch (kind) {
    case UnaryKind::kTanh: return "tanh";
    case UnaryKind::kRelu: return "relu";
    case UnaryKind::kSigmoid: return "sigmoid";
    case UnaryKind::kSoftplus: return "softplus";
    case UnaryKind::kExp: return "exp";
    case UnaryKind::kLog: return "log";
    case UnaryKind::kNeg: return "neg";
    case UnaryKind::kSquare: return "square";
  }
  return "?";
}

const char* name(BinaryKind kind) {
  switch (kind) {
    case BinaryKind::kAdd: return "add";
    case BinaryKind::kSub: return "sub";
    case BinaryKind::kMul: return "mul";
    case BinaryKind::kDiv: return "div";
  }
  return "?";
}

const char* name(ReduceKind kind) { return kind == ReduceKind::kSum ? "sum" : "mean"; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  const auto ei = static_cast<Eigen::Index>(m), ek = static_cast<Eigen::Index>(k), en = static_cast<Eigen::Index>(n);
  MutMap(out.data(), ei, en).noalias() = ConstMap(a.data().data(), ei, ek) * ConstMap(b.data().data(), ek, en);
  if (!any_tracked({&a, &b})) return Tensor({m, n}, std::move(out));

  Buffer av = a.buffer(), bv = b.buffer();
  const double f = fault_factor("matmul");
  return finish("matmul", {m, n}, std::move(out), {&a, &b}, [=](std::span<const double> g, GradSinks s) {
    ConstMap gm(g.data(), ei, en);
    if (s[0]) MutMap(s[0]->data(), ei, ek).noalias() += f * (gm * ConstMap(bv->data(), ek, en).transpose());
    if (s[1]) MutMap(s[1]->data(), ek, en).noalias() += ConstMap(av->data(), ei, ek).transpose() * gm;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto data = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = data[i * n + j];
  const double f = fault_factor("transpose");
  return finish("transpose", {n, m}, std::move(out), {&a}, [=](std::span<const double> g, GradSinks s) {
    auto& ga = *s[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += f * g[j * m + i];
  });
}

Tensor unary(UnaryKind kind, const Tensor& x) {
  const auto in = x.data();
  const std::size_t n = in.size();
  std::vector<double> out(n);
  switch (kind) {
    case UnaryKind::kTanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
      break;
    case UnaryKind::kRelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case UnaryKind::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_value(in[i]);
      break;
    case UnaryKind::kSoftplus:
      for (std::size_t i = 0; i < n; ++i) out[i] = softplus_value(in[i]);
      break;
    case UnaryKind::kExp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(in[i]);
      break;
    case UnaryKind::kLog:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(in[i] > 0.0)) {
          throw DomainError("log: nonpositive entry " + std::to_string(in[i]) + " at index " + std::to_string(i));
        }
        out[i] = std::log(in[i]);
      }
      break;
    case UnaryKind::kNeg:
      for (std::size_t i = 0; i < n; ++i) out[i] = -in[i];
      break;
    case UnaryKind::kSquare:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * in[i];
      break;
  }
  if (!x.tracked()) return Tensor(x.shape(), std::move(out));

  // Derivatives are expressed through the saved input or output.
  Buffer xv = x.buffer();
  auto yv = std::make_shared<const std::vector<double>>(out);
  const double f = fault_factor(name(kind));
  return finish(name(kind), x.shape(), std::move(out), {&x}, [=](std::span<const double> g, GradSinks s) {
    auto& gx = *s[0];
    const auto& xs = *xv;
    const auto& ys = *yv;
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      switch (kind) {
        case UnaryKind::kTanh: d = 1.0 - ys[i] * ys[i]; break;
        case UnaryKind::kRelu: d = xs[i] > 0.0 ? 1.0 : 0.0; break;
        case UnaryKind::kSigmoid: d = ys[i] * (1.0 - ys[i]); break;
        case UnaryKind::kSoftplus: d = sigmoid_value(xs[i]); break;
        case UnaryKind::kExp: d = ys[i]; break;
        case UnaryKind::kLog: d = 1.0 / xs[i]; break;
        case UnaryKind::kNeg: d = -1.0; break;
        case UnaryKind::kSquare: d = 2.0 * xs[i]; break;
      }
      gx[i] += f * d * g[i];
    }
  });
}

Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool suffix = sb.size() <= sa.size() && std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()));
  if (!suffix) {
    throw BroadcastError(std::string(name(kind)) + ": shape " + shape_str(sb) + " is not a suffix of " + shape_str(sa));
  }
  const auto av = a.data(), bv = b.data();
  const std::size_t n = av.size(), inner = bv.size(), outer = inner == 0 ? 0 : n / inner;
  std::vector<double> out(n);
  // Blocked over the broadcast rows; no per-element index arithmetic.
  auto each = [&](auto fn) {
    for (std::size_t r = 0; r < outer; ++r) {
      const double* x = av.data() + r * inner;
      double* o = out.data() + r * inner;
      for (std::size_t j = 0; j < inner; ++j) o[j] = fn(x[j], bv[j]);
    }
  };
  switch (kind) {
    case BinaryKind::kAdd: each([](double x, double y) { return x + y; }); break;
    case BinaryKind::kSub: each([](double x, double y) { return x - y; }); break;
    case BinaryKind::kMul: each([](double x, double y) { return x * y; }); break;
    case BinaryKind::kDiv: each([](double x, double y) { return x / y; }); break;
  }
  if (!any_tracked({&a, &b})) return Tensor(sa, std::move(out));

  Buffer abuf = a.buffer(), bbuf = b.buffer();
  const double f = fault_factor(name(kind));
  return finish(name(kind), sa, std::move(out), {&a, &b}, [=](std::span<const double> g, GradSinks s) {
    const auto& x = *abuf;
    const auto& y = *bbuf;
    double* ga = s[0] ? s[0]->data() : nullptr;
    double* gb = s[1] ? s[1]->data() : nullptr;
    for (std::size_t r = 0; r < outer; ++r) {
      const std::size_t base = r * inner;
      const double* gr = g.data() + base;
      switch (kind) {
        case BinaryKind::kAdd:
        case BinaryKind::kSub: {
          const double sign = kind == BinaryKind::kAdd ? 1.0 : -1.0;
          if (ga) for (std::size_t j = 0; j < inner; ++j) ga[base + j] += f * gr[j];
          if (gb) for (std::size_t j = 0; j < inner; ++j) gb[j] += f * sign * gr[j];
          break;
        }
        case BinaryKind::kMul:
          if (ga) for (std::size_t j = 0; j < inner; ++j) ga[base + j] += f * y[j] * gr[j];
          if (gb) for (std::size_t j = 0; j < inner; ++j) gb[j] += f * x[base + j] * gr[j];
          break;
        case BinaryKind::kDiv:
          if (ga) for (std::size_t j = 0; j < inner; ++j) ga[base + j] += f * gr[j] / y[j];
          if (gb) for (std::size_t j = 0; j < inner; ++j) gb[j] += f * (-x[base + j] / (y[j] * y[j])) * gr[j];
          break;
      }
    }
  });
}

Tensor scale_shift(const Tensor& x, double scale, double offset) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = scale * in[i] + offset;
  const double f = fault_factor("scale_shift");
  return finish("scale_shift", x.shape(), std::move(out), {&x}, [=](std::span<const double> g, GradSinks s) {
    auto& gx = *s[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * scale * g[i];
  });
}

Tensor reduce(ReduceKind kind, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(name(kind)) + ": axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(x.shape()));
  }
  const Shape& sx = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sx[i];
  for (std::size_t i = axis + 1; i < sx.size(); ++i) inner *= sx[i];
  const std::size_t len = sx[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < sx.size(); ++i)
    if (i != axis) out_shape.push_back(sx[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  const double w = kind == ReduceKind::kMean ? 1.0 / static_cast<double>(len) : 1.0;
  const auto in = x.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += in[(o * len + l) * inner + i];
  if (kind == ReduceKind::kMean)
    for (auto& v : out) v *= w;

  const double f = fault_factor(name(kind));
  return finish(name(kind), std::move(out_shape), std::move(out), {&x}, [=](std::span<const double> g, GradSinks s) {
    auto& gx = *s[0];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) gx[(o * len + l) * inner + i] += f * w * g[o * inner + i];
  });
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const std::size_t n = x.size();
  const double f = fault_factor("sum_all");
  return finish("sum_all", {1}, {total}, {&x}, [=](std::span<const double> g, GradSinks s) {
    auto& gx = *s[0];
    for (std::size_t i = 0; i < n; ++i) gx[i] += f * g[0];
  });
}

Tensor concat_last(std::span<const Tensor> xs) {
  if (xs.empty()) throw DimensionError("concat_last: no inputs");
  const Shape& first = xs[0].shape();
  const Shape lead(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw DimensionError("concat_last: leading shape of " + shape_str(s) + " does not match " + shape_str(first));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const std::size_t rows = shape_numel(first) / first.back();
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto d = xs[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k], out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    offset += widths[k];
  }
  Shape out_shape = lead;
  out_shape.push_back(total);

  Tape* tape = nullptr;
  std::vector<const Tensor*> inputs;
  for (const auto& t : xs) {
    inputs.push_back(&t);
    if (t.tracked()) tape = t.node()->tape;
  }
  if (!tape) return Tensor(std::move(out_shape), std::move(out));
  const double f = fault_factor("concat_last");
  return tape->record("concat_last", std::move(out_shape), std::move(out), inputs,
                      [=](std::span<const double> g, GradSinks s) {
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < widths.size(); ++k) {
                          if (s[k]) {
                            auto& gk = *s[k];
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += f * g[r * total + off + c];
                          }
                          off += widths[k];
                        }
                      });
}

Tensor concat_last(std::initializer_list<Tensor> xs) { return concat_last(std::span<const Tensor>(xs.begin(), xs.size())); }

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
  const Shape& sx = x.shape();
  const std::size_t width = sx.back();
  if (begin >= end || end > width) {
    throw DimensionError("slice_last: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for shape " + shape_str(sx));
  }
  const std::size_t rows = x.size() / width, w = end - begin;
  const auto in = x.data();
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(r * width + begin), w, out.begin() + static_cast<std::ptrdiff_t>(r * w));
  Shape out_shape = sx;
  out_shape.back() = w;
  const double f = fault_factor("slice_last");
  return finish("slice_last", std::move(out_shape), std::move(out), {&x}, [=](std::span<const double> g, GradSinks s) {
    auto& gx = *s[0];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * width + begin + c] += f * g[r * w + c];
  });
}

Tensor softmax_last(const Tensor& x) {
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.size() / width;
  const auto in = x.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * width;
    double* o = out.data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      o[c] = std::exp(row[c] - mx);
      z += o[c];
    }
    for (std::size_t c = 0; c < width; ++c) o[c] /= z;
  }
  if (!x.tracked()) return Tensor(x.shape(), std::move(out));
  auto yv = std::make_shared<const std::vector<double>>(out);
  const double f = fault_factor("softmax_last");
  return finish("softmax_last", x.shape(), std::move(out), {&x}, [=](std::span<const double> g, GradSinks s) {
    auto& gx = *s[0];
    const auto& y = *yv;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < width; ++c) dot += g[r * width + c] * y[r * width + c];
      for (std::size_t c = 0; c < width; ++c) gx[r * width + c] += f * y[r * width + c] * (g[r * width + c] - dot);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const double f = fault_factor("reshape");
  return finish("reshape", std::move(shape), std::move(out), {&x}, [=](std::span<const double> g, GradSinks s) {
    auto& gx = *s[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * g[i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_rank2("gather_rows", x);
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  const std::size_t rows = x.dim(0), width = x.dim(1);
  const auto in = x.data();
  std::vector<double> out(index.size() * width);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) {
      throw DimensionError("gather_rows: row " + std::to_string(index[r]) + " out of range for shape " + shape_str(x.shape()));
    }
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(index[r] * width), width, out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const double f = fault_factor("gather_rows");
  return finish("gather_rows", {index.size(), width}, std::move(out), {&x}, [=](std::span<const double> g, GradSinks s) {
    auto& gx = *s[0];
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < width; ++c) gx[idx[r] * width + c] += f * g[r * width + c];
  });
}

Tensor repeat_rows(const Tensor& x, std::size_t rows) {
  if (rows == 0) throw DimensionError("repeat_rows: zero rows");
  const auto in = x.data();
  const std::size_t n = in.size();
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) std::copy(in.begin(), in.end(), out.begin() + static_cast<std::ptrdiff_t>(r * n));
  Shape out_shape{rows};
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  const double f = fault_factor("repeat_rows");
  return finish("repeat_rows", std::move(out_shape), std::move(out), {&x}, [=](std::span<const double> g, GradSinks s) {
    auto& gx = *s[0];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < n; ++i) gx[i] += f * g[r * n + i];
  });
}

Tensor lstm_cell(const Tensor& gates, const Tensor& c_prev) {
  require_rank2("lstm_cell", gates);
  require_rank2("lstm_cell", c_prev);
  const std::size_t n = c_prev.dim(0), H = c_prev.dim(1);
  if (gates.dim(0) != n || gates.dim(1) != 4 * H) {
    throw DimensionError("lstm_cell: gates " + shape_str(gates.shape()) + " do not match cell state " +
                         shape_str(c_prev.shape()));
  }
  using Array = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto en = static_cast<Eigen::Index>(n), eh = static_cast<Eigen::Index>(H);
  const Eigen::Map<const Array> a(gates.data().data(), en, 4 * eh);
  const Eigen::Map<const Array> cp(c_prev.data().data(), en, eh);

  // tanh(x) = 2 sigmoid(2x) - 1 keeps everything on the vectorized exp.
  auto act = std::make_shared<Array>(en, 4 * eh);
  act->leftCols(2 * eh) = ((-a.leftCols(2 * eh)).exp() + 1.0).inverse();
  act->middleCols(2 * eh, eh) = 2.0 * ((-2.0 * a.middleCols(2 * eh, eh)).exp() + 1.0).inverse() - 1.0;
  act->rightCols(eh) = ((-a.rightCols(eh)).exp() + 1.0).inverse();
  const auto i = act->leftCols(eh), f = act->middleCols(eh, eh), g = act->middleCols(2 * eh, eh),
             o = act->rightCols(eh);
  const Array c = f * cp + i * g;
  auto tc = std::make_shared<Array>(2.0 * ((-2.0 * c).exp() + 1.0).inverse() - 1.0);

  std::vector<double> out(n * 2 * H);
  Eigen::Map<Array> om(out.data(), en, 2 * eh);
  om.leftCols(eh) = o * *tc;
  om.rightCols(eh) = c;
  if (!any_tracked({&gates, &c_prev})) return Tensor({n, 2 * H}, std::move(out));

  Buffer cbuf = c_prev.buffer();
  const double fault = fault_factor("lstm_cell");
  return finish("lstm_cell", {n, 2 * H}, std::move(out), {&gates, &c_prev},
                [=](std::span<const double> grad, GradSinks s) {
                  const Eigen::Map<const Array> gm(grad.data(), en, 2 * eh);
                  const Eigen::Map<const Array> cprev(cbuf->data(), en, eh);
                  const auto i = act->leftCols(eh), f = act->middleCols(eh, eh), g = act->middleCols(2 * eh, eh),
                             o = act->rightCols(eh);
                  const auto gh = gm.leftCols(eh);
                  const Array dc = gm.rightCols(eh) + gh * o * (1.0 - tc->square());
                  if (s[0]) {
                    Eigen::Map<Array> da(s[0]->data(), en, 4 * eh);
                    da.leftCols(eh) += fault * dc * g * i * (1.0 - i);
                    da.middleCols(eh, eh) += fault * dc * cprev * f * (1.0 - f);
                    da.middleCols(2 * eh, eh) += fault * dc * i * (1.0 - g.square());
                    da.rightCols(eh) += fault * gh * *tc * o * (1.0 - o);
                  }
                  if (s[1]) Eigen::Map<Array>(s[1]->data(), en, eh) += fault * dc * f;
                });
}

namespace testing {
void set_derivative_fault(std::string_view op) { g_fault_op = std::string(op); }
}  // namespace testing

}  // namespace nptraj::ops
