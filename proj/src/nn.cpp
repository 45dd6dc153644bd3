#include "nptraj/nn.hpp"

#include <cmath>

#include "nptraj/ops.hpp"

namespace nptraj::nn {

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double a = glorot_bound(fan_in, fan_out);
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = rng.uniform(-a, a);
  return Tensor({fan_in, fan_out}, std::move(w));
}

Mlp Mlp::init(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw ContractError("Mlp::init: need at least input and output dims");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0) throw ContractError("Mlp::init: dims must be positive");
    mlp.layers.push_back({glorot_uniform(rng, dims[i], dims[i + 1]), Tensor({dims[i + 1]}, 0.0)});
  }
  return mlp;
}

Mlp Mlp::init(std::initializer_list<std::size_t> dims, Rng& rng) {
  return init(std::span<const std::size_t>(dims.begin(), dims.size()), rng);
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_dim()) {
    throw DimensionError("Mlp: input " + shape_str(x.shape()) + " does not match input dim " + std::to_string(in_dim()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = ops::add(ops::matmul(h, layers[i].weight), layers[i].bias);
    if (i + 1 < layers.size()) h = ops::relu(h);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.push_back({prefix + ".l" + std::to_string(i) + ".weight", &layers[i].weight});
    out.push_back({prefix + ".l" + std::to_string(i) + ".bias", &layers[i].bias});
  }
}

LstmCell LstmCell::init(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  LstmCell cell;
  cell.hidden_size = hidden_size;
  cell.input_weights = glorot_uniform(rng, input_size, 4 * hidden_size);
  cell.hidden_weights = glorot_uniform(rng, hidden_size, 4 * hidden_size);
  std::vector<double> bias(4 * hidden_size, 0.0);
  for (std::size_t i = hidden_size; i < 2 * hidden_size; ++i) bias[i] = 1.0;
  cell.bias = Tensor({4 * hidden_size}, std::move(bias));
  return cell;
}

LstmState LstmCell::zero_state(std::size_t batch) const {
  return {Tensor({batch, hidden_size}, 0.0), Tensor({batch, hidden_size}, 0.0)};
}

LstmState LstmCell::step(const Tensor& x, const LstmState& state) const {
  if (x.rank() != 2 || x.dim(1) != input_size()) {
    throw DimensionError("LstmCell: input " + shape_str(x.shape()) + " does not match input size " +
                         std::to_string(input_size()));
  }
  const Shape hs{x.dim(0), hidden_size};
  if (state.h.shape() != hs || state.c.shape() != hs) {
    throw DimensionError("LstmCell: state shapes " + shape_str(state.h.shape()) + ", " + shape_str(state.c.shape()) +
                         " do not match " + shape_str(hs));
  }
  const std::size_t H = hidden_size;
  const Tensor gates =
      ops::add(ops::add(ops::matmul(x, input_weights), ops::matmul(state.h, hidden_weights)), bias);
  const Tensor hc = ops::lstm_cell(gates, state.c);
  const Tensor h = ops::slice_last(hc, 0, H);
  const Tensor c = ops::slice_last(hc, H, 2 * H);
  return {h, c};
}

void LstmCell::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".input_weights", &input_weights});
  out.push_back({prefix + ".hidden_weights", &hidden_weights});
  out.push_back({prefix + ".bias", &bias});
}

AttentionHead AttentionHead::init(std::size_t query_dim, std::size_t value_dim, std::size_t att_dim, Rng& rng) {
  AttentionHead head;
  head.query_proj = glorot_uniform(rng, query_dim, att_dim);
  head.key_proj = glorot_uniform(rng, query_dim, att_dim);
  head.value_proj = glorot_uniform(rng, value_dim, att_dim);
  return head;
}

Tensor AttentionHead::weights(const Tensor& queries, const Tensor& keys) const {
  if (keys.rank() != 2) throw ContractError("attention: keys must be a non-empty [C x d] context matrix");
  const Tensor q = ops::matmul(queries, query_proj);
  const Tensor k = ops::matmul(keys, key_proj);
  const double scale = 1.0 / std::sqrt(static_cast<double>(query_proj.dim(1)));
  return ops::softmax_last(ops::scale_shift(ops::matmul(q, ops::transpose(k)), scale));
}

Tensor AttentionHead::forward(const Tensor& queries, const Tensor& keys, const Tensor& values) const {
  if (keys.rank() != 2) throw ContractError("attention: keys must be a non-empty [C x d] context matrix");
  if (values.rank() != 2 || keys.rank() != 2 || values.dim(0) != keys.dim(0)) {
    throw DimensionError("attention: keys " + shape_str(keys.shape()) + " and values " + shape_str(values.shape()) +
                         " disagree on context count");
  }
  return ops::matmul(weights(queries, keys), ops::matmul(values, value_proj));
}

void AttentionHead::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".query_proj", &query_proj});
  out.push_back({prefix + ".key_proj", &key_proj});
  out.push_back({prefix + ".value_proj", &value_proj});
}

void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ContractError("adam_step: " + std::to_string(params.size()) + " params but " +
                        std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      throw ContractError("adam_step: gradient " + std::to_string(i) + " has shape " + shape_str(grads[i].shape()) +
                          ", parameter has " + shape_str(params[i]->shape()));
    }
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  } else if (state.m.size() != params.size()) {
    throw ContractError("adam_step: parameter count changed between steps");
  }

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto g = grads[i].data();
    auto p = params[i]->mutable_data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace nptraj::nn
