#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nptraj/rng.hpp"
#include "nptraj/tensor.hpp"

namespace nptraj::nn {

// Named pointer into a parameter container, in declaration order.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
double glorot_bound(std::size_t fan_in, std::size_t fan_out);
Tensor glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out);

struct DenseLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

// Affine layers with relu between them; the last layer is affine only.
struct Mlp {
  std::vector<DenseLayer> layers;

  // dims = {in, hidden..., out}
  static Mlp init(std::span<const std::size_t> dims, Rng& rng);
  static Mlp init(std::initializer_list<std::size_t> dims, Rng& rng);

  std::size_t in_dim() const { return layers.front().weight.dim(0); }
  std::size_t out_dim() const { return layers.back().weight.dim(1); }
  // x: [B x in] -> [B x out]
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct LstmState {
  Tensor h;
  Tensor c;
};

// Gate blocks along the 4H axis are ordered (input, forget, cell, output).
struct LstmCell {
  Tensor input_weights;   // [in x 4H]
  Tensor hidden_weights;  // [H x 4H]
  Tensor bias;            // [4H]
  std::size_t hidden_size = 0;

  // Glorot weights; bias zero except the forget block, which is 1.
  static LstmCell init(std::size_t input_size, std::size_t hidden_size, Rng& rng);

  std::size_t input_size() const { return input_weights.dim(0); }
  // x: [B x in], state: [B x H] each.
  LstmState step(const Tensor& x, const LstmState& state) const;
  LstmState zero_state(std::size_t batch) const;
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

// Single-head scaled dot-product attention with learned projections.
struct AttentionHead {
  Tensor query_proj;  // [d_q x d_att]
  Tensor key_proj;    // [d_q x d_att]
  Tensor value_proj;  // [d_v x d_out]

  static AttentionHead init(std::size_t query_dim, std::size_t value_dim, std::size_t att_dim, Rng& rng);

  // Row-stochastic [T x C] weights softmax(Q K^T / sqrt(d_att)).
  Tensor weights(const Tensor& queries, const Tensor& keys) const;
  // queries [T x d_q], keys [C x d_q], values [C x d_v] -> [T x d_out]
  Tensor forward(const Tensor& queries, const Tensor& keys, const Tensor& values) const;
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update. Moments are created on the first call.
void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor> grads);

}  // namespace nptraj::nn
