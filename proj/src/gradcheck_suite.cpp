#include "nptraj/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>

#include "nptraj/gaussian.hpp"
#include "nptraj/model.hpp"
#include "nptraj/nn.hpp"
#include "nptraj/ops.hpp"

namespace nptraj {

namespace {

struct Case {
  std::string name;
  std::vector<Tensor> params;
  ScalarBuilder builder;
  std::size_t directions = 0;
};

Tensor randn(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

// Entries bounded away from zero, for kinks and poles.
Tensor away_from_zero(Rng& rng, Shape shape, double lo, double hi, bool signed_values) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    x = rng.uniform(lo, hi);
    if (signed_values && rng.bernoulli(0.5)) x = -x;
  }
  return Tensor(std::move(shape), std::move(v));
}

// Random linear functional so every output entry reaches the gradient.
ScalarBuilder contract(Rng& rng, const Shape& out_shape, std::function<Tensor(std::span<const Tensor>)> f) {
  const Tensor w = randn(rng, out_shape);
  return [w, f](std::span<const Tensor> p) { return ops::sum_all(ops::mul(f(p), w)); };
}

std::vector<Case> build_cases(Rng& rng) {
  std::vector<Case> cases;
  auto add = [&](std::string name, std::vector<Tensor> params, const Shape& out_shape,
                 std::function<Tensor(std::span<const Tensor>)> f) {
    cases.push_back({std::move(name), std::move(params), contract(rng, out_shape, std::move(f))});
  };

  add("matmul", {randn(rng, {3, 4}), randn(rng, {4, 2})}, {3, 2},
      [](auto p) { return ops::matmul(p[0], p[1]); });
  add("transpose", {randn(rng, {3, 4})}, {4, 3}, [](auto p) { return ops::transpose(p[0]); });

  const ops::UnaryKind unary[] = {ops::UnaryKind::kTanh,  ops::UnaryKind::kRelu, ops::UnaryKind::kSigmoid,
                                  ops::UnaryKind::kSoftplus, ops::UnaryKind::kExp, ops::UnaryKind::kLog,
                                  ops::UnaryKind::kNeg,   ops::UnaryKind::kSquare};
  for (auto kind : unary) {
    Tensor x = kind == ops::UnaryKind::kLog    ? away_from_zero(rng, {3, 4}, 0.2, 3.0, false)
               : kind == ops::UnaryKind::kRelu ? away_from_zero(rng, {3, 4}, 0.05, 2.0, true)
                                               : randn(rng, {3, 4});
    add(ops::name(kind), {x}, {3, 4}, [kind](auto p) { return ops::unary(kind, p[0]); });
  }

  const ops::BinaryKind binary[] = {ops::BinaryKind::kAdd, ops::BinaryKind::kSub, ops::BinaryKind::kMul,
                                    ops::BinaryKind::kDiv};
  for (auto kind : binary) {
    auto rhs = [&](Shape s) {
      return kind == ops::BinaryKind::kDiv ? away_from_zero(rng, std::move(s), 0.5, 2.0, true) : randn(rng, std::move(s));
    };
    const std::string base = ops::name(kind);
    add(base, {randn(rng, {3, 4}), rhs({3, 4})}, {3, 4}, [kind](auto p) { return ops::binary(kind, p[0], p[1]); });
    add(base + "[broadcast row]", {randn(rng, {2, 3, 4}), rhs({4})}, {2, 3, 4},
        [kind](auto p) { return ops::binary(kind, p[0], p[1]); });
  }

  add("scale_shift", {randn(rng, {3, 4})}, {3, 4}, [](auto p) { return ops::scale_shift(p[0], -1.7, 0.3); });
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Shape out{2, 3, 4};
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    add("sum[axis " + std::to_string(axis) + "]", {randn(rng, {2, 3, 4})}, out,
        [axis](auto p) { return ops::sum(p[0], axis); });
    add("mean[axis " + std::to_string(axis) + "]", {randn(rng, {2, 3, 4})}, out,
        [axis](auto p) { return ops::mean(p[0], axis); });
  }
  add("sum_all", {randn(rng, {3, 4})}, {1}, [](auto p) { return ops::sum_all(p[0]); });
  add("concat_last", {randn(rng, {3, 2}), randn(rng, {3, 4}), randn(rng, {3, 1})}, {3, 7},
      [](auto p) { return ops::concat_last(p); });
  add("slice_last", {randn(rng, {3, 5})}, {3, 3}, [](auto p) { return ops::slice_last(p[0], 1, 4); });
  add("softmax_last", {randn(rng, {3, 5})}, {3, 5}, [](auto p) { return ops::softmax_last(p[0]); });
  add("reshape", {randn(rng, {3, 4})}, {2, 6}, [](auto p) { return ops::reshape(p[0], {2, 6}); });
  {
    const std::vector<std::size_t> index{2, 0, 2, 1};
    add("gather_rows", {randn(rng, {3, 4})}, {4, 4}, [index](auto p) { return ops::gather_rows(p[0], index); });
  }
  add("repeat_rows", {randn(rng, {4})}, {3, 4}, [](auto p) { return ops::repeat_rows(p[0], 3); });

  {
    const Tensor x = randn(rng, {3, 2});
    cases.push_back({"log_prob", {randn(rng, {3, 2}), randn(rng, {3, 2})}, [x](std::span<const Tensor> p) {
                       return log_prob(gaussian_from_raw(p[0], p[1]), x);
                     }});
    cases.push_back({"kl_divergence",
                     {randn(rng, {5}), randn(rng, {5}), randn(rng, {5}), randn(rng, {5})},
                     [](std::span<const Tensor> p) {
                       return kl_divergence(gaussian_from_raw(p[0], p[1]), gaussian_from_raw(p[2], p[3]));
                     }});
    const Tensor eps = randn(rng, {5});
    add("sample", {randn(rng, {5}), randn(rng, {5})}, {5},
        [eps](auto p) { return sample(gaussian_from_raw(p[0], p[1]), eps); });
  }

  add("lstm_cell", {randn(rng, {3, 8}, 1.5), randn(rng, {3, 2})}, {3, 4},
      [](auto p) { return ops::lstm_cell(p[0], p[1]); });
  {
    const nn::LstmCell cell = nn::LstmCell::init(3, 4, rng);
    const Tensor x = randn(rng, {2, 3});
    add("lstm_step", {cell.input_weights, cell.hidden_weights, cell.bias, randn(rng, {2, 4}), randn(rng, {2, 4})},
        {2, 8}, [x](auto p) {
          nn::LstmCell c;
          c.input_weights = p[0];
          c.hidden_weights = p[1];
          c.bias = p[2];
          c.hidden_size = 4;
          const nn::LstmState s = c.step(x, {p[3], p[4]});
          return ops::concat_last({s.h, s.c});
        });
  }
  {
    const nn::AttentionHead head = nn::AttentionHead::init(3, 2, 4, rng);
    add("attention", {randn(rng, {2, 3}), randn(rng, {4, 3}), randn(rng, {4, 2}), head.query_proj, head.key_proj},
        {2, head.value_proj.dim(1)}, [head](auto p) {
          nn::AttentionHead h = head;
          h.query_proj = p[3];
          h.key_proj = p[4];
          return h.forward(p[0], p[1], p[2]);
        });
  }

  {
    // Full ARNP ELBO on a 3-point episode with contexts {0, 1}, probed along
    // random directions per tensor. Entry-wise differences on a wide relu net
    // hit kinks and the rounding floor of the loss; narrow layers keep a
    // whole-tensor perturbation clear of kinks.
    ModelDims dims;
    dims.window = 4;
    dims.hidden = 6;
    dims.latent = 4;
    dims.representation = 8;
    dims.attention = 8;
    dims.decoder_hidden = 8;
    NpFamilyModel model = NpFamilyModel::init(ModelKind::kArnp, dims, rng.split().uniform_int(0, 1 << 30));
    Episode e;
    e.windows = randn(rng, {3, dims.window, dims.input_dim});
    e.targets = randn(rng, {3, dims.output_dim});
    const CtSplit split{{0, 1}, {0, 1, 2}};
    const Tensor eps = randn(rng, {dims.latent});
    Case c{"elbo[arnp, 3 points]", model.param_values(), {}, kElboDirections};
    c.builder = [model, e, split, eps](std::span<const Tensor> p) {
      NpFamilyModel m = model;
      auto refs = m.params();
      for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].tensor = p[i];
      return m.elbo(e, split, eps).loss;
    };
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace

std::vector<SuiteResult> run_gradcheck_suite(std::uint64_t seed, const GradcheckOptions& options) {
  Rng rng(seed);
  std::vector<SuiteResult> out;
  for (auto& c : build_cases(rng)) {
    GradcheckOptions o = options;
    if (c.directions > 0) o.directions = c.directions;
    const GradcheckReport r = gradcheck(c.builder, c.params, seed, o);
    SuiteResult s;
    s.name = c.name;
    s.max_rel_error = r.max_rel_error;
    s.passed = r.passed;
    for (const auto& p : r.params) s.entries_checked += p.entries_checked;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace nptraj
