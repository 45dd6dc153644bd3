#include "nptraj/gaussian.hpp"

#include "nptraj/ops.hpp"

namespace nptraj {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
}

}  // namespace

DiagonalGaussian gaussian_from_raw(const Tensor& mean_raw, const Tensor& std_raw) {
  require_same_shape("gaussian_from_raw", mean_raw, std_raw);
  return {mean_raw, ops::scale_shift(ops::softplus(std_raw), 1.0, kMinStd)};
}

DiagonalGaussian standard_normal(const Shape& shape) { return {Tensor(shape, 0.0), Tensor(shape, 1.0)}; }

Tensor log_prob(const DiagonalGaussian& g, const Tensor& x) {
  require_same_shape("log_prob", g.mean, x);
  require_same_shape("log_prob", g.mean, g.std);
  // -0.5 ln 2pi - ln sigma - (x - mu)^2 / (2 sigma^2)
  const Tensor z = ops::div(ops::sub(x, g.mean), g.std);
  const Tensor per_entry = ops::sub(ops::scale_shift(ops::square(z), -0.5, -kHalfLog2Pi), ops::log(g.std));
  return ops::sum_all(per_entry);
}

Tensor kl_divergence(const DiagonalGaussian& p, const DiagonalGaussian& q) {
  require_same_shape("kl_divergence", p.mean, q.mean);
  require_same_shape("kl_divergence", p.std, q.std);
  // ln(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2
  const Tensor log_ratio = ops::sub(ops::log(q.std), ops::log(p.std));
  const Tensor numer = ops::add(ops::square(p.std), ops::square(ops::sub(p.mean, q.mean)));
  const Tensor quad = ops::div(numer, ops::scale_shift(ops::square(q.std), 2.0));
  return ops::sum_all(ops::add(log_ratio, ops::scale_shift(quad, 1.0, -0.5)));
}

Tensor sample(const DiagonalGaussian& g, const Tensor& eps) {
  require_same_shape("sample", g.mean, eps);
  return ops::add(g.mean, ops::mul(g.std, eps));
}

}  // namespace nptraj
