#pragma once

#include "nptraj/tensor.hpp"

namespace nptraj {

inline constexpr double kMinStd = 0.01;
// 0.5 * ln(2 pi)
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Factorized Gaussian. mean and std share a shape, which may be a vector or
// a batch of rows; densities and divergences sum over every entry.
struct DiagonalGaussian {
  Tensor mean;
  Tensor std;
};

// std = kMinStd + softplus(std_raw).
DiagonalGaussian gaussian_from_raw(const Tensor& mean_raw, const Tensor& std_raw);
// N(0, I) with the given shape.
DiagonalGaussian standard_normal(const Shape& shape);

// Sum of per-entry log densities, shape [1].
Tensor log_prob(const DiagonalGaussian& g, const Tensor& x);
// KL(p || q) in closed form, shape [1].
Tensor kl_divergence(const DiagonalGaussian& p, const DiagonalGaussian& q);
// Reparameterized draw mean + std * eps.
Tensor sample(const DiagonalGaussian& g, const Tensor& eps);

}  // namespace nptraj
