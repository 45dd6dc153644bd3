#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nptraj/tensor.hpp"

namespace nptraj {

// Builds a scalar from parameter tensors. Must be deterministic in its inputs.
using ScalarBuilder = std::function<Tensor(std::span<const Tensor> params)>;

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Entries probed per parameter; all entries when the tensor is smaller.
  std::size_t max_entries = std::numeric_limits<std::size_t>::max();
  // When nonzero, each parameter is probed along this many random Gaussian
  // directions (directional derivative g.v against a central difference along
  // v) instead of entry by entry.
  std::size_t directions = 0;
};

struct ParamCheck {
  std::size_t param = 0;
  std::size_t entries_checked = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  bool passed = true;
};

// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric);

// Compares tape gradients against central differences. When max_entries is
// smaller than a tensor, the probed entries are drawn with `seed`.
GradcheckReport gradcheck(const ScalarBuilder& builder, std::span<const Tensor> params, std::uint64_t seed,
                          const GradcheckOptions& options = {});

}  // namespace nptraj
