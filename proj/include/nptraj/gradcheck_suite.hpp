#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nptraj/gradcheck.hpp"

namespace nptraj {

struct SuiteResult {
  std::string name;
  std::size_t entries_checked = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

// Finite-difference checks for every tensor op, the distribution and layer
// compositions, and the full ARNP ELBO on a 3-point episode. Inputs are
// drawn from `seed`. Op inputs are probed entry by entry; the ELBO
// parameters along kElboDirections random directions each.
inline constexpr std::size_t kElboDirections = 4;

std::vector<SuiteResult> run_gradcheck_suite(std::uint64_t seed, const GradcheckOptions& options = {});

}  // namespace nptraj
