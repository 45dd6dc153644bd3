#include "nptraj/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nptraj/rng.hpp"

namespace nptraj {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const ScalarBuilder& builder, std::span<const Tensor> params, std::uint64_t seed,
                          const GradcheckOptions& options) {
  std::vector<Tensor> values;
  values.reserve(params.size());
  for (const auto& p : params) values.push_back(p.detach());

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Tensor> tracked;
    for (const auto& v : values) tracked.push_back(tape.watch(v));
    const Tensor root = builder(tracked);
    if (!root.tracked()) {
      // Constant builder: every gradient is zero.
      for (const auto& v : values) analytic.emplace_back(v.shape(), 0.0);
    } else {
      const Gradients grads = tape.backward(root);
      for (const auto& t : tracked) analytic.push_back(grads.of(t));
    }
  }

  auto evaluate = [&](std::size_t param, std::size_t entry, double delta) {
    std::vector<Tensor> probe = values;
    probe[param].mutable_data()[entry] += delta;
    return builder(probe).item();
  };

  Rng rng(seed);
  GradcheckReport report;
  auto record = [&](ParamCheck check) {
    check.passed = check.max_rel_error <= options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.passed = report.passed && check.passed;
    report.params.push_back(check);
  };

  if (options.directions > 0) {
    for (std::size_t p = 0; p < values.size(); ++p) {
      ParamCheck check;
      check.param = p;
      for (std::size_t d = 0; d < options.directions; ++d) {
        const std::vector<double> v = rng.normal_vector(values[p].size());
        double analytic_dir = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) analytic_dir += analytic[p][i] * v[i];
        auto along = [&](double delta) {
          std::vector<Tensor> probe = values;
          auto data = probe[p].mutable_data();
          for (std::size_t i = 0; i < v.size(); ++i) data[i] += delta * v[i];
          return builder(probe).item();
        };
        const double numeric = (along(options.step) - along(-options.step)) / (2.0 * options.step);
        check.max_rel_error = std::max(check.max_rel_error, relative_error(analytic_dir, numeric));
        ++check.entries_checked;
      }
      record(check);
    }
    return report;
  }

  for (std::size_t p = 0; p < values.size(); ++p) {
    const std::size_t n = values[p].size();
    std::vector<std::size_t> entries(n);
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (n > options.max_entries) {
      // Partial Fisher-Yates draw of max_entries distinct indices.
      for (std::size_t i = 0; i < options.max_entries; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
        std::swap(entries[i], entries[j]);
      }
      entries.resize(options.max_entries);
    }

    ParamCheck check;
    check.param = p;
    for (const std::size_t e : entries) {
      const double numeric = (evaluate(p, e, options.step) - evaluate(p, e, -options.step)) / (2.0 * options.step);
      const double err = relative_error(analytic[p][e], numeric);
      check.max_rel_error = std::max(check.max_rel_error, err);
      ++check.entries_checked;
    }
    record(check);
  }
  return report;
}

}  // namespace nptraj
