#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "nptraj/gaussian.hpp"
#include "nptraj/train_eval.hpp"

namespace nptraj {

namespace {

constexpr double kZ95 = 1.6448536269514722;  // central 90% interval half-width in std units

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

std::vector<std::size_t> first_indices(std::size_t m) { return all_indices(m); }

double gaussian_nll(double x, double mean, double std) {
  const double z = (x - mean) / std;
  return kHalfLog2Pi + std::log(std) + 0.5 * z * z;
}

std::string horizon_key(double seconds) {
  const double r = std::round(seconds);
  if (std::abs(seconds - r) < 1e-9) return "h" + std::to_string(static_cast<long long>(r));
  return "h" + format_double(seconds);
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Prediction ModelPredictor::predict(const Episode& episode, std::span<const std::size_t> context,
                                   std::span<const std::size_t> targets) const {
  const Episode normalized = normalizer_.apply(episode);
  // Per-episode stream: results do not depend on evaluation order.
  Rng rng(seed_ ^ (static_cast<std::uint64_t>(episode.episode_id) * 0x9E3779B97F4A7C15ULL));
  Prediction p = model_.predict(normalized, context, targets, n_samples_, rng);
  auto mean = p.mean.mutable_data();
  auto std = p.std.mutable_data();
  const std::size_t dy = episode.output_dim();
  for (std::size_t t = 0; t < targets.size(); ++t) {
    normalizer_.denormalize(mean.subspan(t * dy, dy), std.subspan(t * dy, dy));
  }
  if (!model_.probabilistic()) std::fill(std.begin(), std.end(), 1.0);
  return p;
}

Prediction OraclePredictor::predict(const Episode& episode, std::span<const std::size_t>,
                                    std::span<const std::size_t> targets) const {
  const Tensor truth = episode.targets_at(targets);
  return {truth, Tensor(truth.shape(), 1.0)};
}

std::size_t context_steps(const Episode& episode, double context_seconds) {
  const auto m = static_cast<std::size_t>(std::llround(context_seconds / episode.dt));
  if (m == 0) throw ContractError("context window shorter than one step");
  return m;
}

Metrics evaluate(const Predictor& predictor, std::span<const Episode> episodes, double context_seconds,
                 std::span<const double> horizons) {
  Metrics metrics;
  std::vector<std::vector<double>> signed_err(horizons.size()), euclid(horizons.size());
  double nll_sum = 0.0;

  for (const auto& e : episodes) {
    const std::size_t n = e.length(), dy = e.output_dim();
    const std::size_t m = std::min(context_steps(e, context_seconds), n);
    const auto context = first_indices(m);
    const auto targets = all_indices(n);
    const Prediction p = predictor.predict(e, context, targets);

    for (std::size_t h = 0; h < horizons.size(); ++h) {
      const std::size_t idx = (m - 1) + static_cast<std::size_t>(std::llround(horizons[h] / e.dt));
      if (idx >= n) {
        ++metrics.omitted;
        continue;
      }
      signed_err[h].push_back(p.mean[idx * dy] - e.targets[idx * dy]);
      double sq = 0.0;
      for (std::size_t j = 0; j < dy; ++j) {
        const double d = p.mean[idx * dy + j] - e.targets[idx * dy + j];
        sq += d * d;
      }
      euclid[h].push_back(std::sqrt(sq));
    }
    for (std::size_t t = m; t < n; ++t) {
      double point = 0.0;
      for (std::size_t j = 0; j < dy; ++j) point += gaussian_nll(e.targets[t * dy + j], p.mean[t * dy + j], p.std[t * dy + j]);
      nll_sum += point;
      ++metrics.nll_points;
    }
  }

  for (std::size_t h = 0; h < horizons.size(); ++h) {
    HorizonMetrics hm;
    hm.seconds = horizons[h];
    hm.count = signed_err[h].size();
    if (hm.count > 0) {
      const double k = static_cast<double>(hm.count);
      for (double v : signed_err[h]) hm.mu += v;
      hm.mu /= k;
      for (double v : signed_err[h]) hm.sigma += (v - hm.mu) * (v - hm.mu);
      hm.sigma = std::sqrt(hm.sigma / k);
      for (double v : euclid[h]) hm.euclid += v;
      hm.euclid /= k;
    }
    metrics.horizons.push_back(hm);
  }
  metrics.nll = metrics.nll_points > 0 ? nll_sum / static_cast<double>(metrics.nll_points) : 0.0;
  return metrics;
}

std::string format_metrics(const Metrics& metrics) {
  std::string out = "{\n";
  for (const auto& h : metrics.horizons) {
    const std::string key = horizon_key(h.seconds);
    out += "  \"" + key + ".mu\": " + format_double(h.mu) + ",\n";
    out += "  \"" + key + ".sigma\": " + format_double(h.sigma) + ",\n";
  }
  out += "  \"nll\": " + format_double(metrics.nll) + "\n}\n";
  return out;
}

std::vector<double> horizon_errors(const Predictor& predictor, std::span<const Episode> episodes, double context_seconds,
                                   double horizon) {
  std::vector<double> out;
  for (const auto& e : episodes) {
    const std::size_t n = e.length(), dy = e.output_dim();
    const std::size_t m = context_steps(e, context_seconds);
    const std::size_t idx = (m - 1) + static_cast<std::size_t>(std::llround(horizon / e.dt));
    if (m > n || idx >= n) continue;
    const std::vector<std::size_t> target{idx};
    const Prediction p = predictor.predict(e, first_indices(m), target);
    out.push_back(p.mean[0] - e.targets[idx * dy]);
  }
  return out;
}

std::vector<double> constant_velocity_errors(std::span<const Episode> episodes, double context_seconds, double horizon) {
  std::vector<double> out;
  for (const auto& e : episodes) {
    const std::size_t n = e.length(), dy = e.output_dim();
    const std::size_t m = context_steps(e, context_seconds);
    const std::size_t ahead = static_cast<std::size_t>(std::llround(horizon / e.dt));
    const std::size_t idx = (m - 1) + ahead;
    if (m < 2 || m > n || idx >= n) continue;
    const double last = e.targets[(m - 1) * dy];
    const double velocity_per_step = last - e.targets[(m - 2) * dy];
    out.push_back(last + velocity_per_step * static_cast<double>(ahead) - e.targets[idx * dy]);
  }
  return out;
}

HeldOutStats held_out_stats(const Predictor& predictor, std::span<const Episode> episodes,
                            std::span<const CtSplit> splits) {
  if (episodes.size() != splits.size()) throw ContractError("held_out_stats: one split per episode required");
  HeldOutStats stats;
  std::vector<double> stds;
  double nll_sum = 0.0;
  std::size_t covered = 0;
  for (std::size_t k = 0; k < episodes.size(); ++k) {
    const auto& e = episodes[k];
    const auto& split = splits[k];
    std::vector<std::size_t> held;
    for (auto t : split.target) {
      if (!std::binary_search(split.context.begin(), split.context.end(), t)) held.push_back(t);
    }
    if (held.empty()) continue;
    const Prediction p = predictor.predict(e, split.context, held);
    const std::size_t dy = e.output_dim();
    for (std::size_t i = 0; i < held.size(); ++i) {
      double point = 0.0;
      for (std::size_t j = 0; j < dy; ++j) {
        const double y = e.targets[held[i] * dy + j];
        const double mu = p.mean[i * dy + j], sd = p.std[i * dy + j];
        point += gaussian_nll(y, mu, sd);
        stds.push_back(sd);
        if (std::abs(y - mu) <= kZ95 * sd) ++covered;
      }
      nll_sum += point;
      ++stats.points;
    }
  }
  if (stats.points == 0) throw ContractError("held_out_stats: no held-out targets");
  stats.nll = nll_sum / static_cast<double>(stats.points);
  stats.median_std = median(stds);
  stats.coverage90 = static_cast<double>(covered) / static_cast<double>(stds.size());
  return stats;
}

std::string format_predictions(const Predictor& predictor, const Episode& episode, double context_seconds) {
  const std::size_t n = episode.length(), dy = episode.output_dim();
  const std::size_t m = std::min(context_steps(episode, context_seconds), n);
  const auto targets = all_indices(n);
  const Prediction p = predictor.predict(episode, first_indices(m), targets);
  std::string out = "step,pred_lat_mean,pred_lat_std,pred_lon_mean,pred_lon_std,true_lat,true_lon,is_context\n";
  for (std::size_t t = 0; t < n; ++t) {
    const bool has_lon = dy > 1;
    out += std::to_string(t) + ',' + format_double(p.mean[t * dy]) + ',' + format_double(p.std[t * dy]) + ',' +
           format_double(has_lon ? p.mean[t * dy + 1] : 0.0) + ',' + format_double(has_lon ? p.std[t * dy + 1] : 0.0) +
           ',' + format_double(episode.targets[t * dy]) + ',' + format_double(has_lon ? episode.targets[t * dy + 1] : 0.0) +
           ',' + (t < m ? "1" : "0") + '\n';
  }
  return out;
}

void export_predictions(const Predictor& predictor, const Episode& episode, double context_seconds,
                        const std::filesystem::path& path) {
  const std::string text = format_predictions(predictor, episode, context_seconds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace nptraj
