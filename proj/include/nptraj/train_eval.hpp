#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nptraj/episodes.hpp"
#include "nptraj/model.hpp"

namespace nptraj {

// --- Training ----------------------------------------------------------

struct TrainConfig {
  ModelKind kind = ModelKind::kArnp;
  std::uint64_t seed = 0;
  std::size_t steps = 5000;
  std::size_t batch = 16;
  double lr = 1e-3;
  // Progress callback interval in steps; 0 disables it.
  std::size_t eval_interval = 500;
  SplitMode split = SplitMode::kPrefix;
  // Architecture sizes; input/output dims and window come from the data.
  ModelDims dims;
};

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  double recon_nll = 0.0;
  double kl = 0.0;
};

struct TrainResult {
  NpFamilyModel model;
  std::vector<TraceRow> trace;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t step, double value);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

using ProgressFn = std::function<void(const TraceRow& row, const NpFamilyModel& model)>;

// Model dims for `config` sized to the episodes' input, output and window.
ModelDims dims_for(const TrainConfig& config, const Episode& sample);

// Minibatch training on normalized episodes: per step, `batch` episodes drawn
// with replacement, each with its own context split and latent noise; the
// averaged loss takes one Adam step. Deterministic in config.seed.
TrainResult train(const TrainConfig& config, std::span<const Episode> episodes, const ProgressFn& progress = {});
// Continues from a given model.
TrainResult train_from(NpFamilyModel model, const TrainConfig& config, std::span<const Episode> episodes,
                       const ProgressFn& progress = {});

std::string format_trace_csv(std::span<const TraceRow> trace);

// --- Prediction interface ------------------------------------------------

// Predictive moments in data units for raw (unnormalized) episodes.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Prediction predict(const Episode& episode, std::span<const std::size_t> context,
                             std::span<const std::size_t> targets) const = 0;
};

// Normalizes, predicts with a fixed per-episode latent stream, and maps
// moments back to data units. The point predictor reports std 1.
class ModelPredictor : public Predictor {
 public:
  ModelPredictor(const NpFamilyModel& model, const Normalizer& normalizer, std::size_t n_samples = 16,
                 std::uint64_t seed = 0)
      : model_(model), normalizer_(normalizer), n_samples_(n_samples), seed_(seed) {}

  Prediction predict(const Episode& episode, std::span<const std::size_t> context,
                     std::span<const std::size_t> targets) const override;

 private:
  const NpFamilyModel& model_;
  const Normalizer& normalizer_;
  std::size_t n_samples_;
  std::uint64_t seed_;
};

// Test stub: ground truth means with unit std.
class OraclePredictor : public Predictor {
 public:
  Prediction predict(const Episode& episode, std::span<const std::size_t> context,
                     std::span<const std::size_t> targets) const override;
};

// --- Evaluation --------------------------------------------------------

struct HorizonMetrics {
  double seconds = 0.0;
  double mu = 0.0;     // mean signed lateral error
  double sigma = 0.0;  // population std of that error across episodes
  double euclid = 0.0; // mean Euclidean error
  std::size_t count = 0;
};

struct Metrics {
  std::vector<HorizonMetrics> horizons;
  double nll = 0.0;  // mean per-point NLL over non-context targets
  std::size_t nll_points = 0;
  std::size_t omitted = 0;  // (episode, horizon) pairs beyond the episode end
};

// Number of context steps for a context length in seconds.
std::size_t context_steps(const Episode& episode, double context_seconds);

// Contexts are the first context_seconds of each episode; horizon h is the
// step context_end + h/dt where context_end is the last context step.
Metrics evaluate(const Predictor& predictor, std::span<const Episode> episodes, double context_seconds,
                 std::span<const double> horizons);

// Fixed key names: h<k>.mu, h<k>.sigma for each horizon, then nll.
std::string format_metrics(const Metrics& metrics);

// Per-episode signed lateral error at one horizon; episodes too short are skipped.
std::vector<double> horizon_errors(const Predictor& predictor, std::span<const Episode> episodes, double context_seconds,
                                   double horizon);
// Same for extrapolating the last context lateral velocity.
std::vector<double> constant_velocity_errors(std::span<const Episode> episodes, double context_seconds, double horizon);

// Held-out statistics over non-context targets for explicit splits.
struct HeldOutStats {
  double nll = 0.0;          // mean per-point NLL
  double median_std = 0.0;   // median predictive std over held-out coordinates
  double coverage90 = 0.0;   // fraction of held-out coordinates inside the central 90% interval
  std::size_t points = 0;
};
HeldOutStats held_out_stats(const Predictor& predictor, std::span<const Episode> episodes,
                            std::span<const CtSplit> splits);

// CSV `step,pred_lat_mean,pred_lat_std,pred_lon_mean,pred_lon_std,true_lat,true_lon,is_context`.
// One-dimensional outputs fill the lon columns with 0.
std::string format_predictions(const Predictor& predictor, const Episode& episode, double context_seconds);
void export_predictions(const Predictor& predictor, const Episode& episode, double context_seconds,
                        const std::filesystem::path& path);

double median(std::vector<double> values);

}  // namespace nptraj
