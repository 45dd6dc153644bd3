#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nptraj/rng.hpp"
#include "nptraj/tensor.hpp"

namespace nptraj {

inline constexpr double kStepSeconds = 0.1;  // 10 Hz
inline constexpr std::size_t kNumRoles = 5;
// Per role: relative lateral, relative longitudinal, presence flag.
inline constexpr std::size_t kLaneFeatureDim = 3 * kNumRoles;
inline constexpr std::size_t kLaneTargetDim = 2;
inline constexpr std::size_t kDefaultWindow = 20;

// Surrounding vehicle roles, in CSV column order.
enum class Role { kFront, kFollowing, kImmediateLeft, kFrontLeft, kFollowingLeft };

struct RoleObservation {
  double lat = 0.0;
  double lon = 0.0;
  bool present = false;
};

struct TrajectoryRecord {
  std::int64_t episode_id = 0;
  std::int64_t step = 0;
  double ego_lat = 0.0;
  double ego_lon = 0.0;
  std::array<RoleObservation, kNumRoles> roles{};
};

// One realization: input windows paired with target outputs per time index.
struct Episode {
  Tensor windows;  // [n x L x d_x]
  Tensor targets;  // [n x d_y]
  double dt = kStepSeconds;
  std::int64_t episode_id = 0;
  // 1 for features that are presence flags and bypass normalization.
  std::vector<std::uint8_t> flag_features;

  std::size_t length() const { return windows.dim(0); }
  std::size_t window_length() const { return windows.dim(1); }
  std::size_t input_dim() const { return windows.dim(2); }
  std::size_t output_dim() const { return targets.dim(1); }
  // Features of the most recent step of each window, [n x d_x].
  Tensor current_inputs() const;
  // Rows `index` of windows as a [m x L x d_x] tensor.
  Tensor windows_at(std::span<const std::size_t> index) const;
  // Rows `index` of targets as [m x d_y].
  Tensor targets_at(std::span<const std::size_t> index) const;
};

// --- CSV ---------------------------------------------------------------

// Exact header of the trajectory CSV.
extern const char* const kTrajectoryCsvHeader;
// Exact header of the synthetic function-regression CSV.
extern const char* const kSineCsvHeader;

// Records grouped by episode (first-appearance order) and step-sorted.
// Throws ParseError with a line number on malformed input or step gaps.
std::vector<TrajectoryRecord> load_csv(const std::filesystem::path& path);
std::vector<TrajectoryRecord> parse_trajectory_csv(const std::string& text);
std::string format_trajectory_csv(std::span<const TrajectoryRecord> records);

std::vector<Episode> parse_sine_csv(const std::string& text);
std::string format_sine_csv(std::span<const Episode> episodes);

// Dispatches on the header: trajectory files go through build_episodes.
std::vector<Episode> load_episodes(const std::filesystem::path& path, std::size_t window);

std::string format_double(double v);

// --- Episode construction ---------------------------------------------

struct BuildResult {
  std::vector<Episode> episodes;
  std::size_t skipped_short = 0;
};

// Features relative to the ego position at each step; targets are ego
// displacement from step 0; windows are left-padded by repeating step 0.
BuildResult build_episodes(std::span<const TrajectoryRecord> records, std::size_t window);

struct SineOptions {
  double noise_std = 0.05;
  // Test hooks pinning the per-episode draws.
  std::optional<double> amplitude;
  std::optional<double> phase;
};

// y = a sin(x + phi) + noise on a uniform grid over [-2, 2], one-step windows.
std::vector<Episode> synth_sine_family(std::size_t n_episodes, std::size_t n_points, std::uint64_t seed,
                                       const SineOptions& options = {});

struct LaneChangeParams {
  double lane_width = 3.7;
  double duration = 8.0;
  double noise_std = 0.1;
  // Test hooks pinning the logistic steepness and crossing time.
  std::optional<double> steepness;
  std::optional<double> crossing_time;
};

std::vector<TrajectoryRecord> synth_lane_change_records(std::size_t n_episodes, std::uint64_t seed,
                                                        const LaneChangeParams& params = {});
std::vector<Episode> synth_lane_change(std::size_t n_episodes, std::uint64_t seed, const LaneChangeParams& params = {},
                                       std::size_t window = kDefaultWindow);

// --- Context / target splits ------------------------------------------

enum class SplitMode { kPrefix, kRandomSubset };

struct CtSplit {
  std::vector<std::size_t> context;
  std::vector<std::size_t> target;
};

// m ~ U{1..n-1} contexts (a prefix, or a random subset), targets all of 0..n-1.
CtSplit sample_ct_split(std::size_t n, Rng& rng, SplitMode mode = SplitMode::kPrefix);
// First m indices as contexts, all indices as targets.
CtSplit prefix_split(std::size_t n, std::size_t m);

// --- Normalization -----------------------------------------------------

// Per-feature affine maps fitted on training episodes. Presence flags pass
// through unchanged. Targets are centered and divided by max(1, std) per
// output dimension.
struct Normalizer {
  std::vector<double> input_shift, input_scale;
  std::vector<double> target_shift, target_scale;
  std::size_t zero_variance_features = 0;

  static Normalizer fit(std::span<const Episode> train);
  static Normalizer identity(std::size_t input_dim, std::size_t output_dim);

  Episode apply(const Episode& e) const;
  Episode invert(const Episode& e) const;
  // Maps a normalized-space predictive mean/std of one target row back.
  void denormalize(std::span<double> mean, std::span<double> std) const;
};

struct NormalizedSets {
  Normalizer normalizer;
  std::vector<Episode> train;
  std::vector<Episode> other;
};

NormalizedSets fit_apply_normalizer(std::span<const Episode> train, std::span<const Episode> other);

}  // namespace nptraj
