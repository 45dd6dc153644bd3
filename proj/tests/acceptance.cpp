// Acceptance run: one PASS/FAIL line per criterion, with the measured values.
// Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "nptraj/gaussian.hpp"
#include "nptraj/gradcheck_suite.hpp"
#include "nptraj/train_eval.hpp"

using namespace nptraj;

namespace {

// Tolerances and run sizes.
constexpr double kOracleTol = 1e-10;
constexpr double kPermutationTol = 1e-9;
constexpr double kGradcheckSeconds = 60.0;
constexpr std::size_t kGradcheckSeeds = 10;
constexpr std::size_t kTrainSteps = 5000;
constexpr std::size_t kSineBatch = 16;
constexpr std::size_t kLaneBatch = 4;
constexpr std::size_t kSineSeeds = 5;
constexpr std::size_t kLaneSeeds = 5;
constexpr std::size_t kLaneErrorSeeds = 3;
constexpr double kNllImprovement = 0.5;
constexpr double kCoverageFloor = 0.7;
constexpr double kContextSeconds = 2.0;
constexpr double kHorizonSeconds = 3.0;

int g_failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void note(const std::string& s) {
  std::printf("  %s\n", s.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool trace_finite(const TrainResult& r) {
  return std::all_of(r.trace.begin(), r.trace.end(), [](const TraceRow& row) { return std::isfinite(row.loss); });
}

// --- gradient correctness -------------------------------------------------

void gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  bool all = true;
  double worst = 0.0;
  std::size_t checks = 0;
  for (std::uint64_t seed = 0; seed < kGradcheckSeeds; ++seed) {
    for (const auto& r : run_gradcheck_suite(seed)) {
      all = all && r.passed;
      worst = std::max(worst, r.max_rel_error);
      ++checks;
      if (!r.passed) note("failed: seed " + std::to_string(seed) + " " + r.name + " err " + fmt(r.max_rel_error));
    }
  }
  const double secs = seconds_since(t0);
  report(all && secs < kGradcheckSeconds, "gradient_correctness",
         std::to_string(checks) + " checks over " + std::to_string(kGradcheckSeeds) + " seeds, max_rel_error=" + fmt(worst) +
             " (tol 1e-4), " + fmt(secs) + " s (limit 60 s)");
}

// --- distribution oracles ------------------------------------------------

void distribution_oracles() {
  auto g1 = [](double m, double s) { return DiagonalGaussian{Tensor::vector({m}), Tensor::vector({s})}; };
  const double kl_shift = kl_divergence(g1(1, 1), g1(0, 1)).item();
  const double kl_wide = kl_divergence(g1(0, 2), g1(0, 1)).item();
  const double lp = log_prob(g1(0, 1), Tensor::vector({0})).item();
  const double e1 = std::abs(kl_shift - 0.5);
  const double e2 = std::abs(kl_wide - (2.0 - std::log(2.0) - 0.5));
  const double e3 = std::abs(lp + 0.5 * std::log(2.0 * M_PI));
  const double worst = std::max({e1, e2, e3});
  report(worst <= kOracleTol, "distribution_oracles",
         "kl(N(1,1)||N(0,1))=" + fmt(kl_shift) + " kl(N(0,2)||N(0,1))=" + fmt(kl_wide) + " log N(0;0,1)=" + fmt(lp) +
             ", max abs error " + fmt(worst) + " (tol 1e-10)");
}

// --- ELBO structure ------------------------------------------------------

void elbo_structure() {
  const auto episodes = synth_lane_change(100, 31);
  const auto normalized = fit_apply_normalizer(episodes, {}).train;
  TrainConfig c;
  const auto model = NpFamilyModel::init(ModelKind::kArnp, dims_for(c, normalized[0]), 0);
  Rng rng(32);
  std::size_t exact_zero = 0, nonneg = 0;
  double min_kl = INFINITY;
  for (const auto& e : normalized) {
    std::vector<std::size_t> all(e.length());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const Tensor eps = Tensor::vector(rng.normal_vector(model.dims().latent));
    exact_zero += model.elbo(e, CtSplit{all, all}, eps).kl.item() == 0.0;
    const double kl = model.elbo(e, sample_ct_split(e.length(), rng), eps).kl.item();
    nonneg += kl >= 0.0;
    min_kl = std::min(min_kl, kl);
  }
  report(exact_zero == 100 && nonneg == 100, "elbo_kl_structure",
         "C=T gives KL exactly 0 on " + std::to_string(exact_zero) + "/100 episodes; proper prefix gives KL>=0 on " +
             std::to_string(nonneg) + "/100 (min " + fmt(min_kl) + ")");
}

// --- permutation invariance ----------------------------------------------

void permutation_invariance() {
  const auto episodes = fit_apply_normalizer(synth_lane_change(20, 41), {}).train;
  TrainConfig c;
  double worst = 0.0;
  Rng rng(42);
  for (auto kind : {ModelKind::kNp, ModelKind::kAnp}) {
    const auto model = NpFamilyModel::init(kind, dims_for(c, episodes[0]), 1);
    for (const auto& e : episodes) {
      const CtSplit split = sample_ct_split(e.length(), rng, SplitMode::kRandomSubset);
      std::vector<std::size_t> shuffled = split.context;
      for (std::size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
      }
      std::vector<Tensor> eps;
      for (int s = 0; s < 4; ++s) eps.push_back(Tensor::vector(rng.normal_vector(model.dims().latent)));
      const Prediction a = model.predict_with_eps(e, split.context, split.target, eps);
      const Prediction b = model.predict_with_eps(e, shuffled, split.target, eps);
      for (std::size_t i = 0; i < a.mean.size(); ++i) {
        worst = std::max({worst, std::abs(a.mean[i] - b.mean[i]), std::abs(a.std[i] - b.std[i])});
      }
    }
  }
  report(worst <= kPermutationTol, "permutation_invariance",
         "NP and ANP, 20 episodes each, max |difference| " + fmt(worst) + " (tol 1e-9)");
}

// --- sine meta-regression --------------------------------------------------

void sine_regression() {
  const auto train_raw = synth_sine_family(200, 50, 51);
  const auto test_raw = synth_sine_family(50, 50, 52);
  const auto sets = fit_apply_normalizer(train_raw, {});

  Rng split_rng(53);
  std::vector<CtSplit> splits;
  for (const auto& e : test_raw) splits.push_back(sample_ct_split(e.length(), split_rng, SplitMode::kRandomSubset));

  // Nested context sets of size 1, 3, 10 on 20 episodes; held-out targets are
  // the points outside the largest set, shared by all three.
  const std::vector<std::size_t> counts{1, 3, 10};
  std::vector<std::vector<CtSplit>> nested(counts.size());
  for (std::size_t k = 0; k < 20; ++k) {
    std::vector<std::size_t> perm(test_raw[k].length());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = perm.size(); i > 1; --i) {
      std::swap(perm[i - 1], perm[static_cast<std::size_t>(split_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    std::vector<std::size_t> held(perm.begin() + static_cast<std::ptrdiff_t>(counts.back()), perm.end());
    std::sort(held.begin(), held.end());
    for (std::size_t j = 0; j < counts.size(); ++j) {
      std::vector<std::size_t> ctx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(counts[j]));
      std::sort(ctx.begin(), ctx.end());
      std::vector<std::size_t> targets = held;
      targets.insert(targets.end(), ctx.begin(), ctx.end());
      std::sort(targets.begin(), targets.end());
      nested[j].push_back({ctx, targets});
    }
  }
  const std::vector<Episode> first20(test_raw.begin(), test_raw.begin() + 20);

  std::vector<double> nll0, nll_final;
  std::vector<std::vector<double>> stds(counts.size());
  bool finite = true;
  for (std::uint64_t seed = 0; seed < kSineSeeds; ++seed) {
    TrainConfig c;
    c.kind = ModelKind::kArnp;
    c.seed = seed;
    c.steps = kTrainSteps;
    c.batch = kSineBatch;
    c.split = SplitMode::kRandomSubset;
    const auto t0 = std::chrono::steady_clock::now();
    const auto init = NpFamilyModel::init(c.kind, dims_for(c, sets.train[0]), seed);
    nll0.push_back(held_out_stats(ModelPredictor(init, sets.normalizer), test_raw, splits).nll);
    const TrainResult r = train(c, sets.train);
    finite = finite && trace_finite(r);
    const ModelPredictor p(r.model, sets.normalizer);
    nll_final.push_back(held_out_stats(p, test_raw, splits).nll);
    std::string s;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      stds[j].push_back(held_out_stats(p, first20, nested[j]).median_std);
      s += " std@" + std::to_string(counts[j]) + "=" + fmt(stds[j].back());
    }
    note("sine seed " + std::to_string(seed) + ": nll " + fmt(nll0.back()) + " -> " + fmt(nll_final.back()) + s + " (" +
         fmt(seconds_since(t0)) + " s)");
  }
  const double m0 = median(nll0), mf = median(nll_final);
  const double improvement = (m0 - mf) / std::abs(m0);
  report(improvement >= kNllImprovement && finite, "sine_nll_improvement",
         "median held-out NLL " + fmt(m0) + " at step 0 -> " + fmt(mf) + " after " + std::to_string(kTrainSteps) +
             " steps, relative improvement " + fmt(improvement) + " (need >= 0.5); loss trace finite: " +
             (finite ? "yes" : "no"));

  std::vector<double> med;
  for (const auto& v : stds) med.push_back(median(v));
  const bool monotone = med[1] <= med[0] && med[2] <= med[1];
  report(monotone, "sine_std_shrinks_with_context",
         "median predictive std at held-out targets for 1/3/10 contexts: " + fmt(med[0]) + " / " + fmt(med[1]) + " / " +
             fmt(med[2]));
}

// --- lane change -------------------------------------------------------------

struct LaneRun {
  double nll = 0.0;
  double coverage = 0.0;
  double median_abs_error = 0.0;
  bool finite = true;
};

void lane_change() {
  const auto train_raw = synth_lane_change(200, 61);
  const auto test_raw = synth_lane_change(50, 62);
  const auto sets = fit_apply_normalizer(train_raw, {});
  std::vector<CtSplit> splits;
  for (const auto& e : test_raw) splits.push_back(prefix_split(e.length(), context_steps(e, kContextSeconds)));

  auto abs_median = [](std::vector<double> v) {
    for (auto& x : v) x = std::abs(x);
    return median(std::move(v));
  };
  const double cv = abs_median(constant_velocity_errors(test_raw, kContextSeconds, kHorizonSeconds));

  auto run = [&](ModelKind kind, std::uint64_t seed) {
    TrainConfig c;
    c.kind = kind;
    c.seed = seed;
    c.steps = kTrainSteps;
    c.batch = kLaneBatch;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult r = train(c, sets.train);
    const ModelPredictor p(r.model, sets.normalizer);
    const HeldOutStats s = held_out_stats(p, test_raw, splits);
    LaneRun out{s.nll, s.coverage90, abs_median(horizon_errors(p, test_raw, kContextSeconds, kHorizonSeconds)),
                trace_finite(r)};
    note(std::string("lane ") + kind_name(kind) + " seed " + std::to_string(seed) + ": nll " + fmt(out.nll) +
         " coverage90 " + fmt(out.coverage) + " median |err@3s| " + fmt(out.median_abs_error) + " (" +
         fmt(seconds_since(t0)) + " s)");
    return out;
  };

  std::vector<LaneRun> arnp, np;
  for (std::uint64_t seed = 0; seed < kLaneSeeds; ++seed) arnp.push_back(run(ModelKind::kArnp, seed));
  for (std::uint64_t seed = 0; seed < kLaneSeeds; ++seed) np.push_back(run(ModelKind::kNp, seed));

  std::vector<double> err, cov;
  bool finite = true;
  for (std::size_t s = 0; s < kLaneErrorSeeds; ++s) {
    err.push_back(arnp[s].median_abs_error);
    cov.push_back(arnp[s].coverage);
  }
  for (const auto& r : arnp) finite = finite && r.finite;
  for (const auto& r : np) finite = finite && r.finite;
  const double med_err = median(err), med_cov = median(cov);
  report(med_err < cv && finite, "lane_change_beats_constant_velocity",
         "ARNP median |lateral error| at 3 s over " + std::to_string(kLaneErrorSeeds) + " seeds " + fmt(med_err) +
             " m vs constant velocity " + fmt(cv) + " m; loss trace finite: " + (finite ? "yes" : "no"));
  report(med_cov >= kCoverageFloor, "lane_change_coverage",
         "median central-90% interval coverage of held-out points " + fmt(med_cov) + " (need >= 0.7)");

  std::vector<double> a, b;
  for (const auto& r : arnp) a.push_back(r.nll);
  for (const auto& r : np) b.push_back(r.nll);
  report(median(a) <= median(b), "ablation_arnp_vs_np",
         "median held-out NLL over " + std::to_string(kLaneSeeds) + " seeds: ARNP " + fmt(median(a)) + " vs NP " +
             fmt(median(b)));
}

// --- determinism ---------------------------------------------------------

void determinism() {
  const auto train_raw = synth_lane_change(20, 71);
  const auto test_raw = synth_lane_change(5, 72);
  const std::vector<double> horizons{1, 2, 3, 4};
  auto run = [&] {
    const auto sets = fit_apply_normalizer(train_raw, {});
    TrainConfig c;
    c.kind = ModelKind::kArnp;
    c.seed = 3;
    c.steps = 20;
    c.batch = 2;
    const TrainResult r = train(c, sets.train);
    const ModelPredictor p(r.model, sets.normalizer, 16, 0);
    return std::make_pair(ModelFile::encode(r.model, sets.normalizer),
                          format_metrics(evaluate(p, test_raw, kContextSeconds, horizons)));
  };
  const auto a = run(), b = run();
  report(a.first == b.first && a.second == b.second, "determinism",
         "model bytes identical: " + std::string(a.first == b.first ? "yes" : "no") + " (" +
             std::to_string(a.first.size()) + " bytes); metric reports identical: " + (a.second == b.second ? "yes" : "no"));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  gradient_correctness();
  distribution_oracles();
  elbo_structure();
  permutation_invariance();
  determinism();
  sine_regression();
  lane_change();
  std::printf("%s: %d failing criteria, %.0f s total\n", g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures,
              seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
