#include "nptraj/episodes.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace nptraj {

const char* const kTrajectoryCsvHeader =
    "episode_id,step,ego_lat,ego_lon,front_lat,front_lon,front_present,following_lat,following_lon,following_present,"
    "imml_lat,imml_lon,imml_present,frontl_lat,frontl_lon,frontl_present,foll_lat,foll_lon,foll_present";
const char* const kSineCsvHeader = "episode_id,step,x,y";

Tensor Episode::current_inputs() const {
  const std::size_t n = length(), L = window_length(), d = input_dim();
  const auto w = windows.data();
  std::vector<double> out(n * d);
  for (std::size_t t = 0; t < n; ++t) std::copy_n(w.begin() + static_cast<std::ptrdiff_t>((t * L + L - 1) * d), d, out.begin() + static_cast<std::ptrdiff_t>(t * d));
  return Tensor({n, d}, std::move(out));
}

Tensor Episode::windows_at(std::span<const std::size_t> index) const {
  const std::size_t L = window_length(), d = input_dim(), block = L * d;
  const auto w = windows.data();
  std::vector<double> out(index.size() * block);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= length()) throw ContractError("windows_at: index " + std::to_string(index[i]) + " out of range");
    std::copy_n(w.begin() + static_cast<std::ptrdiff_t>(index[i] * block), block, out.begin() + static_cast<std::ptrdiff_t>(i * block));
  }
  return Tensor({index.size(), L, d}, std::move(out));
}

Tensor Episode::targets_at(std::span<const std::size_t> index) const {
  const std::size_t d = output_dim();
  const auto y = targets.data();
  std::vector<double> out(index.size() * d);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= length()) throw ContractError("targets_at: index " + std::to_string(index[i]) + " out of range");
    std::copy_n(y.begin() + static_cast<std::ptrdiff_t>(index[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return Tensor({index.size(), d}, std::move(out));
}

// --- CSV ---------------------------------------------------------------

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
  }
  return cells;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

[[noreturn]] void fail_at(std::size_t line_no, const std::string& msg) {
  throw ParseError("line " + std::to_string(line_no) + ": " + msg);
}

double parse_double(std::string_view cell, std::size_t line_no, std::string_view column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    fail_at(line_no, "non-numeric value '" + std::string(cell) + "' in column " + std::string(column));
  }
  return v;
}

std::int64_t parse_int(std::string_view cell, std::size_t line_no, std::string_view column) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
    fail_at(line_no, "non-integer value '" + std::string(cell) + "' in column " + std::string(column));
  }
  return v;
}

void check_header(std::string_view line, const char* expected, std::size_t line_no) {
  const auto got = split_commas(line);
  const auto want = split_commas(expected);
  for (const auto& col : want) {
    if (std::find(got.begin(), got.end(), col) == got.end()) fail_at(line_no, "missing column '" + std::string(col) + "'");
  }
  if (got != want) fail_at(line_no, "header columns out of order or unexpected; expected '" + std::string(expected) + "'");
}

struct Located {
  TrajectoryRecord record;
  std::size_t line;
};

// Groups by id in first-appearance order, sorts by step, checks 0..n-1.
template <typename T, typename StepOf, typename IdOf, typename LineOf>
std::vector<std::vector<T>> group_consecutive(std::vector<T> rows, StepOf step_of, IdOf id_of, LineOf line_of) {
  std::vector<std::int64_t> order;
  std::map<std::int64_t, std::vector<T>> groups;
  for (auto& r : rows) {
    auto [it, inserted] = groups.try_emplace(id_of(r));
    if (inserted) order.push_back(id_of(r));
    it->second.push_back(std::move(r));
  }
  std::vector<std::vector<T>> out;
  for (auto id : order) {
    auto& g = groups[id];
    std::stable_sort(g.begin(), g.end(), [&](const T& a, const T& b) { return step_of(a) < step_of(b); });
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (step_of(g[i]) != static_cast<std::int64_t>(i)) {
        fail_at(line_of(g[i]), "episode " + std::to_string(id) + " expected step " + std::to_string(i) + " but found step " +
                                   std::to_string(step_of(g[i])) + " (gap or duplicate in step numbering)");
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<TrajectoryRecord> parse_trajectory_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("line 1: empty file, expected header");
  check_header(lines[0], kTrajectoryCsvHeader, 1);

  static const auto columns = split_commas(kTrajectoryCsvHeader);
  std::vector<Located> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t line_no = i + 1;
    const auto cells = split_commas(lines[i]);
    if (cells.size() != columns.size()) {
      fail_at(line_no, "expected " + std::to_string(columns.size()) + " cells, found " + std::to_string(cells.size()));
    }
    TrajectoryRecord r;
    r.episode_id = parse_int(cells[0], line_no, columns[0]);
    r.step = parse_int(cells[1], line_no, columns[1]);
    r.ego_lat = parse_double(cells[2], line_no, columns[2]);
    r.ego_lon = parse_double(cells[3], line_no, columns[3]);
    for (std::size_t k = 0; k < kNumRoles; ++k) {
      const std::size_t c = 4 + 3 * k;
      r.roles[k].lat = parse_double(cells[c], line_no, columns[c]);
      r.roles[k].lon = parse_double(cells[c + 1], line_no, columns[c + 1]);
      const auto flag = parse_int(cells[c + 2], line_no, columns[c + 2]);
      if (flag != 0 && flag != 1) fail_at(line_no, "presence flag must be 0 or 1 in column " + std::string(columns[c + 2]));
      r.roles[k].present = flag == 1;
    }
    rows.push_back({r, line_no});
  }

  auto groups = group_consecutive(
      std::move(rows), [](const Located& l) { return l.record.step; }, [](const Located& l) { return l.record.episode_id; },
      [](const Located& l) { return l.line; });
  std::vector<TrajectoryRecord> out;
  for (const auto& g : groups)
    for (const auto& l : g) out.push_back(l.record);
  return out;
}

std::vector<TrajectoryRecord> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open data file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_trajectory_csv(ss.str());
}

std::string format_trajectory_csv(std::span<const TrajectoryRecord> records) {
  std::string out = kTrajectoryCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.episode_id) + ',' + std::to_string(r.step) + ',' + format_double(r.ego_lat) + ',' +
           format_double(r.ego_lon);
    for (const auto& role : r.roles) {
      out += ',' + format_double(role.lat) + ',' + format_double(role.lon) + ',' + (role.present ? "1" : "0");
    }
    out += '\n';
  }
  return out;
}

std::vector<Episode> parse_sine_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("line 1: empty file, expected header");
  check_header(lines[0], kSineCsvHeader, 1);
  struct Row {
    std::int64_t id, step;
    double x, y;
    std::size_t line;
  };
  std::vector<Row> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t line_no = i + 1;
    const auto cells = split_commas(lines[i]);
    if (cells.size() != 4) fail_at(line_no, "expected 4 cells, found " + std::to_string(cells.size()));
    rows.push_back({parse_int(cells[0], line_no, "episode_id"), parse_int(cells[1], line_no, "step"),
                    parse_double(cells[2], line_no, "x"), parse_double(cells[3], line_no, "y"), line_no});
  }
  auto groups = group_consecutive(
      std::move(rows), [](const Row& r) { return r.step; }, [](const Row& r) { return r.id; },
      [](const Row& r) { return r.line; });
  std::vector<Episode> out;
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    std::vector<double> xs, ys;
    for (const auto& r : g) {
      xs.push_back(r.x);
      ys.push_back(r.y);
    }
    Episode e;
    e.windows = Tensor({g.size(), 1, 1}, std::move(xs));
    e.targets = Tensor({g.size(), 1}, std::move(ys));
    e.episode_id = g.front().id;
    e.flag_features = {0};
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_sine_csv(std::span<const Episode> episodes) {
  std::string out = kSineCsvHeader;
  out += '\n';
  for (const auto& e : episodes) {
    const auto x = e.current_inputs();
    for (std::size_t t = 0; t < e.length(); ++t) {
      out += std::to_string(e.episode_id) + ',' + std::to_string(t) + ',' + format_double(x[t]) + ',' +
             format_double(e.targets[t]) + '\n';
    }
  }
  return out;
}

std::vector<Episode> load_episodes(const std::filesystem::path& path, std::size_t window) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open data file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = split_lines(text);
  if (!first.empty() && first[0] == kSineCsvHeader) return parse_sine_csv(text);
  const auto records = parse_trajectory_csv(text);
  return build_episodes(records, window).episodes;
}

// --- Episode construction ---------------------------------------------

BuildResult build_episodes(std::span<const TrajectoryRecord> records, std::size_t window) {
  if (window == 0) throw ContractError("build_episodes: window length must be >= 1");
  BuildResult result;
  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin;
    while (end < records.size() && records[end].episode_id == records[begin].episode_id) ++end;
    const std::size_t n = end - begin;
    if (n < 2) {
      ++result.skipped_short;
      begin = end;
      continue;
    }

    const std::size_t d = kLaneFeatureDim;
    std::vector<double> step_features(n * d, 0.0);
    std::vector<double> targets(n * kLaneTargetDim);
    const auto& origin = records[begin];
    for (std::size_t s = 0; s < n; ++s) {
      const auto& r = records[begin + s];
      if (r.step != static_cast<std::int64_t>(s)) {
        throw ContractError("build_episodes: episode " + std::to_string(r.episode_id) + " is not step-sorted from 0");
      }
      for (std::size_t k = 0; k < kNumRoles; ++k) {
        if (!r.roles[k].present) continue;
        step_features[s * d + 3 * k] = r.roles[k].lat - r.ego_lat;
        step_features[s * d + 3 * k + 1] = r.roles[k].lon - r.ego_lon;
        step_features[s * d + 3 * k + 2] = 1.0;
      }
      targets[s * kLaneTargetDim] = r.ego_lat - origin.ego_lat;
      targets[s * kLaneTargetDim + 1] = r.ego_lon - origin.ego_lon;
    }

    std::vector<double> windows(n * window * d);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < window; ++i) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(window) + 1 +
                                   static_cast<std::ptrdiff_t>(i);
        const std::size_t s = src < 0 ? 0 : static_cast<std::size_t>(src);
        std::copy_n(step_features.begin() + static_cast<std::ptrdiff_t>(s * d), d,
                    windows.begin() + static_cast<std::ptrdiff_t>((t * window + i) * d));
      }
    }

    Episode e;
    e.windows = Tensor({n, window, d}, std::move(windows));
    e.targets = Tensor({n, kLaneTargetDim}, std::move(targets));
    e.episode_id = origin.episode_id;
    e.flag_features.assign(d, 0);
    for (std::size_t k = 0; k < kNumRoles; ++k) e.flag_features[3 * k + 2] = 1;
    result.episodes.push_back(std::move(e));
    begin = end;
  }
  return result;
}

std::vector<Episode> synth_sine_family(std::size_t n_episodes, std::size_t n_points, std::uint64_t seed,
                                       const SineOptions& options) {
  if (n_points < 2) throw ContractError("synth_sine_family: n_points must be >= 2");
  Rng rng(seed);
  std::vector<Episode> out;
  out.reserve(n_episodes);
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const double a = rng.uniform(0.5, 2.0);
    const double phi = rng.uniform(0.0, 3.141592653589793);
    const double amplitude = options.amplitude.value_or(a);
    const double phase = options.phase.value_or(phi);
    std::vector<double> xs(n_points), ys(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
      xs[i] = -2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(n_points - 1);
      ys[i] = amplitude * std::sin(xs[i] + phase) + options.noise_std * rng.normal();
    }
    Episode ep;
    ep.windows = Tensor({n_points, 1, 1}, std::move(xs));
    ep.targets = Tensor({n_points, 1}, std::move(ys));
    ep.episode_id = static_cast<std::int64_t>(e);
    ep.flag_features = {0};
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<TrajectoryRecord> synth_lane_change_records(std::size_t n_episodes, std::uint64_t seed,
                                                        const LaneChangeParams& params) {
  const auto n_steps = static_cast<std::size_t>(std::llround(params.duration / kStepSeconds));
  if (n_steps < 2) throw ContractError("synth_lane_change: duration shorter than two steps");
  // Lane offset (in lane widths) and initial longitudinal gap range per role.
  struct RoleLayout {
    double lane;
    double gap_lo, gap_hi;
  };
  constexpr std::array<RoleLayout, kNumRoles> layout{{
      {0.0, 15.0, 40.0},    // front
      {0.0, -40.0, -15.0},  // following
      {1.0, -8.0, 8.0},     // immediate left
      {1.0, 15.0, 45.0},    // front left
      {1.0, -45.0, -15.0},  // following left
  }};

  Rng rng(seed);
  std::vector<TrajectoryRecord> out;
  out.reserve(n_episodes * n_steps);
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const double k = params.steepness.value_or(rng.uniform(1.0, 2.5));
    const double t0 = params.crossing_time.value_or(rng.uniform(2.0, 6.0));
    const double speed = rng.uniform(8.0, 15.0);
    std::array<bool, kNumRoles> present{};
    std::array<double, kNumRoles> gap{}, role_speed{};
    for (std::size_t r = 0; r < kNumRoles; ++r) {
      present[r] = rng.bernoulli(0.8);
      gap[r] = rng.uniform(layout[r].gap_lo, layout[r].gap_hi);
      role_speed[r] = speed + rng.uniform(-2.0, 2.0);
    }
    for (std::size_t s = 0; s < n_steps; ++s) {
      const double t = static_cast<double>(s) * kStepSeconds;
      TrajectoryRecord rec;
      rec.episode_id = static_cast<std::int64_t>(e);
      rec.step = static_cast<std::int64_t>(s);
      rec.ego_lat = params.lane_width / (1.0 + std::exp(-k * (t - t0)));
      rec.ego_lon = speed * t;
      for (std::size_t r = 0; r < kNumRoles; ++r) {
        // Draw noise for absent roles too so presence does not shift the stream.
        const double n_lat = params.noise_std * rng.normal();
        const double n_lon = params.noise_std * rng.normal();
        if (!present[r]) continue;
        rec.roles[r].present = true;
        rec.roles[r].lat = layout[r].lane * params.lane_width + n_lat;
        rec.roles[r].lon = gap[r] + role_speed[r] * t + n_lon;
      }
      out.push_back(rec);
    }
  }
  return out;
}

std::vector<Episode> synth_lane_change(std::size_t n_episodes, std::uint64_t seed, const LaneChangeParams& params,
                                       std::size_t window) {
  const auto records = synth_lane_change_records(n_episodes, seed, params);
  return build_episodes(records, window).episodes;
}

// --- Context / target splits ------------------------------------------

CtSplit prefix_split(std::size_t n, std::size_t m) {
  if (m > n) throw ContractError("prefix_split: context count exceeds episode length");
  CtSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < m) split.context.push_back(i);
    split.target.push_back(i);
  }
  return split;
}

CtSplit sample_ct_split(std::size_t n, Rng& rng, SplitMode mode) {
  if (n < 2) throw ContractError("sample_ct_split: episode needs at least 2 points");
  const auto m = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n) - 1));
  if (mode == SplitMode::kPrefix) return prefix_split(n, m);
  CtSplit split = prefix_split(n, 0);
  std::vector<std::size_t> perm = split.target;
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n) - 1));
    std::swap(perm[i], perm[j]);
  }
  split.context.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(split.context.begin(), split.context.end());
  return split;
}

// --- Normalization -----------------------------------------------------

namespace {

void mean_std(const std::vector<double>& sum, const std::vector<double>& sq, double count, std::vector<double>& shift,
              std::vector<double>& scale, std::size_t& zero_var) {
  shift.resize(sum.size());
  scale.resize(sum.size());
  for (std::size_t j = 0; j < sum.size(); ++j) {
    shift[j] = sum[j] / count;
    const double var = std::max(0.0, sq[j] / count - shift[j] * shift[j]);
    scale[j] = std::sqrt(var);
    if (!(scale[j] > 1e-12)) {
      scale[j] = 1.0;
      ++zero_var;
    }
  }
}

}  // namespace

Normalizer Normalizer::identity(std::size_t input_dim, std::size_t output_dim) {
  Normalizer n;
  n.input_shift.assign(input_dim, 0.0);
  n.input_scale.assign(input_dim, 1.0);
  n.target_shift.assign(output_dim, 0.0);
  n.target_scale.assign(output_dim, 1.0);
  return n;
}

Normalizer Normalizer::fit(std::span<const Episode> train) {
  if (train.empty()) throw ContractError("Normalizer::fit: training set is empty");
  const std::size_t dx = train[0].input_dim(), dy = train[0].output_dim();
  std::vector<double> xs(dx, 0.0), xq(dx, 0.0), ys(dy, 0.0), yq(dy, 0.0);
  double count = 0.0;
  for (const auto& e : train) {
    if (e.input_dim() != dx || e.output_dim() != dy) throw DimensionError("Normalizer::fit: episodes disagree on dims");
    const Tensor x = e.current_inputs();
    for (std::size_t t = 0; t < e.length(); ++t) {
      for (std::size_t j = 0; j < dx; ++j) {
        const double v = x[t * dx + j];
        xs[j] += v;
        xq[j] += v * v;
      }
      for (std::size_t j = 0; j < dy; ++j) {
        const double v = e.targets[t * dy + j];
        ys[j] += v;
        yq[j] += v * v;
      }
      count += 1.0;
    }
  }
  Normalizer n;
  mean_std(xs, xq, count, n.input_shift, n.input_scale, n.zero_variance_features);
  std::size_t ignored = 0;
  mean_std(ys, yq, count, n.target_shift, n.target_scale, ignored);
  n.zero_variance_features += ignored;
  // Target scales never shrink units, so the decoder std floor holds in data units.
  for (auto& s : n.target_scale) s = std::max(s, 1.0);
  const auto& flags = train[0].flag_features;
  for (std::size_t j = 0; j < dx && j < flags.size(); ++j) {
    if (flags[j]) {
      n.input_shift[j] = 0.0;
      n.input_scale[j] = 1.0;
    }
  }
  return n;
}

namespace {

Episode map_episode(const Episode& e, const Normalizer& n, bool forward) {
  if (e.input_dim() != n.input_shift.size() || e.output_dim() != n.target_shift.size()) {
    throw DimensionError("normalizer dims do not match episode dims");
  }
  Episode out = e;
  {
    auto w = out.windows.mutable_data();
    const std::size_t d = e.input_dim();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::size_t j = i % d;
      w[i] = forward ? (w[i] - n.input_shift[j]) / n.input_scale[j] : w[i] * n.input_scale[j] + n.input_shift[j];
    }
  }
  {
    auto y = out.targets.mutable_data();
    const std::size_t d = e.output_dim();
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::size_t j = i % d;
      y[i] = forward ? (y[i] - n.target_shift[j]) / n.target_scale[j] : y[i] * n.target_scale[j] + n.target_shift[j];
    }
  }
  return out;
}

}  // namespace

Episode Normalizer::apply(const Episode& e) const { return map_episode(e, *this, true); }
Episode Normalizer::invert(const Episode& e) const { return map_episode(e, *this, false); }

void Normalizer::denormalize(std::span<double> mean, std::span<double> std) const {
  for (std::size_t j = 0; j < mean.size(); ++j) {
    mean[j] = mean[j] * target_scale[j] + target_shift[j];
    std[j] = std[j] * target_scale[j];
  }
}

NormalizedSets fit_apply_normalizer(std::span<const Episode> train, std::span<const Episode> other) {
  NormalizedSets sets;
  sets.normalizer = Normalizer::fit(train);
  for (const auto& e : train) sets.train.push_back(sets.normalizer.apply(e));
  for (const auto& e : other) sets.other.push_back(sets.normalizer.apply(e));
  return sets;
}

}  // namespace nptraj
