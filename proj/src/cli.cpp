#include "nptraj/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include "nptraj/config.hpp"
#include "nptraj/gradcheck_suite.hpp"
#include "nptraj/model.hpp"
#include "nptraj/ops.hpp"
#include "nptraj/train_eval.hpp"

namespace nptraj {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<double> parse_horizons(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v > 0.0)) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ParseError("invalid horizon '" + item + "'");
    }
  }
  if (out.empty()) throw ParseError("no horizons given");
  return out;
}

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* s = std::getenv("NPTRAJ_SEED");
  if (s == nullptr || *s == '\0') return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ParseError(std::string("NPTRAJ_SEED is not an unsigned integer: '") + s + "'");
  return v;
}

// Loads data shaped for the model and checks dims.
std::vector<Episode> load_for_model(const std::string& path, const NpFamilyModel& model) {
  auto episodes = load_episodes(path, model.dims().window);
  for (const auto& e : episodes) {
    if (e.input_dim() != model.dims().input_dim || e.output_dim() != model.dims().output_dim ||
        e.window_length() != model.dims().window) {
      throw ContractError("data '" + path + "' has input/output/window dims " + std::to_string(e.input_dim()) + "/" +
                          std::to_string(e.output_dim()) + "/" + std::to_string(e.window_length()) + " but the " +
                          kind_name(model.kind()) + " model expects " + std::to_string(model.dims().input_dim) + "/" +
                          std::to_string(model.dims().output_dim) + "/" + std::to_string(model.dims().window));
    }
  }
  return episodes;
}

struct GenDataArgs {
  std::string kind = "lanechange";
  std::string out;
  std::uint64_t seed = 0;
  std::size_t count = 100;
  std::optional<double> noise_std;
  std::size_t points = 50;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  std::string text;
  if (a.kind == "sine") {
    SineOptions o;
    if (a.noise_std) o.noise_std = *a.noise_std;
    text = format_sine_csv(synth_sine_family(a.count, a.points, a.seed, o));
  } else {
    LaneChangeParams p;
    if (a.noise_std) p.noise_std = *a.noise_std;
    text = format_trajectory_csv(synth_lane_change_records(a.count, a.seed, p));
  }
  write_text(a.out, text);
  out << "wrote " << a.count << " episodes to " << a.out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, std::ostream& out) {
  CliConfig c = load_config(config_path);
  c.train.seed = env_seed(c.train.seed);

  std::vector<Episode> raw;
  if (!c.data.empty()) {
    raw = load_episodes(c.data, c.window);
  } else if (c.source == "sine") {
    SineOptions o;
    o.noise_std = c.noise_std;
    raw = synth_sine_family(c.count, 50, c.data_seed, o);
  } else {
    LaneChangeParams p;
    p.noise_std = c.noise_std;
    raw = synth_lane_change(c.count, c.data_seed, p, c.window);
  }
  if (raw.size() < c.train.batch) {
    throw ContractError("training data has " + std::to_string(raw.size()) + " episodes, fewer than batch " +
                        std::to_string(c.train.batch));
  }
  const NormalizedSets sets = fit_apply_normalizer(raw, {});

  auto progress = [&](const TraceRow& row, const NpFamilyModel&) {
    out << "step " << row.step + 1 << " loss " << format_double(row.loss) << "\n";
  };
  const TrainResult r = train(c.train, sets.train, progress);
  ModelFile::save(c.model_out, r.model, sets.normalizer);
  write_text(c.trace_out, format_trace_csv(r.trace));
  out << "final loss " << format_double(r.trace.back().loss) << "\n";
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  double context_seconds = 2.0;
  std::string horizons = "1,2,3,4";
  std::size_t n_samples = 16;
  std::uint64_t seed = 0;
  std::string out;
  bool oracle_stub = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const std::vector<double> horizons = parse_horizons(a.horizons);
  const auto loaded = ModelFile::load(a.model);
  const auto episodes = load_for_model(a.data, loaded.model);
  const ModelPredictor model_predictor(loaded.model, loaded.normalizer, a.n_samples, a.seed);
  const OraclePredictor oracle;
  const Predictor& p = a.oracle_stub ? static_cast<const Predictor&>(oracle) : model_predictor;
  const std::string report = format_metrics(evaluate(p, episodes, a.context_seconds, horizons));
  out << report;
  if (!a.out.empty()) write_text(a.out, report);
  return 0;
}

struct PredictArgs {
  std::string model;
  std::string data;
  std::int64_t episode_id = 0;
  std::string out;
  double context_seconds = 2.0;
  std::size_t n_samples = 16;
  std::uint64_t seed = 0;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const auto loaded = ModelFile::load(a.model);
  const auto episodes = load_for_model(a.data, loaded.model);
  const Episode* found = nullptr;
  for (const auto& e : episodes) {
    if (e.episode_id == a.episode_id) found = &e;
  }
  if (found == nullptr) {
    std::string ids;
    for (const auto& e : episodes) ids += (ids.empty() ? "" : ", ") + std::to_string(e.episode_id);
    throw ContractError("episode " + std::to_string(a.episode_id) + " not found; available ids: " + ids);
  }
  const ModelPredictor p(loaded.model, loaded.normalizer, a.n_samples, a.seed);
  export_predictions(p, *found, a.context_seconds, a.out);
  out << "wrote " << found->length() << " rows to " << a.out << "\n";
  return 0;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  std::string corrupt_op;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  ops::testing::set_derivative_fault(a.corrupt_op);
  bool all = true;
  for (std::uint64_t s = a.seed; s < a.seed + a.seeds; ++s) {
    for (const auto& r : run_gradcheck_suite(s)) {
      out << (r.passed ? "PASS " : "FAIL ") << "seed=" << s << " " << r.name << " entries=" << r.entries_checked
          << " max_rel_error=" << format_double(r.max_rel_error) << "\n";
      all = all && r.passed;
    }
  }
  ops::testing::set_derivative_fault("");
  out << (all ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return all ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural-process trajectory prediction"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic episode CSV");
  gen_cmd->add_option("--kind", gen.kind, "sine or lanechange")->check(CLI::IsMember({"sine", "lanechange"}));
  gen_cmd->add_option("--out", gen.out, "output CSV path")->required();
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--count", gen.count, "number of episodes");
  gen_cmd->add_option("--noise-std", gen.noise_std, "observation noise (default 0.05 sine, 0.1 lanechange)");
  gen_cmd->add_option("--points", gen.points, "points per sine episode");

  std::string config_path;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a key=value config");
  train_cmd->add_option("config", config_path, "config file")->required();
  {
    std::string keys = "Config keys (key=value, '#' comments):\n";
    for (const auto& k : config_keys()) {
      std::string entry = std::string(k.name) + " = " + (*k.default_value ? k.default_value : "\"\"");
      entry.resize(std::max<std::size_t>(entry.size() + 2, 28), ' ');
      keys += "  " + entry + k.help + "\n";
    }
    train_cmd->footer(keys);
  }

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Report horizon errors and NLL");
  eval_cmd->add_option("--model", ev.model, "model file")->required();
  eval_cmd->add_option("--data", ev.data, "episode CSV")->required();
  eval_cmd->add_option("--context-seconds", ev.context_seconds, "observed prefix length");
  eval_cmd->add_option("--horizons", ev.horizons, "comma-separated horizons in seconds");
  eval_cmd->add_option("--n-samples", ev.n_samples, "latent samples per prediction");
  eval_cmd->add_option("--seed", ev.seed, "latent sampling seed");
  eval_cmd->add_option("--out", ev.out, "also write the report here");
  eval_cmd->add_flag("--oracle-stub", ev.oracle_stub, "test hook: predict ground truth with std 1");

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Export per-step predictions for one episode");
  predict_cmd->add_option("--model", pr.model, "model file")->required();
  predict_cmd->add_option("--data", pr.data, "episode CSV")->required();
  predict_cmd->add_option("--episode-id", pr.episode_id, "episode to predict")->required();
  predict_cmd->add_option("--out", pr.out, "output CSV path")->required();
  predict_cmd->add_option("--context-seconds", pr.context_seconds, "observed prefix length");
  predict_cmd->add_option("--n-samples", pr.n_samples, "latent samples per prediction");
  predict_cmd->add_option("--seed", pr.seed, "latent sampling seed");

  GradcheckArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every op and the ELBO");
  grad_cmd->add_option("--seed", gc.seed, "first seed");
  grad_cmd->add_option("--seeds", gc.seeds, "number of consecutive seeds");
  grad_cmd->add_option("--corrupt-op", gc.corrupt_op, "test hook: perturb this op's derivative");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(config_path, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*predict_cmd) return cmd_predict(pr, out);
    if (*grad_cmd) return cmd_gradcheck(gc, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace nptraj
