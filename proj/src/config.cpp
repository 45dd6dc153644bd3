#include "nptraj/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace nptraj {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& value, const std::string& key, std::size_t line) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("config line " + std::to_string(line) + ": key '" + key + "' has invalid value '" + value + "'");
  }
  return out;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"kind", "arnp", "model kind: np, anp, arnp, lstm"},
      {"seed", "0", "training seed (NPTRAJ_SEED overrides)"},
      {"steps", "5000", "optimizer steps"},
      {"batch", "16", "episodes per step"},
      {"lr", "0.001", "Adam learning rate"},
      {"eval_interval", "500", "steps between progress lines, 0 for none"},
      {"split", "prefix", "context split: prefix or random"},
      {"window", "20", "feature window length L"},
      {"hidden", "64", "recurrent state size"},
      {"latent", "64", "latent size"},
      {"representation", "128", "pair representation size"},
      {"attention", "128", "attention key size"},
      {"decoder_hidden", "128", "decoder hidden width"},
      {"data", "", "training CSV; empty to synthesize"},
      {"source", "lanechange", "synthetic source when data is empty: sine or lanechange"},
      {"count", "200", "synthetic episode count"},
      {"data_seed", "0", "synthetic data seed"},
      {"noise_std", "0.1", "synthetic observation noise"},
      {"model_out", "model.npw", "output model file"},
      {"trace_out", "trace.csv", "output loss trace"},
  };
  return keys;
}

CliConfig parse_config(const std::string& text) {
  CliConfig c;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line) + ": expected key=value, got '" + s + "'");
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    auto size = [&] { return parse_number<std::size_t>(value, key, line); };
    auto real = [&] { return parse_number<double>(value, key, line); };

    if (key == "kind") {
      try {
        c.train.kind = parse_kind(value);
      } catch (const Error&) {
        throw ParseError("config line " + std::to_string(line) + ": key 'kind' has invalid value '" + value + "'");
      }
    } else if (key == "seed") {
      c.train.seed = parse_number<std::uint64_t>(value, key, line);
    } else if (key == "steps") {
      c.train.steps = size();
    } else if (key == "batch") {
      c.train.batch = size();
    } else if (key == "lr") {
      c.train.lr = real();
    } else if (key == "eval_interval") {
      c.train.eval_interval = size();
    } else if (key == "split") {
      if (value == "prefix") {
        c.train.split = SplitMode::kPrefix;
      } else if (value == "random") {
        c.train.split = SplitMode::kRandomSubset;
      } else {
        throw ParseError("config line " + std::to_string(line) + ": key 'split' has invalid value '" + value + "'");
      }
    } else if (key == "window") {
      c.window = size();
    } else if (key == "hidden") {
      c.train.dims.hidden = size();
    } else if (key == "latent") {
      c.train.dims.latent = size();
    } else if (key == "representation") {
      c.train.dims.representation = size();
    } else if (key == "attention") {
      c.train.dims.attention = size();
    } else if (key == "decoder_hidden") {
      c.train.dims.decoder_hidden = size();
    } else if (key == "data") {
      c.data = value;
    } else if (key == "source") {
      if (value != "sine" && value != "lanechange") {
        throw ParseError("config line " + std::to_string(line) + ": key 'source' has invalid value '" + value + "'");
      }
      c.source = value;
    } else if (key == "count") {
      c.count = size();
    } else if (key == "data_seed") {
      c.data_seed = parse_number<std::uint64_t>(value, key, line);
    } else if (key == "noise_std") {
      c.noise_std = real();
    } else if (key == "model_out") {
      c.model_out = value;
    } else if (key == "trace_out") {
      c.trace_out = value;
    } else {
      throw ParseError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  if (c.train.steps == 0) throw ParseError("config: key 'steps' must be >= 1");
  if (c.train.batch == 0) throw ParseError("config: key 'batch' must be >= 1");
  if (c.window == 0) throw ParseError("config: key 'window' must be >= 1");
  return c;
}

CliConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace nptraj
