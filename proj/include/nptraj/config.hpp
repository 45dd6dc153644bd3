#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nptraj/train_eval.hpp"

namespace nptraj {

// Flat key=value training configuration. Blank lines and lines starting
// with '#' are ignored; every key has a default.
struct CliConfig {
  TrainConfig train;
  // Training data: a CSV path, or empty to synthesize from `source`.
  std::string data;
  std::string source = "lanechange";  // sine | lanechange
  std::size_t count = 200;
  std::uint64_t data_seed = 0;
  double noise_std = 0.1;
  std::size_t window = kDefaultWindow;
  std::string model_out = "model.npw";
  std::string trace_out = "trace.csv";
};

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};
// Every accepted key with its default, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Throws ParseError naming the line and key.
CliConfig parse_config(const std::string& text);
CliConfig load_config(const std::filesystem::path& path);

}  // namespace nptraj
