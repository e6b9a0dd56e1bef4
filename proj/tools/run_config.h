#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include <cap/synthetic.h>
#include <cap/trainer.h>

namespace cap::cli {

// Flat key=value configuration shared by every subcommand. Resolution order:
// defaults, preset, config file, command-line flags.
struct RunConfig {
  std::string preset = "cifar";
  TrainingConfig training = TrainingConfig::cifar();
  SyntheticSpec synth = standard_suite_spec(0);

  std::filesystem::path bank;
  std::filesystem::path model;
  std::filesystem::path test;
  std::filesystem::path maps;
  std::filesystem::path input;
  std::filesystem::path out;
  std::string sweep;
  std::size_t heatmap_size = 224;
};

// "cifar" or "mvtec"; throws ConfigError otherwise.
TrainingConfig preset_config(std::string_view name);

// Applies one key. Unknown keys and malformed values throw ConfigError.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// Parses key=value lines ('#' starts a comment). A "preset" line is applied
// before every other key regardless of its position.
void apply_config_text(RunConfig& config, std::string_view text);

// Every key with its resolved value, one per line, in a fixed order.
std::string resolved_config_text(const RunConfig& config);

}  // namespace cap::cli
