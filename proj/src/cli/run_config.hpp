#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fmhca/model.hpp"
#include "fmhca/synthetic.hpp"
#include "fmhca/train.hpp"

namespace fmhca::cli {

enum class KeyGroup { Data, Model, Train };

// Resolved settings for one invocation. Every field is reachable through a
// flat key (see config_keys()); files and flags both go through set().
struct RunConfig {
  SyntheticSpec data;
  ModelConfig model;
  TrainOptions train;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 1;

  RunConfig();

  // Throws InvalidArgument for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
};

struct ConfigKey {
  std::string name;
  KeyGroup group;
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

// key = value lines; '#' starts a comment. Duplicate or unknown keys are
// rejected.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

// "key = value" per line for the requested groups, in table order.
std::string describe(const RunConfig& config, const std::vector<KeyGroup>& groups);

}  // namespace fmhca::cli
