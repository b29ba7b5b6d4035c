#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "hmbayes/experiment.hpp"

namespace hmb {

/// Settings of the KLE truncation-error study written by the basis stage.
struct TruncationConfig {
  int max_order = 20;
  int realizations = 100;
  bool responses = true;
  std::uint64_t seed = 20110005;
};

struct RunConfig {
  std::string preset = "paper-full";
  ExperimentConfig experiment;
  TruncationConfig truncation;

  void validate() const;
};

// "paper-full" (M = 7, 80,000 samples) or "paper-desk" (M = 3, 5,000 samples).
// Throws ConfigError for any other name.
RunConfig preset_config(const std::string& name);

// Overlays the keys present in `j` onto `config`. Unknown keys, wrong types
// and malformed values raise ConfigError naming the offending key.
void apply_json(RunConfig& config, const nlohmann::json& j);

// Every setting, with times in hours. apply_json(preset, to_json(c)) == c.
nlohmann::json to_json(const RunConfig& config);

// Replaces every stage seed by one derived from `master`.
void reseed(RunConfig& config, std::uint64_t master);

// Preset, then the config file (if any), then the master seed (if any). An
// explicit `preset` overrides the one named in the file; without either the
// paper-full preset is used.
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::optional<std::string>& preset,
                      const std::optional<std::uint64_t>& seed);

} // namespace hmb
