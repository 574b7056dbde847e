#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ltsoups/experiment.hpp"

namespace ltsoups {

struct GridSpec {
  std::vector<double> rho_values{50.0, 100.0, 250.0};
  std::vector<double> eta_values{4.0, 1.0, 0.5, 0.25, 0.1};
  std::vector<std::string> methods{"full_ft", "model_soups", "crt", "lt_soups"};
  int repeats = 1;

  void validate() const;
};

struct Config {
  ExperimentConfig experiment{};
  GridSpec grid{};
};

/// Flat `section.key = value` text. '#' starts a comment; blank lines are
/// ignored; lists are comma separated. Later assignments win.
Config parse_config_text(std::string_view text, Config base = {});
Config parse_config(const std::filesystem::path& path, Config base = {});

// Sets one key from its textual value; unknown keys and malformed values
// are rejected with an error naming the key.
void set_config_value(Config& config, std::string_view key, std::string_view value);

const std::vector<std::string>& config_keys();
std::string config_value(const Config& config, std::string_view key);

// Root seed from LTSOUPS_SEED, if set.
void apply_seed_env(Config& config);

// Range checks naming the offending `section.key`.
void validate_config(const Config& config);

// Every key, one `section.key = value` line each; parses back to the same config.
std::string format_config(const Config& config);

}  // namespace ltsoups
