// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "unlearn/engine.hpp"

namespace unlearn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat `key = value` text with dotted namespaces (sched.T, loss.xi, mask.q, ...).
/// Blank lines and `#` comments are ignored; keys not listed in config_keys()
/// are rejected. Unspecified keys keep their defaults.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Every key in canonical order, values in shortest round-trip form.
std::string serialize_config(const RunConfig& config);

void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);
bool has_config_key(std::string_view key);
std::vector<std::string> config_keys();

}  // namespace unlearn
