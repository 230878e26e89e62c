#ifndef FLOWFILT_SCENARIO_CONFIG_HPP
#define FLOWFILT_SCENARIO_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowfilt/filter.hpp"

namespace flowfilt {

// A parsed scenario file: the scenario itself plus run options.
struct RunSetup {
    std::string name;
    Scenario scenario;
    std::vector<Method> methods;  // default: flow-recursive
    std::uint64_t config_hash = 0;
};

// Parses and validates a scenario config. Validation failures throw
// ConfigError carrying the offending field path. Relative file references
// are resolved against base_dir.
RunSetup parseRunSetup(const nlohmann::json& config, const std::string& base_dir);

// Reads the file, parses JSON (parse errors report line/column), then
// validates. ConfigError on any failure.
RunSetup loadRunSetup(const std::string& path);

// FNV-1a over the canonical (key-sorted, whitespace-free) serialization, so
// the hash changes exactly with semantic content.
std::uint64_t configHash(const nlohmann::json& config);

} // namespace flowfilt

#endif
