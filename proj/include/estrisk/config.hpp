#pragma once

#include <string>

#include "estrisk/common.hpp"
#include "estrisk/json_value.hpp"
#include "estrisk/simulation.hpp"

namespace estrisk::cli {

inline constexpr const char* kVersion = "0.1.0";

// Fully-resolved run configuration: the experiment spec plus output naming.
// Parsing is strict (unknown keys are rejected with their full path) and
// every field has a documented default, so the echoed configuration in any
// output file reproduces the run exactly.
struct Config {
    sim::ExperimentSpec experiment;
    std::string output_prefix = "experiment";
};

Config parse_config(const std::string& json_text, const std::string& origin);
Config load_config_file(const std::string& path);

// The resolved configuration serialized back to JSON (defaults filled in,
// floats at 17 significant digits). parse_config(config_json(c)) == c.
std::string config_json(const Config& c);
io::JsonValue config_json_value(const Config& c);

}  // namespace estrisk::cli
