#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rlalign/agent.hpp"
#include "rlalign/baseline.hpp"
#include "rlalign/env.hpp"
#include "rlalign/phantom.hpp"

namespace rlalign::cli {

// Every tunable of the tool in one flat namespace of dotted keys.
struct RunConfig {
    PhantomConfig phantom;
    PairConfig pair;
    EnvConfig env;
    AgentConfig agent;
    BaselineConfig baseline;
    std::uint64_t seed = 1;
    int pairs = 10;

    // Cross-module consistency plus each module's own validation.
    void validate() const;
};

std::vector<std::string> config_keys();

// Throws ConfigError for unknown keys or values of the wrong type.
void set_key(RunConfig& cfg, const std::string& key, const std::string& json_value);
// `key=value`; the value is parsed as JSON, falling back to a bare string.
void apply_assignment(RunConfig& cfg, const std::string& assignment);
// Flat JSON object of key -> value.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Named settings bundles: "desk", "paper", "smoke".
void apply_preset(RunConfig& cfg, const std::string& name);
std::vector<std::string> preset_names();

// Sorted, pretty-printed flat JSON of every key.
std::string dump_config(const RunConfig& cfg);

} // namespace rlalign::cli
