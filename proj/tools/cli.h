#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fedsig/experiment.h"

namespace fedsig::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRunFailure = 1;
inline constexpr int kUsageFailure = 2;

// Resolves the configuration from
//   fedsig <kind> [--config path] [--preset desk] [--<key> value ...]
// Layering: kind defaults, preset, config file, command-line keys.
// Throws ConfigError (or ParseError for a malformed config file).
ExperimentConfig resolve_config(const std::vector<std::string>& args);

// Help listing every flag.
std::string help_text();

// Full entry point. Writes the run summary to `out`; on failure writes
// {"error":{"kind":...,"message":...}} to `err` and returns nonzero.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace fedsig::cli
