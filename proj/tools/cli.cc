#include "cli.h"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedsig/error.h"

namespace fedsig::cli {

namespace {

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error("usage", message) {}
};

// Turns a command-line string into JSON typed like the default value.
nlohmann::json typed_value(const std::string& key, const std::string& text,
                           const nlohmann::json& like) {
  if (like.is_string()) return text;
  std::string literal = like.is_array() ? "[" + text + "]" : text;
  nlohmann::json parsed = nlohmann::json::parse(literal, nullptr, false);
  if (parsed.is_discarded() || parsed.is_string() || parsed.is_object() ||
      (like.is_array() != parsed.is_array())) {
    throw ConfigError("--" + key + ": cannot parse '" + text + "'");
  }
  if (like.is_number_unsigned() &&
      !(parsed.is_number_unsigned() || (parsed.is_number_integer() &&
                                        parsed.get<std::int64_t>() >= 0))) {
    throw ConfigError("--" + key + " expects a non-negative integer, got '" +
                      text + "'");
  }
  return parsed;
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config file " + path + ": " + e.what());
  }
}

void write_error(std::ostream& err, const std::string& kind,
                 const std::string& message) {
  err << nlohmann::json{{"error", {{"kind", kind}, {"message", message}}}}.dump()
      << "\n";
}

struct Flags {
  std::string config_path;
  std::string preset;
  std::map<std::string, std::string> overrides;
};

// Every config key becomes a --<key> flag taking one string value.
std::unique_ptr<CLI::App> make_app(Flags& flags, const nlohmann::json& keys) {
  auto app = std::make_unique<CLI::App>(
      "Federated online signature verification experiments.\n"
      "usage: fedsig <centralized-kernel-sweep|fl-local-epochs|fl-init-ratio|"
      "fl-scalability|single-run> [flags]",
      "fedsig");
  app->add_option("--config", flags.config_path, "JSON config file");
  app->add_option("--preset", flags.preset, "full (default) or desk")
      ->check(CLI::IsMember({"full", "desk"}));
  for (const auto& [key, value] : keys.items()) {
    std::string hint = value.is_array() ? "comma list, default " : "default ";
    std::string shown = value.is_array() ? value.dump().substr(1, value.dump().size() - 2)
                                         : value.is_string() ? value.get<std::string>()
                                                             : value.dump();
    app->add_option_function<std::string>(
        "--" + key,
        [&flags, key = key](const std::string& v) { flags.overrides[key] = v; },
        hint + "'" + shown + "'");
  }
  return app;
}

}  // namespace

std::string help_text() {
  Flags flags;
  return make_app(flags, config_json(default_config(ExperimentKind::kSingleRun)))
      ->help();
}

ExperimentConfig resolve_config(const std::vector<std::string>& args) {
  if (args.empty()) throw UsageError("missing experiment kind");
  const ExperimentKind kind = parse_experiment(args.front());
  ExperimentConfig config = default_config(kind);

  Flags flags;
  const nlohmann::json keys = config_json(config);
  auto app = make_app(flags, keys);
  std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
  try {
    app->parse(rest);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  apply_preset(config, flags.preset);
  if (!flags.config_path.empty()) {
    apply_json(config, read_config_file(flags.config_path));
  }
  nlohmann::json patch = nlohmann::json::object();
  for (const auto& [key, text] : flags.overrides) {
    patch[key] = typed_value(key, text, keys.at(key));
  }
  apply_json(config, patch);
  config.validate();
  return config;
}

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  if (std::find(args.begin(), args.end(), "--help") != args.end() ||
      std::find(args.begin(), args.end(), "-h") != args.end()) {
    out << help_text();
    return kOk;
  }
  if (!args.empty() && args.front() == "--version") {
    out << version_string() << "\n";
    return kOk;
  }
  try {
    const ExperimentConfig config = resolve_config(args);
    const ExperimentOutcome outcome = run_experiment(config);
    out << outcome.summary.dump(2) << "\n";
    return kOk;
  } catch (const Error& e) {
    write_error(err, e.kind(), e.what());
    const bool usage = e.kind() == "usage" || e.kind() == "config";
    return usage ? kUsageFailure : kRunFailure;
  } catch (const std::exception& e) {
    write_error(err, "internal", e.what());
    return kRunFailure;
  }
}

}  // namespace fedsig::cli
