#include "fedsig/json_io.h"

#include <charconv>
#include <fstream>
#include <set>

#include "fedsig/error.h"

namespace fedsig {

void to_json(nlohmann::json& j, const ModelConfig& config) {
  j = nlohmann::json{{"kernel_size", config.kernel_size},
                     {"channel_widths", config.channel_widths},
                     {"input_channels", config.input_channels},
                     {"max_length", config.max_length},
                     {"pool_window", config.pool_window},
                     {"pool_stride", config.pool_stride},
                     {"pool_pad", config.pool_pad},
                     {"conv_stride", config.conv_stride},
                     {"num_classes", config.num_classes},
                     {"bn_eps", config.bn_eps},
                     {"bn_momentum", config.bn_momentum},
                     {"seed", config.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& config) {
  static const std::set<std::string> kKeys = {
      "kernel_size", "channel_widths", "input_channels", "max_length",
      "pool_window", "pool_stride",    "pool_pad",       "conv_stride",
      "num_classes", "bn_eps",         "bn_momentum",    "seed"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) throw ConfigError("unknown model config key: " + key);
  }
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("kernel_size", config.kernel_size);
  read("channel_widths", config.channel_widths);
  read("input_channels", config.input_channels);
  read("max_length", config.max_length);
  read("pool_window", config.pool_window);
  read("pool_stride", config.pool_stride);
  read("pool_pad", config.pool_pad);
  read("conv_stride", config.conv_stride);
  read("num_classes", config.num_classes);
  read("bn_eps", config.bn_eps);
  read("bn_momentum", config.bn_momentum);
  read("seed", config.seed);
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

}  // namespace fedsig
