#include "fedsig/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fedsig/error.h"
#include "fedsig/json_io.h"

namespace fedsig {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'I', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& offset) {
  if (offset + sizeof(T) > in.size()) {
    throw ParseError("checkpoint truncated at byte " + std::to_string(offset));
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(in[offset + i]) << (8 * i);
  }
  offset += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  check_params(checkpoint.config, checkpoint.params);
  nlohmann::json header = checkpoint.metadata.is_object()
                              ? checkpoint.metadata
                              : nlohmann::json::object();
  header["model_config"] = checkpoint.config;
  const std::string header_text = header.dump();
  const auto flat = flatten_params(checkpoint.params);

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header_text.size()));
  out.insert(out.end(), header_text.begin(), header_text.end());
  put_le<std::uint64_t>(out, flat.size());
  for (double v : flat) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ParseError("not a fedsig checkpoint (bad magic)");
  }
  std::size_t offset = 8;
  const auto version = get_le<std::uint32_t>(bytes, offset);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint32_t>(bytes, offset);
  if (offset + header_len > bytes.size()) {
    throw ParseError("checkpoint header truncated");
  }
  const std::string header_text(bytes.begin() + offset,
                                bytes.begin() + offset + header_len);
  offset += header_len;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  if (!header.contains("model_config")) {
    throw ParseError("checkpoint header lacks model_config");
  }
  Checkpoint checkpoint;
  checkpoint.config = header.at("model_config").get<ModelConfig>();
  header.erase("model_config");
  checkpoint.metadata = std::move(header);

  const auto count = get_le<std::uint64_t>(bytes, offset);
  const std::size_t remaining = bytes.size() - offset;
  if (remaining % 8 != 0 || remaining / 8 != count) {
    throw ParseError("checkpoint payload has " +
                     std::to_string(remaining) +
                     " bytes, expected " + std::to_string(count * 8));
  }
  std::vector<double> flat(count);
  for (auto& v : flat) v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset));
  checkpoint.params = unflatten_params(flat, checkpoint.config);
  return checkpoint;
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& checkpoint) {
  const auto bytes = encode_checkpoint(checkpoint);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace fedsig
