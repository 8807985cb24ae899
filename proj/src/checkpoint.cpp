#include <cstring>
#include <fstream>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "sslseg/error.hpp"
#include "sslseg/models.hpp"

namespace sslseg::models {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'S', 'L', 'S', 'E', 'G', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

// Layout: magic[8] | u32 version | u64 header_len | header JSON |
//         u64 payload_len | float32 payload | u32 crc32(payload)

json config_json(const UNetConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"encoder_widths", c.encoder_widths},
          {"depth", c.depth},
          {"pointwise_heavy", c.pointwise_heavy},
          {"expansion", c.expansion}};
}

UNetConfig config_from_json(const json& j) {
  UNetConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  c.depth = j.at("depth").get<int>();
  c.pointwise_heavy = j.at("pointwise_heavy").get<bool>();
  c.expansion = j.at("expansion").get<int>();
  return c;
}

template <class T>
void read_pod(std::ifstream& in, T& v, const char* section) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError(std::string("checkpoint truncated in section '") + section + "'");
}

}  // namespace

void save_checkpoint(const UNetModel& model, const std::filesystem::path& path) {
  json params = json::array();
  std::vector<float> payload;
  for (const auto* p : model.parameters()) {
    const auto& s = p->value.shape();
    params.push_back({{"name", p->name}, {"shape", {s[0], s[1], s[2], s[3]}}, {"offset", payload.size()}});
    payload.insert(payload.end(), p->value.data(), p->value.data() + p->value.size());
  }
  const json header{{"config", config_json(model.config())}, {"seed", model.seed()}, {"parameters", params}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::uint64_t header_len = text.size();
  const std::uint64_t payload_len = payload.size() * sizeof(float);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload_len)));
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&kFormatVersion), sizeof(kFormatVersion));
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(&payload_len), sizeof(payload_len));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload_len));
  out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
  if (!out) throw IoError("short write to " + path.string());
}

std::unique_ptr<UNetModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("checkpoint section 'magic' is invalid: " + path.string());
  std::uint32_t version = 0;
  read_pod(in, version, "version");
  if (version != kFormatVersion)
    throw CheckpointError("checkpoint section 'version': unsupported format " + std::to_string(version));

  std::uint64_t header_len = 0;
  read_pod(in, header_len, "header");
  if (header_len > (1u << 26)) throw CheckpointError("checkpoint section 'header' has implausible length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointError("checkpoint truncated in section 'header'");

  json header;
  UNetConfig config;
  std::uint64_t seed = 0;
  try {
    header = json::parse(text);
    seed = header.at("seed").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw CheckpointError(std::string("checkpoint section 'header' is malformed: ") + ex.what());
  }
  try {
    config = config_from_json(header.at("config"));
    config.validate();
  } catch (const json::exception& ex) {
    throw CheckpointError(std::string("checkpoint section 'config' is malformed: ") + ex.what());
  } catch (const ConfigError& ex) {
    throw CheckpointError(std::string("checkpoint section 'config' is invalid: ") + ex.what());
  }

  std::uint64_t payload_len = 0;
  read_pod(in, payload_len, "payload");
  if (payload_len % sizeof(float) != 0 || payload_len > (1ull << 34))
    throw CheckpointError("checkpoint section 'payload' has invalid length");
  std::vector<float> payload(payload_len / sizeof(float));
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_len));
  if (!in) throw CheckpointError("checkpoint truncated in section 'payload'");
  std::uint32_t crc = 0;
  read_pod(in, crc, "checksum");
  const auto actual = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload_len)));
  if (crc != actual) throw CheckpointError("checkpoint section 'checksum' does not match payload");

  auto model = build_model(config, seed);
  try {
    const auto& entries = header.at("parameters");
    auto params = model->parameters();
    if (entries.size() != params.size())
      throw CheckpointError("checkpoint section 'parameters' lists " + std::to_string(entries.size()) +
                            " arrays, model expects " + std::to_string(params.size()));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& e = entries[k];
      const auto name = e.at("name").get<std::string>();
      if (name != params[k]->name)
        throw CheckpointError("checkpoint section 'parameters[" + name + "]' does not match model layout");
      const auto shape = e.at("shape").get<std::vector<int>>();
      const auto& want = params[k]->value.shape();
      if (shape.size() != 4 || !std::equal(shape.begin(), shape.end(), want.begin()))
        throw CheckpointError("checkpoint section 'parameters[" + name + "]' has the wrong shape");
      const auto offset = e.at("offset").get<std::size_t>();
      if (offset + params[k]->value.size() > payload.size())
        throw CheckpointError("checkpoint section 'parameters[" + name + "]' points past the payload");
      std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(offset), params[k]->value.size(),
                  params[k]->value.data());
    }
  } catch (const json::exception& ex) {
    throw CheckpointError(std::string("checkpoint section 'parameters' is malformed: ") + ex.what());
  }
  return model;
}

}  // namespace sslseg::models
