#include "sslseg/dataset_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "sslseg/error.hpp"

namespace sslseg::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "raw array files are written in native little-endian order");

constexpr std::array<char, 4> kFloatMagic{'S', 'S', 'F', '4'};
constexpr std::array<char, 4> kByteMagic{'S', 'S', 'U', '1'};
constexpr int kManifestVersion = 1;

void write_raw(const fs::path& path, const std::array<char, 4>& magic, const ArrayHeader& h,
               const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::uint32_t dims[3] = {h.height, h.width, h.channels};
  out.write(magic.data(), 4);
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<char> read_raw(const fs::path& path, const std::array<char, 4>& magic,
                           std::size_t elem, ArrayHeader& h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char m[4];
  std::uint32_t dims[3];
  in.read(m, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in) throw IoError(path.string() + ": truncated header");
  if (std::memcmp(m, magic.data(), 4) != 0) throw IoError(path.string() + ": bad magic");
  h = {dims[0], dims[1], dims[2]};
  const std::size_t bytes = static_cast<std::size_t>(h.height) * h.width * h.channels * elem;
  std::vector<char> buf(bytes);
  in.read(buf.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw IoError(path.string() + ": truncated payload");
  return buf;
}

}  // namespace

void write_float_array(const fs::path& path, const ArrayHeader& header, std::span<const float> values) {
  write_raw(path, kFloatMagic, header, values.data(), values.size_bytes());
}

void write_byte_array(const fs::path& path, const ArrayHeader& header,
                      std::span<const std::uint8_t> values) {
  write_raw(path, kByteMagic, header, values.data(), values.size_bytes());
}

std::vector<float> read_float_array(const fs::path& path, ArrayHeader& header) {
  auto raw = read_raw(path, kFloatMagic, sizeof(float), header);
  std::vector<float> out(raw.size() / sizeof(float));
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

std::vector<std::uint8_t> read_byte_array(const fs::path& path, ArrayHeader& header) {
  auto raw = read_raw(path, kByteMagic, 1, header);
  return {raw.begin(), raw.end()};
}

void write_mask(const fs::path& path, const GroundTruthMask& mask) {
  write_byte_array(path, {static_cast<std::uint32_t>(mask.height), static_cast<std::uint32_t>(mask.width), 1},
                   mask.labels);
}

GroundTruthMask read_mask(const fs::path& path) {
  ArrayHeader h;
  auto labels = read_byte_array(path, h);
  if (h.channels != 1) throw IoError(path.string() + ": mask must have one channel");
  return {static_cast<int>(h.height), static_cast<int>(h.width), std::move(labels)};
}

namespace {

json normalization_json(const CompositeNormalization& n) {
  return {{"vv_min", n.vv_min},       {"vv_max", n.vv_max},       {"vh_min", n.vh_min},
          {"vh_max", n.vh_max},       {"ratio_min", n.ratio_min}, {"ratio_max", n.ratio_max}};
}

CompositeNormalization normalization_from_json(const json& j) {
  CompositeNormalization n;
  n.vv_min = j.at("vv_min").get<float>();
  n.vv_max = j.at("vv_max").get<float>();
  n.vh_min = j.at("vh_min").get<float>();
  n.vh_max = j.at("vh_max").get<float>();
  n.ratio_min = j.at("ratio_min").get<float>();
  n.ratio_max = j.at("ratio_max").get<float>();
  return n;
}

void save_tile(const fs::path& root, const LabeledExample& e) {
  const auto& t = e.tile();
  const ArrayHeader h{static_cast<std::uint32_t>(t.height), static_cast<std::uint32_t>(t.width), 1};
  write_float_array(root / ("vv_" + t.id + ".bin"), h, t.vv);
  write_float_array(root / ("vh_" + t.id + ".bin"), h, t.vh);
  write_byte_array(root / ("valid_" + t.id + ".bin"), h, t.valid);
  write_mask(root / ("mask_" + t.id + ".bin"), e.mask());
}

}  // namespace

void save_dataset(const fs::path& root, const Dataset& dataset) {
  fs::create_directories(root);
  json tiles = json::array();
  for (const DatasetIndex* idx : {&dataset.train, &dataset.val, &dataset.test}) {
    for (const auto& e : idx->examples()) {
      save_tile(root, *e);
      tiles.push_back({{"id", e->id()},
                       {"split", std::string(to_string(idx->split()))},
                       {"region", e->region()},
                       {"tier", std::string(to_string(e->tier()))},
                       {"flood_present", e->flood_present()}});
    }
  }
  json manifest{{"format_version", kManifestVersion},
                {"normalization", normalization_json(dataset.normalization)},
                {"tiles", tiles}};
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + root.string());
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw IoError("no manifest.json in " + root.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& ex) {
    throw IoError("manifest.json: " + std::string(ex.what()));
  }
  if (manifest.value("format_version", 0) != kManifestVersion)
    throw IoError("manifest.json: unsupported format_version");
  Dataset ds;
  try {
    ds.normalization = normalization_from_json(manifest.at("normalization"));
    for (const auto& entry : manifest.at("tiles")) {
      TilePair tile;
      tile.id = entry.at("id").get<std::string>();
      ArrayHeader h;
      tile.vv = read_float_array(root / ("vv_" + tile.id + ".bin"), h);
      tile.height = static_cast<int>(h.height);
      tile.width = static_cast<int>(h.width);
      tile.vh = read_float_array(root / ("vh_" + tile.id + ".bin"), h);
      tile.valid = read_byte_array(root / ("valid_" + tile.id + ".bin"), h);
      auto mask = read_mask(root / ("mask_" + tile.id + ".bin"));
      auto image = compose_rgb(tile, ds.normalization);
      auto example = std::make_shared<LabeledExample>(
          std::move(tile), std::move(image), std::move(mask),
          tier_from_string(entry.at("tier").get<std::string>()), entry.at("region").get<std::string>());
      if (example->flood_present() != entry.at("flood_present").get<bool>())
        throw IoError("manifest.json: flood_present flag disagrees with mask of " + example->id());
      switch (split_from_string(entry.at("split").get<std::string>())) {
        case Split::Train: ds.train.add(std::move(example)); break;
        case Split::Val: ds.val.add(std::move(example)); break;
        case Split::Test: ds.test.add(std::move(example)); break;
      }
    }
  } catch (const json::exception& ex) {
    throw IoError("manifest.json: " + std::string(ex.what()));
  }
  return ds;
}

namespace {

void put_u32_be(std::vector<unsigned char>& buf, std::uint32_t v) {
  buf.push_back(static_cast<unsigned char>(v >> 24));
  buf.push_back(static_cast<unsigned char>(v >> 16));
  buf.push_back(static_cast<unsigned char>(v >> 8));
  buf.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& png, const char* type, const std::vector<unsigned char>& data) {
  put_u32_be(png, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = png.size();
  png.insert(png.end(), type, type + 4);
  png.insert(png.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, png.data() + start, static_cast<uInt>(png.size() - start));
  put_u32_be(png, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_mask_png(const fs::path& path, const GroundTruthMask& mask) {
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(mask.height) * (mask.width + 1));
  for (int y = 0; y < mask.height; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < mask.width; ++x)
      raw.push_back(mask.labels[static_cast<std::size_t>(y) * mask.width + x] ? 255 : 0);
  }
  uLongf zsize = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(zsize);
  if (compress2(z.data(), &zsize, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("zlib compression failed for " + path.string());
  z.resize(zsize);

  std::vector<unsigned char> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<unsigned char> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(mask.width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(mask.height));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit gray, deflate, no interlace
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", z);
  put_chunk(png, "IEND", {});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
}

}  // namespace sslseg::data
