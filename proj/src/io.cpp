#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lisr/error.hpp"
#include "lisr/volume.hpp"

namespace lisr {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "lisr-volume";
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

std::string encode_samples(const Tensor& t, SampleType type) {
  std::string out;
  if (type == SampleType::kFloat64) {
    out.resize(t.size() * sizeof(double));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double v = to_little(t[i]);
      std::memcpy(out.data() + i * sizeof(double), &v, sizeof(double));
    }
  } else {
    out.resize(t.size() * sizeof(float));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float v = to_little(static_cast<float>(t[i]));
      std::memcpy(out.data() + i * sizeof(float), &v, sizeof(float));
    }
  }
  return out;
}

std::filesystem::path header_path(const std::filesystem::path& data_path) {
  return std::filesystem::path(data_path.string() + ".json");
}

void write_tensor(const Tensor& t, const json& header_extra, const std::filesystem::path& path,
                  SampleType type) {
  json header = header_extra;
  header["format"] = kFormat;
  header["version"] = kFormatVersion;
  header["shape"] = {t.shape().c, t.shape().d, t.shape().h, t.shape().w};
  header["dtype"] = type == SampleType::kFloat64 ? "float64" : "float32";
  header["byte_order"] = "little";
  header["data_file"] = path.filename().string();
  write_file_atomic(path, encode_samples(t, type));
  write_file_atomic(header_path(path), header.dump(2) + "\n");
}

struct RawTensor {
  json header;
  Tensor values;
};

RawTensor read_tensor(const std::filesystem::path& path) {
  const std::filesystem::path hpath = header_path(path);
  json header;
  try {
    header = json::parse(read_file(hpath));
  } catch (const json::parse_error& e) {
    throw ParseError(hpath.string(), std::string("malformed header: ") + e.what());
  }
  try {
    if (header.at("format").get<std::string>() != kFormat)
      throw ParseError(hpath.string(), "not a lisr-volume header");
    if (header.at("version").get<int>() != kFormatVersion)
      throw ParseError(hpath.string(), "unsupported format version");
    if (header.at("byte_order").get<std::string>() != "little")
      throw ParseError(hpath.string(), "unsupported byte order");
    const auto dims = header.at("shape").get<std::vector<int>>();
    if (dims.size() != 4) throw ParseError(hpath.string(), "shape must have 4 entries");
    const Shape shape{dims[0], dims[1], dims[2], dims[3]};
    if (!shape.valid()) throw ParseError(hpath.string(), "non-positive shape");
    const std::string dtype = header.at("dtype").get<std::string>();
    std::size_t width = 0;
    if (dtype == "float64") {
      width = sizeof(double);
    } else if (dtype == "float32") {
      width = sizeof(float);
    } else {
      throw ParseError(hpath.string(), "unknown dtype '" + dtype + "'");
    }

    const std::string bytes = read_file(path);
    if (bytes.size() != shape.size() * width)
      throw ParseError(path.string(), "expected " + std::to_string(shape.size() * width) +
                                          " data bytes, found " + std::to_string(bytes.size()));
    std::vector<double> values(shape.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (width == sizeof(double)) {
        double v;
        std::memcpy(&v, bytes.data() + i * width, width);
        values[i] = to_little(v);
      } else {
        float v;
        std::memcpy(&v, bytes.data() + i * width, width);
        values[i] = to_little(v);
      }
    }
    return {header, Tensor(shape, std::move(values))};
  } catch (const json::exception& e) {
    throw ParseError(hpath.string(), std::string("invalid header field: ") + e.what());
  }
}

const char* role_name(LatentRole r) {
  switch (r) {
    case LatentRole::kClean: return "clean";
    case LatentRole::kNoisy: return "noisy";
    case LatentRole::kTerminal: return "terminal";
  }
  return "clean";
}

}  // namespace

void save_volume(const Volume& v, const std::filesystem::path& path, SampleType type) {
  json extra;
  extra["kind"] = "volume";
  extra["spacing"] = v.spacing;
  extra["meta"] = v.meta;
  write_tensor(v.data, extra, path, type);
}

Volume load_volume(const std::filesystem::path& path) {
  RawTensor raw = read_tensor(path);
  const std::string hpath = header_path(path).string();
  try {
    if (raw.header.at("kind").get<std::string>() != "volume")
      throw ParseError(hpath, "file does not hold a volume");
    if (raw.values.shape().c != 1) throw ParseError(hpath, "volume must have one channel");
    const auto spacing = raw.header.at("spacing").get<std::array<double, 3>>();
    auto meta = raw.header.value("meta", json::object()).get<MetaData>();
    return Volume(std::move(raw.values), spacing, std::move(meta));
  } catch (const json::exception& e) {
    throw ParseError(hpath, std::string("invalid header field: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(hpath, e.what());
  }
}

void save_latent(const Latent& z, const std::filesystem::path& path) {
  json extra;
  extra["kind"] = "latent";
  extra["role"] = role_name(z.role);
  write_tensor(z.data, extra, path, SampleType::kFloat64);
}

Latent load_latent(const std::filesystem::path& path) {
  RawTensor raw = read_tensor(path);
  const std::string hpath = header_path(path).string();
  try {
    if (raw.header.at("kind").get<std::string>() != "latent")
      throw ParseError(hpath, "file does not hold a latent");
    const std::string role = raw.header.at("role").get<std::string>();
    Latent z{std::move(raw.values), LatentRole::kClean};
    if (role == "noisy") {
      z.role = LatentRole::kNoisy;
    } else if (role == "terminal") {
      z.role = LatentRole::kTerminal;
    } else if (role != "clean") {
      throw ParseError(hpath, "unknown latent role '" + role + "'");
    }
    return z;
  } catch (const json::exception& e) {
    throw ParseError(hpath, std::string("invalid header field: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace lisr
