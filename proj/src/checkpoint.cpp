#include "lisr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "lisr/error.hpp"
#include "lisr/volume.hpp"

namespace lisr {

namespace {

constexpr char kMagic[8] = {'L', 'I', 'S', 'R', 'W', 'T', 'S', '1'};

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void append(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

}  // namespace

void write_weights(const std::filesystem::path& path, std::span<const double> values) {
  std::string out(kMagic, sizeof(kMagic));
  append<std::uint32_t>(out, kWeightsVersion);
  append<std::uint64_t>(out, values.size());
  out.reserve(out.size() + values.size() * sizeof(double));
  for (double v : values) append<double>(out, v);
  write_file_atomic(path, out);
}

std::vector<double> read_weights(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  constexpr std::size_t header = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (in.size() < header || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0)
    throw ParseError(path.string(), "not a weights file");
  const auto version = take<std::uint32_t>(in, sizeof(kMagic));
  if (version != kWeightsVersion)
    throw ParseError(path.string(), "unsupported weights version " + std::to_string(version));
  const auto count = take<std::uint64_t>(in, sizeof(kMagic) + sizeof(std::uint32_t));
  const std::size_t expected = count * sizeof(double);
  if (in.size() - header != expected)
    throw ParseError(path.string(), "expected " + std::to_string(expected) + " weight bytes, found " +
                                        std::to_string(in.size() - header));
  std::vector<double> values(count);
  std::memcpy(values.data(), in.data() + header, expected);
  return values;
}

}  // namespace lisr
