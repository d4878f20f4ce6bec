#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace lisr {

inline constexpr int kWeightsVersion = 1;

/// Binary weights: 8-byte magic "LISRWTS1", little-endian u32 version,
/// u64 count, then `count` little-endian float64 values.
void write_weights(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_weights(const std::filesystem::path& path);

}  // namespace lisr
