#pragma once

// Small text helpers shared by the config, data and report writers.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace smelu::text {

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// Hexfloat representation, exact for checkpoints.
std::string format_hex(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

/// 64-bit FNV-1a, used for config fingerprints in report headers.
std::uint64_t fnv1a(std::string_view s);

}  // namespace smelu::text
