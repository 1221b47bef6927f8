#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rdbn {

/// 17 significant digits; NaN is written as `NA`.
std::string format_real(double value);

std::vector<std::string_view> split_fields(std::string_view line, char sep);
bool parse_int64(std::string_view token, std::int64_t& value);
/// Accepts `NA` as NaN.
bool parse_real(std::string_view token, double& value);
std::string_view trim(std::string_view s);

} // namespace rdbn
