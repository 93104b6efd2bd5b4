#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace appraisal {

std::string_view trim(std::string_view s);
std::string ascii_lower(std::string_view s);
std::vector<std::string> split_on(std::string_view s, char sep);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
/// Fixed-point with `digits` decimals ("0.7383").
std::string format_fixed(double value, int digits);
/// Parses a full string as double; throws ParseError on trailing junk.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

}  // namespace appraisal
