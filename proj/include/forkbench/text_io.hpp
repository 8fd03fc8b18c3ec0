#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace forkbench::text {

//! Shortest decimal that round-trips the double exactly.
std::string format_double(double v);

double parse_double(std::string_view token, std::size_t line);
long long parse_int(std::string_view token, std::size_t line);

std::vector<std::string_view> split_ws(std::string_view line);
std::string_view trim(std::string_view s);

/// Parses `<magic> v<version>; key=value; key=value` headers. Throws ParseError (line 1)
/// on a wrong magic string, a version mismatch, a duplicate key, or a key outside `allowed`.
std::map<std::string, std::string> parse_header(std::string_view line, std::string_view magic, int version,
                                                const std::vector<std::string_view>& allowed);

}  // namespace forkbench::text
