#pragma once

#include <cstdint>
#include <string>

namespace tkp {

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

/// Strict whole-string parsers; throw ConfigError prefixed with `key`.
double parse_number(const std::string& key, const std::string& value);
std::uint64_t parse_count(const std::string& key, const std::string& value);
bool parse_flag(const std::string& key, const std::string& value);

}  // namespace tkp
