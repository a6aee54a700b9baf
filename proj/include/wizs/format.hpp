#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace wizs {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Parses a full string as a double; throws Error(kInvalidArgument) otherwise.
double parse_double(std::string_view text);

// Minimal RFC 4180 CSV: fields are quoted only when needed.
std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

}  // namespace wizs
