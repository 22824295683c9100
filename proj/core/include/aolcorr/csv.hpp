#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace aolcorr::csv {

/// Splits one CSV record. Handles double-quoted fields with "" escapes.
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

double parse_double(std::string_view field);
long long parse_int(std::string_view field);

/// Reads the next line, stripping a trailing '\r'. False at end of stream.
bool read_line(std::istream& in, std::string& line);

}  // namespace aolcorr::csv
