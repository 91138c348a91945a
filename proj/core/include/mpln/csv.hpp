#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mpln::csv {

using Row = std::vector<std::string>;

/// Reads every record of a delimited file. Handles RFC-4180 quoting
/// (doubled quotes inside quoted fields, embedded delimiters and newlines)
/// and strips a trailing '\r' from CRLF files. Blank lines are skipped.
std::vector<Row> read(std::istream& in, char delimiter = ',');
std::vector<Row> read_file(const std::filesystem::path& path, char delimiter = ',');

/// Quotes a field only when it contains the delimiter, a quote or a newline.
std::string escape(std::string_view field, char delimiter = ',');

void write_row(std::ostream& out, const Row& row, char delimiter = ',');

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

}  // namespace mpln::csv
