#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace oacl::text {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string> split(std::string_view line, char sep);

/// Parsed comma-separated file with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws DataError if absent.
    std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::string& path);

} // namespace oacl::text
