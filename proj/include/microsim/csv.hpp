#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace microsim::csv
{

/// A parsed delimited file: header plus data rows, cells kept as text.
struct Document
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based line number of each data row in the source file.
    std::vector<std::size_t> lines;
};

/// Splits one line on `delim`. Double-quoted fields may contain the delimiter;
/// `""` inside quotes is a literal quote.
std::vector<std::string> split_line(std::string_view line, char delim = ',');

/// Reads a file with a header row. Blank lines are skipped. Throws
/// file_not_found / empty_file.
Document read(const std::filesystem::path& path, char delim = ',');

std::string trim(std::string_view s);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_integer(std::string_view s);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

/// Quotes a field if it contains a comma, quote or newline.
std::string escape(std::string_view field);

}  // namespace microsim::csv
