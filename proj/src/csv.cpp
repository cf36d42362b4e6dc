#include "microsim/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "microsim/error.hpp"

namespace microsim::csv
{

std::vector<std::string> split_line(std::string_view line, char delim)
{
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i)
    {
        const char ch = line[i];
        if (quoted)
        {
            if (ch == '"')
            {
                if (i + 1 < line.size() && line[i + 1] == '"')
                {
                    field.push_back('"');
                    ++i;
                }
                else
                {
                    quoted = false;
                }
            }
            else
            {
                field.push_back(ch);
            }
        }
        else if (ch == '"')
        {
            quoted = true;
        }
        else if (ch == delim)
        {
            out.push_back(trim(field));
            field.clear();
        }
        else
        {
            field.push_back(ch);
        }
    }
    out.push_back(trim(field));
    return out;
}

std::string trim(std::string_view s)
{
    auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

Document read(const std::filesystem::path& path, char delim)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::file_not_found, "cannot open '" + path.string() + "'");

    Document doc;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line))
    {
        ++line_no;
        if (trim(line).empty())
            continue;
        // UTF-8 byte order mark
        if (!have_header && line.starts_with("\xEF\xBB\xBF"))
            line.erase(0, 3);
        if (!have_header)
        {
            doc.header = split_line(line, delim);
            have_header = true;
            continue;
        }
        doc.rows.push_back(split_line(line, delim));
        doc.lines.push_back(line_no);
    }
    if (!have_header)
        throw Error(ErrorKind::empty_file, "'" + path.string() + "' has no header row");
    return doc;
}

std::optional<double> parse_double(std::string_view s)
{
    std::string t = trim(s);
    if (t.empty())
        return std::nullopt;
    double value = 0.0;
    const char* begin = t.data();
    if (*begin == '+')
        ++begin;
    auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        return std::nullopt;
    return value;
}

std::optional<long long> parse_integer(std::string_view s)
{
    auto value = parse_double(s);
    if (!value || !std::isfinite(*value) || std::floor(*value) != *value)
        return std::nullopt;
    return static_cast<long long>(*value);
}

std::string format_double(double value)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string escape(std::string_view field)
{
    if (field.find_first_of(",\"\n\r") == std::string_view::npos)
        return std::string(field);
    std::string out = "\"";
    for (char ch : field)
    {
        if (ch == '"')
            out += "\"\"";
        else
            out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

}  // namespace microsim::csv
