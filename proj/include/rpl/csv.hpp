#pragma once

#include <string>
#include <vector>

namespace rpl {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

/// Parses comma-separated finite decimals. Accepts LF or CRLF line endings and a
/// leading UTF-8 BOM; blank lines are skipped. Throws InputError on malformed input.
CsvTable read_csv(const std::string& path, bool has_header);
CsvTable parse_csv(const std::string& text, bool has_header, const std::string& origin = "<memory>");

/// "%.17g"
std::string format_double(double value);

}  // namespace rpl
