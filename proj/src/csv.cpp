#include "rpl/csv.hpp"

#include "rpl/core.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rpl {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_number(const std::string& cell, const std::string& origin, std::size_t line_no) {
    if (cell.empty()) throw InputError(origin + ":" + std::to_string(line_no) + ": empty field");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || errno == ERANGE) {
        throw InputError(origin + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
    }
    if (!std::isfinite(v)) {
        throw InputError(origin + ":" + std::to_string(line_no) + ": non-finite value '" + cell + "'");
    }
    return v;
}

}  // namespace

CsvTable parse_csv(const std::string& text, bool has_header, const std::string& origin) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cells = split(line);
        if (header_pending) {
            table.header = std::move(cells);
            header_pending = false;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_number(c, origin, line_no));
        const std::size_t expected = has_header ? table.header.size()
                                                : (table.rows.empty() ? row.size() : table.rows.front().size());
        if (row.size() != expected) {
            throw InputError(origin + ":" + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                             " fields, found " + std::to_string(row.size()));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

CsvTable read_csv(const std::string& path, bool has_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str(), has_header, path);
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

}  // namespace rpl
