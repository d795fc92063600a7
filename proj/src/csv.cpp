#include "fedrac/csv.hpp"

#include <charconv>
#include <fstream>

#include "fedrac/error.hpp"

namespace fedrac {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        auto field = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        out.push_back(std::move(field));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    CsvTable t;
    t.source = path;
    std::string line;
    if (!std::getline(is, line)) throw DataError(path.string() + ": empty file");
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto row = split(line);
        if (row.size() != t.header.size())
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " + std::to_string(row.size()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw DataError(source.string() + ": missing column '" + std::string(name) + "'");
}

double CsvTable::number(std::size_t row, std::size_t col) const {
    const std::string& s = rows.at(row).at(col);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw DataError(source.string() + ": row " + std::to_string(row + 1) + ": '" + s + "' is not a number");
    return v;
}

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace fedrac
