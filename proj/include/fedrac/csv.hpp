#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fedrac {

// Minimal comma-separated table: one header row, no quoting.
struct CsvTable {
    std::filesystem::path source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;
    double number(std::size_t row, std::size_t col) const;
};

CsvTable read_csv(const std::filesystem::path& path);

// Shortest decimal that round-trips to the same double.
std::string format_number(double v);

}  // namespace fedrac
