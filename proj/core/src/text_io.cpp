#include "oacl/text_io.hpp"

#include <array>
#include <charconv>
#include <fstream>

#include "oacl/errors.hpp"

namespace oacl::text {

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw DataError("format_double: conversion failed");
    return {buf.data(), end};
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataError("not a number: '" + std::string(s) + "'");
    }
    return v;
}

long long parse_int(std::string_view s) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataError("not an integer: '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw DataError("csv: missing column '" + std::string(name) + "'");
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": missing header row");
    table.header = split(line, ',');
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != table.header.size()) {
            throw DataError(path + ": row has " + std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    return table;
}

} // namespace oacl::text
