/**
 * @file table.hpp
 * @brief Reader for the tool's own CSV outputs (sweep, benchmark,
 *        experiment): a header row, '#' comment lines, empty cells allowed.
 */
#pragma once

#include "vle/detail/csv.hpp"
#include "vle/error.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace vle {

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> comments; ///< without the leading '#'

    std::size_t index(const std::string& column) const
    {
        const auto it = std::find(columns.begin(), columns.end(), column);
        if (it == columns.end())
            throw InputError("table has no column '" + column + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }

    /// Numeric view of one column; empty or non-numeric cells are nullopt.
    std::vector<std::optional<double>> numbers(const std::string& column) const
    {
        const auto c = index(column);
        std::vector<std::optional<double>> out;
        out.reserve(rows.size());
        for (const auto& r : rows)
            out.push_back(detail::parse_double(r[c]));
        return out;
    }
};

inline Table load_table(std::istream& in)
{
    Table t;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto trimmed = detail::trim(line);
        if (trimmed.empty())
            continue;
        if (trimmed.front() == '#') {
            t.comments.emplace_back(detail::trim(trimmed.substr(1)));
            continue;
        }
        std::vector<std::string> fields;
        for (auto f : detail::split_fields(line))
            fields.emplace_back(f);
        if (t.columns.empty()) {
            t.columns = std::move(fields);
            continue;
        }
        if (fields.size() != t.columns.size())
            throw InputError("row " + std::to_string(row) + ": expected " + std::to_string(t.columns.size()) +
                             " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.columns.empty())
        throw InputError("table has no header");
    return t;
}

inline Table load_table_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);
    return load_table(in);
}

} // namespace vle
