#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sctraj/error.hpp"

namespace sctraj::csv {

/// Numbers are written with 12 significant digits everywhere.
inline std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    Writer& comment(std::string_view text)
    {
        os_ << "# " << text << '\n';
        return *this;
    }

    Writer& header(std::initializer_list<std::string_view> cols)
    {
        bool first = true;
        for (auto c : cols) {
            if (!first)
                os_ << ',';
            os_ << c;
            first = false;
        }
        os_ << '\n';
        return *this;
    }

    Writer& field(double v) { return raw(num(v)); }
    Writer& field(std::string_view s) { return raw(s); }
    Writer& field(int v) { return raw(std::to_string(v)); }

    Writer& end()
    {
        os_ << '\n';
        first_ = true;
        return *this;
    }

private:
    Writer& raw(std::string_view s)
    {
        if (!first_)
            os_ << ',';
        os_ << s;
        first_ = false;
        return *this;
    }

    std::ostream& os_;
    bool first_ = true;
};

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const
    {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name)
                return i;
        throw Error(ErrorKind::IoError, "missing CSV column '" + std::string(name) + "'");
    }
};

inline std::vector<std::string> split(const std::string& line, char sep = ',')
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, sep))
        out.push_back(cell);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

/// Reads a CSV with one header row; lines starting with '#' are skipped.
inline Table read(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::IoError, "cannot open " + path);
    Table t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        if (!have_header) {
            t.columns = split(line);
            have_header = true;
        } else {
            t.rows.push_back(split(line));
        }
    }
    if (!have_header)
        throw Error(ErrorKind::IoError, path + " has no header row");
    return t;
}

}  // namespace sctraj::csv
