#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sctraj/csv.hpp"
#include "sctraj/error.hpp"

namespace sctraj {

/// Flat dotted key = value configuration. '#' starts a comment; list values
/// are comma separated. Environment variables SCTRAJ_<KEY> (upper case, dots
/// as underscores) override file values for known keys.
class Config {
public:
    static constexpr const char* kEnvPrefix = "SCTRAJ_";

    Config() = default;

    static Config parse(std::istream& in, const std::string& origin = "<config>")
    {
        Config c;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            const std::string t = trim(line);
            if (t.empty())
                continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw Error(ErrorKind::ConfigError, origin + ":" + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw Error(ErrorKind::ConfigError, origin + ":" + std::to_string(lineno) + ": empty key");
            if (c.values_.count(key))
                throw Error(ErrorKind::ConfigError, origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
            c.values_[key] = value;
        }
        return c;
    }

    static Config load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw Error(ErrorKind::ConfigError, "cannot open config " + path);
        return parse(in, path);
    }

    static std::string env_name(const std::string& key)
    {
        std::string out = kEnvPrefix;
        for (char ch : key)
            out += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        return out;
    }

    /// Rejects unknown keys, then applies environment overrides for the schema.
    void validate_and_override(const std::set<std::string>& schema)
    {
        for (const auto& [k, v] : values_)
            if (!schema.count(k))
                throw Error(ErrorKind::ConfigError, "unknown config key '" + k + "'");
        for (const auto& k : schema)
            if (const char* e = std::getenv(env_name(k).c_str()))
                values_[k] = trim(e);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback) const
    {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const
    {
        auto it = values_.find(key);
        if (it == values_.end() || it->second.empty())
            throw Error(ErrorKind::ConfigError, "missing required key '" + key + "'");
        return it->second;
    }

    double number(const std::string& key, double fallback) const
    {
        return has(key) ? to_double(key, values_.at(key)) : fallback;
    }

    double number(const std::string& key) const { return to_double(key, require(key)); }

    long integer(const std::string& key, long fallback) const
    {
        if (!has(key))
            return fallback;
        const double v = to_double(key, values_.at(key));
        if (v != static_cast<double>(static_cast<long>(v)))
            throw Error(ErrorKind::ConfigError, "key '" + key + "' must be an integer");
        return static_cast<long>(v);
    }

    bool boolean(const std::string& key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        const std::string v = lower(values_.at(key));
        if (v == "true" || v == "yes" || v == "1" || v == "on")
            return true;
        if (v == "false" || v == "no" || v == "0" || v == "off")
            return false;
        throw Error(ErrorKind::ConfigError, "key '" + key + "' must be a boolean");
    }

    std::vector<std::string> list(const std::string& key) const
    {
        std::vector<std::string> out;
        if (!has(key))
            return out;
        for (auto& item : csv::split(values_.at(key)))
            if (auto t = trim(item); !t.empty())
                out.push_back(t);
        return out;
    }

    std::vector<double> numbers(const std::string& key) const
    {
        std::vector<double> out;
        for (const auto& item : list(key))
            out.push_back(to_double(key, item));
        return out;
    }

    /// Sorted key = value lines; written next to every run's outputs.
    std::string dump() const
    {
        std::ostringstream os;
        for (const auto& [k, v] : values_)
            os << k << " = " << v << '\n';
        return os.str();
    }

    static std::string trim(const std::string& s)
    {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos)
            return {};
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static std::string lower(std::string s)
    {
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        return s;
    }

private:
    static double to_double(const std::string& key, const std::string& text)
    {
        double v = 0.0;
        const char* first = text.data();
        const char* last = first + text.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last)
            throw Error(ErrorKind::ConfigError, "key '" + key + "' has non-numeric value '" + text + "'");
        return v;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace sctraj
