#pragma once
// Structured-text configuration: a small TOML subset sufficient for run
// recipes.  Supported: [section] and [section.sub] headers, key = value with
// bare keys, values of type bool / integer / float / "string" / [array of
// scalars], and # comments.  Parse errors carry line and column.

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "halfline/util.hpp"

namespace halfline {

struct ConfigValue {
    using Array = std::vector<ConfigValue>;
    std::variant<bool, int64_t, double, std::string, Array> v;
    int line = 0, column = 0;

    bool is_number() const {
        return std::holds_alternative<int64_t>(v) || std::holds_alternative<double>(v);
    }
    double as_double() const {
        if (std::holds_alternative<int64_t>(v)) return static_cast<double>(std::get<int64_t>(v));
        if (std::holds_alternative<double>(v)) return std::get<double>(v);
        throw ConfigError("expected a number", line, column);
    }
    int64_t as_int() const {
        if (std::holds_alternative<int64_t>(v)) return std::get<int64_t>(v);
        throw ConfigError("expected an integer", line, column);
    }
    bool as_bool() const {
        if (std::holds_alternative<bool>(v)) return std::get<bool>(v);
        throw ConfigError("expected a boolean", line, column);
    }
    const std::string& as_string() const {
        if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
        throw ConfigError("expected a string", line, column);
    }
    std::vector<double> as_double_array() const {
        if (!std::holds_alternative<Array>(v)) throw ConfigError("expected an array", line, column);
        std::vector<double> out;
        for (const auto& e : std::get<Array>(v)) out.push_back(e.as_double());
        return out;
    }
};

// Keys are fully qualified ("section.sub.key"); insertion order is preserved
// separately so emitted manifests are deterministic.
struct Config {
    std::map<std::string, ConfigValue> values;
    std::vector<std::string> order;

    bool has(const std::string& key) const { return values.count(key) != 0; }

    const ConfigValue& at(const std::string& key) const {
        auto it = values.find(key);
        if (it == values.end()) throw ConfigError("missing required key '" + key + "'");
        return it->second;
    }
    double number(const std::string& key) const { return at(key).as_double(); }
    double number_or(const std::string& key, double dflt) const {
        return has(key) ? at(key).as_double() : dflt;
    }
    int64_t integer(const std::string& key) const { return at(key).as_int(); }
    int64_t integer_or(const std::string& key, int64_t dflt) const {
        return has(key) ? at(key).as_int() : dflt;
    }
    std::string text(const std::string& key) const { return at(key).as_string(); }
    std::string text_or(const std::string& key, const std::string& dflt) const {
        return has(key) ? at(key).as_string() : dflt;
    }
    bool flag_or(const std::string& key, bool dflt) const {
        return has(key) ? at(key).as_bool() : dflt;
    }
    std::vector<double> numbers(const std::string& key) const { return at(key).as_double_array(); }

    // keys under a prefix, e.g. prefix "potential" matches "potential.rule"
    std::vector<std::string> keys_under(const std::string& prefix) const;
};

Config parse_config_text(const std::string& text);
Config parse_config_file(const std::string& path);

} // namespace halfline
