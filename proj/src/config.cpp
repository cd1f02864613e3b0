#include "halfline/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace halfline {

namespace {

struct Cursor {
    const std::string& s;
    size_t i = 0;
    int line = 1, col = 1;

    bool eof() const { return i >= s.size(); }
    char peek() const { return s[i]; }
    char take() {
        char c = s[i++];
        if (c == '\n') { ++line; col = 1; } else { ++col; }
        return c;
    }
    void skip_ws_inline() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) take();
    }
    void skip_comment_to_eol() {
        while (!eof() && peek() != '\n') take();
    }
};

bool is_bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string parse_bare_key(Cursor& cur) {
    std::string k;
    while (!cur.eof() && is_bare_key_char(cur.peek())) k.push_back(cur.take());
    if (k.empty()) throw ConfigError("expected a key", cur.line, cur.col);
    return k;
}

std::string parse_dotted_key(Cursor& cur) {
    std::string k = parse_bare_key(cur);
    while (!cur.eof() && cur.peek() == '.') {
        cur.take();
        k += '.';
        k += parse_bare_key(cur);
    }
    return k;
}

ConfigValue parse_scalar(Cursor& cur);

ConfigValue parse_array(Cursor& cur) {
    ConfigValue out;
    out.line = cur.line;
    out.column = cur.col;
    cur.take(); // '['
    ConfigValue::Array arr;
    for (;;) {
        cur.skip_ws_inline();
        if (cur.eof()) throw ConfigError("unterminated array", cur.line, cur.col);
        if (cur.peek() == ']') { cur.take(); break; }
        if (cur.peek() == '\n') { cur.take(); continue; } // allow multi-line arrays
        arr.push_back(parse_scalar(cur));
        cur.skip_ws_inline();
        if (!cur.eof() && cur.peek() == ',') { cur.take(); continue; }
    }
    out.v = std::move(arr);
    return out;
}

ConfigValue parse_scalar(Cursor& cur) {
    ConfigValue out;
    out.line = cur.line;
    out.column = cur.col;
    if (cur.peek() == '[') return parse_array(cur);
    if (cur.peek() == '"') {
        cur.take();
        std::string s;
        for (;;) {
            if (cur.eof() || cur.peek() == '\n')
                throw ConfigError("unterminated string", out.line, out.column);
            char c = cur.take();
            if (c == '"') break;
            if (c == '\\') {
                if (cur.eof()) throw ConfigError("dangling escape", cur.line, cur.col);
                char e = cur.take();
                switch (e) {
                    case 'n': s.push_back('\n'); break;
                    case 't': s.push_back('\t'); break;
                    case '"': s.push_back('"'); break;
                    case '\\': s.push_back('\\'); break;
                    default: throw ConfigError("unknown escape", cur.line, cur.col);
                }
            } else {
                s.push_back(c);
            }
        }
        out.v = std::move(s);
        return out;
    }
    // bare token: bool or number
    std::string tok;
    while (!cur.eof() && !std::isspace(static_cast<unsigned char>(cur.peek())) &&
           cur.peek() != ',' && cur.peek() != ']' && cur.peek() != '#')
        tok.push_back(cur.take());
    if (tok.empty()) throw ConfigError("expected a value", out.line, out.column);
    if (tok == "true") { out.v = true; return out; }
    if (tok == "false") { out.v = false; return out; }

    // integer?
    {
        int64_t iv = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), iv);
        if (ec == std::errc() && p == tok.data() + tok.size()) {
            out.v = iv;
            return out;
        }
    }
    // float (accept inf/nan spellings via strtod)
    {
        char* end = nullptr;
        double dv = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() + tok.size()) {
            out.v = dv;
            return out;
        }
    }
    throw ConfigError("malformed value '" + tok + "'", out.line, out.column);
}

} // namespace

// immediate child segments below prefix, deduplicated, in file order
std::vector<std::string> Config::keys_under(const std::string& prefix) const {
    std::vector<std::string> out;
    std::string p = prefix + ".";
    for (const auto& k : order) {
        if (k.rfind(p, 0) != 0) continue;
        std::string rest = k.substr(p.size());
        std::string child = rest.substr(0, rest.find('.'));
        bool seen = false;
        for (const auto& c : out)
            if (c == child) { seen = true; break; }
        if (!seen) out.push_back(child);
    }
    return out;
}

Config parse_config_text(const std::string& text) {
    Config cfg;
    Cursor cur{text};
    std::string section;
    while (!cur.eof()) {
        cur.skip_ws_inline();
        if (cur.eof()) break;
        char c = cur.peek();
        if (c == '\n') { cur.take(); continue; }
        if (c == '#') { cur.skip_comment_to_eol(); continue; }
        if (c == '[') {
            int l = cur.line, co = cur.col;
            cur.take();
            cur.skip_ws_inline();
            section = parse_dotted_key(cur);
            cur.skip_ws_inline();
            if (cur.eof() || cur.peek() != ']')
                throw ConfigError("unterminated section header", l, co);
            cur.take();
            cur.skip_ws_inline();
            if (!cur.eof() && cur.peek() == '#') cur.skip_comment_to_eol();
            else if (!cur.eof() && cur.peek() != '\n')
                throw ConfigError("trailing characters after section header", cur.line, cur.col);
            continue;
        }
        // key = value
        int kl = cur.line, kc = cur.col;
        std::string key = parse_dotted_key(cur);
        cur.skip_ws_inline();
        if (cur.eof() || cur.peek() != '=')
            throw ConfigError("expected '=' after key '" + key + "'", cur.line, cur.col);
        cur.take();
        cur.skip_ws_inline();
        if (cur.eof() || cur.peek() == '\n' || cur.peek() == '#')
            throw ConfigError("missing value for key '" + key + "'", cur.line, cur.col);
        ConfigValue val = parse_scalar(cur);
        cur.skip_ws_inline();
        if (!cur.eof() && cur.peek() == '#') cur.skip_comment_to_eol();
        else if (!cur.eof() && cur.peek() != '\n')
            throw ConfigError("trailing characters after value", cur.line, cur.col);
        std::string full = section.empty() ? key : section + "." + key;
        if (cfg.values.count(full))
            throw ConfigError("duplicate key '" + full + "'", kl, kc);
        val.line = kl;
        val.column = kc;
        cfg.values.emplace(full, std::move(val));
        cfg.order.push_back(full);
    }
    return cfg;
}

Config parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace halfline
