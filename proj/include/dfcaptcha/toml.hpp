#pragma once

// Minimal TOML-subset parser covering what the run configuration needs:
// [section.sub] headers, bare keys, strings with basic escapes, integers,
// floats, booleans, single-line arrays, and # comments. Keys are flattened
// to dotted paths ("scenario.channel.noise_std").

#include <cctype>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dfcaptcha/errors.hpp"

namespace dfcaptcha::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<std::string, std::int64_t, double, bool, Array> data;

    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
    bool is_float() const { return std::holds_alternative<double>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_array() const { return std::holds_alternative<Array>(data); }

    const std::string& as_string() const { return std::get<std::string>(data); }
    std::int64_t as_int() const { return std::get<std::int64_t>(data); }
    bool as_bool() const { return std::get<bool>(data); }
    const Array& as_array() const { return std::get<Array>(data); }

    // Integers promote to double where a float is expected.
    double as_double() const {
        if (is_int()) return static_cast<double>(as_int());
        return std::get<double>(data);
    }
};

using Table = std::map<std::string, Value>;

namespace parse_detail {

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;
    int line = 1;

    bool done() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    char take() {
        const char c = text[pos++];
        if (c == '\n') ++line;
        return c;
    }
    [[noreturn]] void fail(const std::string& cause) const {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + cause);
    }
    void skip_spaces() {
        while (!done() && (peek() == ' ' || peek() == '\t')) take();
    }
    void skip_comment_and_eol() {
        skip_spaces();
        if (!done() && peek() == '#')
            while (!done() && peek() != '\n') take();
        if (done()) return;
        if (peek() == '\r') take();
        if (done()) return;
        if (peek() != '\n') fail("unexpected trailing characters");
        take();
    }
};

inline bool is_bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

inline std::string parse_bare_key(Cursor& c) {
    std::string key;
    while (!c.done() && is_bare_key_char(c.peek())) key.push_back(c.take());
    if (key.empty()) c.fail("expected a key");
    return key;
}

inline std::string parse_string(Cursor& c) {
    c.take(); // opening quote
    std::string s;
    while (true) {
        if (c.done()) c.fail("unterminated string");
        const char ch = c.take();
        if (ch == '"') return s;
        if (ch == '\n') c.fail("newline inside string");
        if (ch == '\\') {
            if (c.done()) c.fail("unterminated escape");
            switch (c.take()) {
                case '"': s.push_back('"'); break;
                case '\\': s.push_back('\\'); break;
                case 'n': s.push_back('\n'); break;
                case 't': s.push_back('\t'); break;
                case 'r': s.push_back('\r'); break;
                default: c.fail("unsupported escape");
            }
        } else {
            s.push_back(ch);
        }
    }
}

inline Value parse_number(Cursor& c) {
    std::string tok;
    bool is_float = false;
    while (!c.done()) {
        const char ch = c.peek();
        if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '+' || ch == '-') {
            tok.push_back(c.take());
        } else if (ch == '.' || ch == 'e' || ch == 'E') {
            is_float = true;
            tok.push_back(c.take());
        } else if (ch == '_') {
            c.take(); // digit separator
        } else {
            break;
        }
    }
    if (tok.empty()) c.fail("expected a number");
    try {
        if (is_float) return Value{std::stod(tok)};
        return Value{static_cast<std::int64_t>(std::stoll(tok))};
    } catch (const std::exception&) {
        c.fail("bad number \"" + tok + "\"");
    }
}

inline Value parse_value(Cursor& c);

inline Value parse_array(Cursor& c) {
    c.take(); // '['
    Array items;
    while (true) {
        c.skip_spaces();
        if (c.done()) c.fail("unterminated array");
        if (c.peek() == ']') {
            c.take();
            return Value{std::move(items)};
        }
        items.push_back(parse_value(c));
        c.skip_spaces();
        if (c.done()) c.fail("unterminated array");
        if (c.peek() == ',') {
            c.take();
            continue;
        }
        if (c.peek() == ']') {
            c.take();
            return Value{std::move(items)};
        }
        c.fail("expected ',' or ']' in array");
    }
}

inline Value parse_value(Cursor& c) {
    if (c.done()) c.fail("expected a value");
    const char ch = c.peek();
    if (ch == '"') return Value{parse_string(c)};
    if (ch == '[') return parse_array(c);
    if (std::isalpha(static_cast<unsigned char>(ch))) {
        const std::string word = parse_bare_key(c);
        if (word == "true") return Value{true};
        if (word == "false") return Value{false};
        c.fail("bad value \"" + word + "\"");
    }
    return parse_number(c);
}

} // namespace parse_detail

inline Table parse_text(const std::string& text) {
    using parse_detail::Cursor;
    Cursor c{text};
    Table table;
    std::string prefix;

    while (!c.done()) {
        c.skip_spaces();
        if (c.done()) break;
        const char ch = c.peek();
        if (ch == '\n' || ch == '\r' || ch == '#') {
            c.skip_comment_and_eol();
            continue;
        }
        if (ch == '[') {
            c.take();
            std::string section = parse_detail::parse_bare_key(c);
            while (!c.done() && c.peek() == '.') {
                c.take();
                section += "." + parse_detail::parse_bare_key(c);
            }
            if (c.done() || c.peek() != ']') c.fail("expected ']' after section name");
            c.take();
            prefix = section;
            c.skip_comment_and_eol();
            continue;
        }
        const std::string key = parse_detail::parse_bare_key(c);
        c.skip_spaces();
        if (c.done() || c.peek() != '=') c.fail("expected '=' after key \"" + key + "\"");
        c.take();
        c.skip_spaces();
        Value v = parse_detail::parse_value(c);
        const std::string full = prefix.empty() ? key : prefix + "." + key;
        if (!table.emplace(full, std::move(v)).second) c.fail("duplicate key \"" + full + "\"");
        c.skip_comment_and_eol();
    }
    return table;
}

} // namespace dfcaptcha::toml
