#include "shapednet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace shapednet {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

KvConfig KvConfig::parse_text(const std::string& text) {
    KvConfig cfg;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty key");
        if (value.empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty value for '" + key +
                             "'");
        cfg.set(key, value);
    }
    return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
        return parse_text(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void KvConfig::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

bool KvConfig::has(const std::string& key) const { return find(key).has_value(); }

std::optional<std::string> KvConfig::find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return v;
    return std::nullopt;
}

std::string KvConfig::get_string(const std::string& key, const std::string& def) const {
    return find(key).value_or(def);
}

double KvConfig::get_double(const std::string& key, double def) const {
    const auto v = find(key);
    if (!v) return def;
    double out = 0.0;
    auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc{} || res.ptr != v->data() + v->size())
        throw ConfigError("key '" + key + "': not a number: '" + *v + "'");
    return out;
}

int64_t KvConfig::get_int(const std::string& key, int64_t def) const {
    const auto v = find(key);
    if (!v) return def;
    int64_t out = 0;
    auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc{} || res.ptr != v->data() + v->size())
        throw ConfigError("key '" + key + "': not an integer: '" + *v + "'");
    return out;
}

bool KvConfig::get_bool(const std::string& key, bool def) const {
    const auto v = find(key);
    if (!v) return def;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ConfigError("key '" + key + "': not a boolean: '" + *v + "'");
}

void KvConfig::check_known(const std::vector<std::string>& known) const {
    std::string bad;
    for (const auto& [k, v] : entries_) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            if (!bad.empty()) bad += ", ";
            bad += "'" + k + "'";
        }
    }
    if (!bad.empty()) throw ConfigError("unknown config keys: " + bad);
}

std::string KvConfig::resolved() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
}

}  // namespace shapednet
