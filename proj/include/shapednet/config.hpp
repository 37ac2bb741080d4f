#pragma once

#include <optional>
#include <string>
#include <vector>

#include "shapednet/errors.hpp"

namespace shapednet {

// Flat "key = value" configuration text ('#' starts a comment). Later sets
// override earlier ones; unknown keys are rejected against the caller's
// schema so typos fail loudly.
class KvConfig {
public:
    static KvConfig parse_text(const std::string& text);  // ParseError with line number
    static KvConfig parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    std::optional<std::string> find(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;    // ConfigError on junk
    int64_t get_int(const std::string& key, int64_t def) const;
    bool get_bool(const std::string& key, bool def) const;          // true/false/1/0

    // ConfigError naming every key not in `known`.
    void check_known(const std::vector<std::string>& known) const;

    // "key = value" lines in insertion order, for run logging.
    std::string resolved() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace shapednet
