#pragma once

#include <map>
#include <string>
#include <vector>

namespace refir {

// Flat `key = value` configuration with '#' comments; lists are
// comma-separated.
class KVConfig {
public:
    static KVConfig parse_file(const std::string& path);
    static KVConfig parse_string(const std::string& text);

    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback = "") const;
    long get_int(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<long> get_int_list(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    // Canonical "key = value" dump (sorted keys), used for hashing.
    std::string canonical() const;

private:
    std::map<std::string, std::string> values_;
};

// FNV-1a 64-bit, hex encoded.
std::string fnv1a_hex(const std::string& data);

} // namespace refir
