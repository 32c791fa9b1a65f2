#include "refir/config.hpp"
#include "refir/errors.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace refir {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

KVConfig KVConfig::parse_string(const std::string& text) {
    KVConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::Config,
                        "config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw Error(ErrorCode::Config, "config line " + std::to_string(lineno) + ": empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

KVConfig KVConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::NotFound, "cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

bool KVConfig::has(const std::string& key) const {
    return values_.count(key) != 0;
}

std::string KVConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long KVConfig::get_int(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    try {
        return std::stol(it->second);
    } catch (...) {
        throw Error(ErrorCode::Config, "config key " + key + ": not an integer: " + it->second);
    }
}

double KVConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw Error(ErrorCode::Config, "config key " + key + ": not a number: " + it->second);
    }
}

bool KVConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "1" || v == "true" || v == "yes" || v == "on")
        return true;
    if (v == "0" || v == "false" || v == "no" || v == "off")
        return false;
    throw Error(ErrorCode::Config, "config key " + key + ": not a boolean: " + it->second);
}

std::vector<std::string> KVConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    auto it = values_.find(key);
    if (it == values_.end())
        return out;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

std::vector<double> KVConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_list(key)) {
        try {
            out.push_back(std::stod(s));
        } catch (...) {
            throw Error(ErrorCode::Config, "config key " + key + ": not a number: " + s);
        }
    }
    return out;
}

std::vector<long> KVConfig::get_int_list(const std::string& key) const {
    std::vector<long> out;
    for (const auto& s : get_list(key)) {
        try {
            out.push_back(std::stol(s));
        } catch (...) {
            throw Error(ErrorCode::Config, "config key " + key + ": not an integer: " + s);
        }
    }
    return out;
}

std::string KVConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace refir
