#include "wayflow/config.hpp"

#include <fstream>
#include <sstream>

#include "wayflow/errors.hpp"

namespace wayflow {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

ConfigMap ConfigMap::parse_text(const std::string& text) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) +
                            ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw DataError("config line " + std::to_string(lineno) +
                            ": empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

void ConfigMap::set(const std::string& key, const std::string& value) {
    values_[key] = value;
    consumed_.insert(key);
}

void ConfigMap::set_int(const std::string& key, int64_t value) {
    set(key, std::to_string(value));
}

void ConfigMap::set_double(const std::string& key, double value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    set(key, os.str());
}

bool ConfigMap::has(const std::string& key) const {
    return values_.count(key) != 0;
}

const std::string* ConfigMap::find(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
}

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& fallback) {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

int64_t ConfigMap::get_int(const std::string& key, int64_t fallback) {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        size_t used = 0;
        const int64_t out = std::stoll(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw DataError("config key '" + key + "': not an integer: " + *v);
    }
}

uint64_t ConfigMap::get_u64(const std::string& key, uint64_t fallback) {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        size_t used = 0;
        const uint64_t out = std::stoull(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw DataError("config key '" + key + "': not an integer: " + *v);
    }
}

double ConfigMap::get_double(const std::string& key, double fallback) {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        size_t used = 0;
        const double out = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw DataError("config key '" + key + "': not a number: " + *v);
    }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) {
    const std::string* v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "off") return false;
    throw DataError("config key '" + key + "': not a boolean: " + *v);
}

void ConfigMap::require_all_consumed() const {
    std::string unknown;
    for (const auto& [key, value] : values_)
        if (consumed_.count(key) == 0)
            unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty())
        throw DataError("unknown config keys: " + unknown);
}

std::string ConfigMap::serialize() const {
    std::ostringstream os;
    for (const auto& [key, value] : values_)
        os << key << " = " << value << "\n";
    return os.str();
}

}  // namespace wayflow
