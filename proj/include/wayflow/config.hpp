#pragma once

#include <map>
#include <set>
#include <string>

namespace wayflow {

// Line-based "key = value" configuration with '#' comments. Reads track
// which keys were consumed so unrecognized keys can be rejected outright.
class ConfigMap {
public:
    static ConfigMap parse_text(const std::string& text);
    static ConfigMap parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    void set_int(const std::string& key, int64_t value);
    void set_double(const std::string& key, double value);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key,
                           const std::string& fallback);
    int64_t get_int(const std::string& key, int64_t fallback);
    double get_double(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);
    uint64_t get_u64(const std::string& key, uint64_t fallback);

    // Throws DataError naming any key that was never read.
    void require_all_consumed() const;

    // Deterministic key-sorted "key = value" text.
    std::string serialize() const;

private:
    const std::string* find(const std::string& key);
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

}  // namespace wayflow
