#pragma once

#include <map>
#include <string>
#include <vector>

namespace flowcast {

// Flat `key = value` run configuration. One registry of known keys covers
// every subcommand; unknown keys are rejected up front so typos cannot
// silently fall back to defaults. Command-line flags override file values.
class RunConfig {
public:
    static const std::vector<std::string>& known_keys();
    static bool is_known(const std::string& key);

    static RunConfig from_file(const std::string& path);

    // validates the key; later sets win
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& def) const;
    std::int64_t get_int(const std::string& key, std::int64_t def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& def) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& def) const;

private:
    std::map<std::string, std::string> kv_;
};

// effective-configuration echo written into every output directory
class ConfigEcho {
public:
    void put(const std::string& key, const std::string& value);
    void put(const std::string& key, std::int64_t value);
    void put(const std::string& key, double value);
    std::string text() const;

private:
    std::vector<std::pair<std::string, std::string>> items_;
};

}  // namespace flowcast
