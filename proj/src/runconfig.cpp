#include "flowcast/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "flowcast/ioutil.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast {

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        // paths
        "input", "dataset", "model", "out",
        // run identity
        "variant", "seed",
        // synthetic generator
        "days", "noise_sigma", "ar_phi", "events_per_day", "start_time",
        // preparation
        "aggregate", "max_fill", "train_frac", "val_frac", "test_frac", "lag", "lead",
        // model architecture
        "lstm1_units", "lstm2_units", "branch_dense_units", "fusion_dense_units",
        "leaky_slope", "attn_dim", "attn_out_dim", "attn_linear_output",
        // training
        "epochs", "batch_size", "learning_rate", "rho", "epsilon", "shuffle_train",
        "eval_batch",
        // grid search
        "learning_rates", "batch_sizes", "workers",
        // evaluation and interpretability
        "percentile", "horizons", "split", "day", "max_windows",
    };
    return keys;
}

bool RunConfig::is_known(const std::string& key) {
    const auto& keys = known_keys();
    return std::find(keys.begin(), keys.end(), key) != keys.end();
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValueError("cannot open config file '" + path + "'");
    RunConfig rc;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // strip comments and whitespace-only lines
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config '" + path + "': expected 'key = value'", line_no);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!is_known(key))
            throw ValueError("config '" + path + "': unknown key '" + key + "'");
        rc.kv_[key] = value;
    }
    return rc;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!is_known(key)) throw ValueError("unknown config key '" + key + "'");
    kv_[key] = value;
}

std::string RunConfig::get_string(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ValueError("config key '" + key + "': expected an integer, got '" + it->second +
                         "'");
    }
}

double RunConfig::get_double(const std::string& key, double def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    char* end = nullptr;
    const double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0')
        throw ValueError("config key '" + key + "': expected a number, got '" + it->second +
                         "'");
    return v;
}

bool RunConfig::get_bool(const std::string& key, bool def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ValueError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != ' ') {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

std::vector<double> RunConfig::get_double_list(const std::string& key,
                                               const std::vector<double>& def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<double> out;
    for (const std::string& tok : split_list(it->second)) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw ValueError("config key '" + key + "': bad list element '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ValueError("config key '" + key + "': empty list");
    return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key,
                                         const std::vector<int>& def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<int> out;
    for (const std::string& tok : split_list(it->second)) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stoi(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ValueError("config key '" + key + "': bad list element '" + tok + "'");
        }
    }
    if (out.empty()) throw ValueError("config key '" + key + "': empty list");
    return out;
}

void ConfigEcho::put(const std::string& key, const std::string& value) {
    for (auto& item : items_)
        if (item.first == key) {
            item.second = value;
            return;
        }
    items_.emplace_back(key, value);
}

void ConfigEcho::put(const std::string& key, std::int64_t value) {
    put(key, std::to_string(value));
}

void ConfigEcho::put(const std::string& key, double value) { put(key, format_double(value)); }

std::string ConfigEcho::text() const {
    std::ostringstream out;
    for (const auto& [k, v] : items_) out << k << " = " << v << "\n";
    return out.str();
}

}  // namespace flowcast
