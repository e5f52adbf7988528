#pragma once

// Flat "key = value" configuration files. '#' starts a comment; blank lines
// are ignored; later assignments override earlier ones.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ldc/data.hpp"
#include "ldc/ldcnet.hpp"
#include "ldc/train.hpp"

namespace ldc {

class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Throws ConfigError naming the first key not in `known`.
    void require_known(const std::vector<std::string>& known) const;

private:
    std::map<std::string, std::string> values_;
};

/// Every key understood by the CLI.
const std::vector<std::string>& known_config_keys();

SceneConfig scene_config_from(const KeyValueConfig& kv);
NetConfig net_config_from(const KeyValueConfig& kv);
TrainConfig train_config_from(const KeyValueConfig& kv);

}  // namespace ldc
