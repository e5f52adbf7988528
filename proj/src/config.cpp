#include "ldc/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "ldc/errors.hpp"

namespace ldc {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
    throw ConfigError("config key '" + key + "': '" + value + "' is not " + what);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        cfg.set(key, trim(line.substr(eq + 1)));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const char* s = it->second.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s, &end);
    if (it->second.empty() || *end != '\0' || errno == ERANGE) bad_value(key, it->second, "a number");
    return v;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const char* s = it->second.c_str();
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(s, &end, 10);
    if (it->second.empty() || *end != '\0' || errno == ERANGE) bad_value(key, it->second, "an integer");
    return v;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& s = it->second;
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        bad_value(key, s, "a non-negative integer");
    }
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (errno == ERANGE) bad_value(key, s, "a 64-bit integer");
    return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "a boolean");
}

void KeyValueConfig::require_known(const std::vector<std::string>& known) const {
    for (const auto& [key, value] : values_) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
}

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        "seed", "epochs", "batch_size", "lr", "alpha", "beta",
        "ricd.k1", "ricd.k2", "ricd.steps", "ricd.hidden", "iaicd.mode",
        "data.manifest", "data.count", "out.dir", "train.checkpoint_every_epoch",
        "net.use_ricd", "net.use_iaicd", "net.first_stride", "net.depth_scale", "net.min_depth",
        "scene.height", "scene.width", "scene.d_min", "scene.d_max", "scene.primitives",
        "scene.gt_valid_fraction", "scene.sparse_density", "scene.light_blobs", "scene.ambient",
        "scene.terminator_sharpness", "scene.noise",
    };
    return keys;
}

namespace {

int narrow_int(const KeyValueConfig& kv, const std::string& key, int fallback) {
    const std::int64_t v = kv.get_int(key, fallback);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw ConfigError("config key '" + key + "' is out of range");
    }
    return static_cast<int>(v);
}

}  // namespace

SceneConfig scene_config_from(const KeyValueConfig& kv) {
    SceneConfig c;
    c.height = narrow_int(kv, "scene.height", c.height);
    c.width = narrow_int(kv, "scene.width", c.width);
    c.d_min = kv.get_double("scene.d_min", c.d_min);
    c.d_max = kv.get_double("scene.d_max", c.d_max);
    c.primitives = narrow_int(kv, "scene.primitives", c.primitives);
    c.gt_valid_fraction = kv.get_double("scene.gt_valid_fraction", c.gt_valid_fraction);
    c.sparse_density = kv.get_double("scene.sparse_density", c.sparse_density);
    c.light_blobs = narrow_int(kv, "scene.light_blobs", c.light_blobs);
    c.ambient = kv.get_double("scene.ambient", c.ambient);
    c.terminator_sharpness = kv.get_double("scene.terminator_sharpness", c.terminator_sharpness);
    c.noise = kv.get_double("scene.noise", c.noise);
    c.seed = kv.get_uint("seed", c.seed);
    c.validate();
    return c;
}

NetConfig net_config_from(const KeyValueConfig& kv) {
    NetConfig c;
    c.ricd.k_large = narrow_int(kv, "ricd.k1", c.ricd.k_large);
    c.ricd.k_small = narrow_int(kv, "ricd.k2", c.ricd.k_small);
    c.ricd.steps = narrow_int(kv, "ricd.steps", c.ricd.steps);
    c.ricd.hidden_channels = narrow_int(kv, "ricd.hidden", c.ricd.hidden_channels);
    if (kv.has("iaicd.mode")) c.center_mode = center_mode_from_string(kv.get_string("iaicd.mode", ""));
    c.use_ricd = kv.get_bool("net.use_ricd", c.use_ricd);
    c.use_iaicd = kv.get_bool("net.use_iaicd", c.use_iaicd);
    c.first_stride = narrow_int(kv, "net.first_stride", c.first_stride);
    c.depth_scale = kv.get_double("net.depth_scale", c.depth_scale);
    c.min_depth = kv.get_double("net.min_depth", c.min_depth);
    c.validate();
    return c;
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
    TrainConfig c;
    c.seed = kv.get_uint("seed", c.seed);
    c.epochs = narrow_int(kv, "epochs", c.epochs);
    c.batch_size = narrow_int(kv, "batch_size", c.batch_size);
    c.lr = kv.get_double("lr", c.lr);
    c.weights.alpha = kv.get_double("alpha", c.weights.alpha);
    c.weights.beta = kv.get_double("beta", c.weights.beta);
    c.net = net_config_from(kv);
    c.manifest = kv.get_string("data.manifest", c.manifest);
    c.out_dir = kv.get_string("out.dir", c.out_dir);
    c.checkpoint_every_epoch = kv.get_bool("train.checkpoint_every_epoch", c.checkpoint_every_epoch);
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(c.lr > 0.0)) throw ConfigError("lr must be positive");
    c.weights.validate();
    return c;
}

}  // namespace ldc
