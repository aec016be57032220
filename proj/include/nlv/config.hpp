#pragma once

// Flat key = value run configuration.  Every key has a registered default
// and a help line; unknown keys are rejected up front so a typo cannot
// silently fall back to a default.  Command line flags overwrite file
// values by calling set() after load().

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlv/mask.hpp"

namespace nlv {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  std::string name;
  std::string def;
  std::string help;
};

inline const std::vector<ConfigKey>& config_registry() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "7", "master random seed"},
      {"threads", "1", "worker threads; 1 is the determinism mode"},
      {"out", "out", "output directory"},

      {"classes", "8", "synthetic classes, 4 or 8 compass directions"},
      {"frames", "8", "frames per synthetic video"},
      {"height", "16", "frame height in pixels"},
      {"width", "16", "frame width in pixels"},
      {"object_size", "4", "moving square edge length"},
      {"speed", "1.5", "pixels moved per frame"},
      {"noise", "0.1", "additive uniform pixel noise amplitude"},
      {"train_count", "500", "training videos"},
      {"test_count", "200", "test videos"},

      {"channels", "8", "stem output channels"},
      {"bottleneck", "2", "block value/key channels"},
      {"stem_kernel", "3", "stem spatial kernel size, odd"},

      {"delta_t", "1/2", "mask radius on t: inf, integer, or fraction of the extent"},
      {"delta_h", "3/7", "mask radius on h"},
      {"delta_w", "3/7", "mask radius on w"},

      {"rel_t0", "1", "relation receptive radius on t"},
      {"rel_h0", "2", "relation receptive radius on h"},
      {"rel_w0", "2", "relation receptive radius on w"},
      {"rel_t1", "0", "relation output radius on t"},
      {"rel_h1", "1", "relation output radius on h"},
      {"rel_w1", "1", "relation output radius on w"},
      {"rel_hidden", "0", "relation hidden width; 0 means twice the window size"},
      {"rel_normalize", "1", "softmax-normalize relation vectors"},

      {"head_scale", "0", "classifier init range in the experiment; 0 keeps the zero head"},
      {"lr", "0.02", "learning rate"},
      {"momentum", "0.9", "momentum coefficient in [0, 1)"},
      {"epochs", "5", "training epochs"},
      {"batch", "16", "minibatch size"},
      {"lr_decay", "0.1", "multiplier applied at each decay epoch"},
      {"decay_epochs", "", "comma separated zero-based epochs that decay the rate"},
      {"grad_clip", "4", "global gradient norm cap per batch; 0 disables"},
      {"variants", "none,nonlocal,mask_nonlocal,relation",
       "comma separated block variants for the experiment"},

      {"gc_seeds", "20", "gradient check seeds per op"},
      {"gc_eps", "1e-6", "central difference step"},
      {"gc_tol", "1e-5", "max relative error allowed"},

      {"or_instances", "100", "oracle sweep instances"},
      {"or_max_dim", "4", "max T, H, W in oracle sweeps"},
      {"or_max_channels", "8", "max channels in oracle sweeps"},
      {"or_tol", "1e-12", "max absolute difference allowed"},
      {"or_corrupt", "0", "flip one sign in the fast path, for testing the test"},
      {"or_mask", "random", "attention masks in the sweep: random draws, or config for delta_*"},

      {"bench_t", "16", "bench clip frames"},
      {"bench_h", "28", "bench clip height"},
      {"bench_w", "28", "bench clip width"},
      {"bench_channels", "8", "bench feature channels"},
      {"bench_bottleneck", "4", "bench value/key channels"},
      {"bench_runs", "5", "timing repetitions; medians are reported"},

      {"fuse_weights", "", "comma separated fusion weights; empty means uniform"},
      {"labels", "", "id,label CSV attached to fused scores"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const ConfigKey& k : config_registry()) values_[k.name] = k.def;
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    it->second = value;
  }

  // Lines are `key = value`; blank lines and everything after # ignored.
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
      set(key, value);
    }
  }

  const std::string& get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  long get_long(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
      std::size_t used = 0;
      const long out = std::stol(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " wants an integer, got: " + v);
    }
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
      std::size_t used = 0;
      const unsigned long long out = std::stoull(v, &used);
      if (used != v.size() || v.empty() || v[0] == '-') throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " wants an unsigned integer, got: " + v);
    }
  }

  double get_double(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
      std::size_t used = 0;
      const double out = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " wants a number, got: " + v);
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = get_string(key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("config key " + key + " wants 0/1/true/false, got: " + v);
  }

  Radius get_radius(const std::string& key) const {
    try {
      return Radius::parse(get_string(key));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key " + key + ": " + e.what());
    }
  }

  std::vector<long> get_long_list(const std::string& key) const {
    std::vector<long> out;
    for (const std::string& item : split_list(get_string(key))) {
      try {
        std::size_t used = 0;
        out.push_back(std::stol(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("config key " + key + " wants integers, got: " + item);
      }
    }
    return out;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : split_list(get_string(key))) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("config key " + key + " wants numbers, got: " + item);
      }
    }
    return out;
  }

  std::vector<std::string> get_string_list(const std::string& key) const {
    return split_list(get_string(key));
  }

  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

 private:
  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace nlv
