#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "emsdeploy/common.hpp"
#include "json.hpp"

namespace emsdeploy::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Raised when a subcommand needs a file some earlier subcommand writes.
class DependencyError : public DataError {
 public:
  DependencyError(const std::string& file, const std::string& producer)
      : DataError("missing " + file + ": run `emsdeploy " + producer + "` first") {}
};

inline json default_config() {
  return {
      // inputs
      {"calls", ""},
      {"svi", ""},
      {"tract_map", ""},
      {"travel_matrix", ""},
      // grid
      {"bounds", {30.10, 30.55, -97.95, -97.55}},
      {"rows", 6},
      {"cols", 6},
      {"stations", json::array()},
      {"n_stations", 4},
      {"hospitals", json::array()},
      {"travel_provider", "synthetic"},
      {"speed_kmh", 40.0},
      // call file layout
      {"zone", "UTC"},
      {"timestamp_format", ""},
      {"col_datetime", "datetime"},
      {"col_latitude", "latitude"},
      {"col_longitude", "longitude"},
      {"col_response_time", "response_time_s"},
      {"col_travel_time", "travel_time_s"},
      {"col_amb_latitude", "amb_latitude"},
      {"col_amb_longitude", "amb_longitude"},
      {"col_on_scene", "on_scene_s"},
      {"col_to_hospital", "to_hospital_s"},
      // preprocessing
      {"peak_only", true},
      {"peak_start_h", 8.0},
      {"peak_end_h", 20.0},
      {"period_s", 3600.0},
      {"snap_cells", 1.0},
      {"coverage_threshold_s", 600.0},
      {"train_fraction", 0.8},
      {"trim_p", 0.01},
      {"calibration", "loglog"},
      // optimization
      {"model", "both"},
      {"n", 6},
      {"M", 100},
      {"alpha", 0.01},
      {"epsilon", 1e-6},
      {"max_iter", 100},
      {"enumeration_budget", 1e6},
      {"max_nodes", 2000000},
      {"lambda", 0.5},
      // simulation
      {"mu", 3.65},
      {"sigma", 0.3},
      {"n_calls", 1000},
      {"n_batches", 12},
      {"resample", false},
      {"restrict_dispatch", false},
      {"verify_batch_size", 100},
      {"verify_batches", 10},
      // experiments
      {"alphas", {0.1, 0.05, 0.01, 0.001, 0.0001}},
      {"folds", 3},
      {"n_min", 3},
      {"n_max", 8},
      {"analysis_folds", 5},
      {"lambda_grid", json::array()},
      // synth
      {"synth_calls", 2000},
      {"synth_noise", 0.25},
      {"seed", 0},
  };
}

/// Keys holding file paths; relative values resolve against the config file's directory.
inline bool is_path_key(const std::string& key) {
  return key == "calls" || key == "svi" || key == "tract_map" || key == "travel_matrix";
}

namespace detail {

inline bool is_integer_default(const json& d) { return d.is_number_integer() || d.is_number_unsigned(); }

/// Coerces `v` to the type of the default `d`, or throws ConfigError.
inline json coerce(const std::string& key, const json& d, const json& v) {
  auto bad = [&](const std::string& want) {
    return ConfigError("config key '" + key + "' expects " + want + ", got " + v.dump());
  };
  if (d.is_boolean()) {
    if (!v.is_boolean()) throw bad("a boolean");
    return v;
  }
  if (is_integer_default(d)) {
    if (!v.is_number()) throw bad("a nonnegative integer");
    double x = v.get<double>();
    if (!(x >= 0.0) || std::floor(x) != x || x > 1.8e19) throw bad("a nonnegative integer");
    return v.is_number_unsigned() ? v : json(static_cast<std::uint64_t>(x));
  }
  if (d.is_number()) {
    if (!v.is_number()) throw bad("a number");
    return json(v.get<double>());
  }
  if (d.is_string()) {
    if (!v.is_string()) throw bad("a string");
    return v;
  }
  if (d.is_array()) {
    if (!v.is_array()) throw bad("an array");
    for (const auto& e : v)
      if (!e.is_number()) throw bad("an array of numbers");
    return v;
  }
  throw bad("a value");
}

/// Parses a command-line override string using the default's type.
inline json parse_override(const std::string& key, const json& d, const std::string& text) {
  if (d.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("--" + key + " expects true or false, got '" + text + "'");
  }
  if (d.is_number()) {
    double x = 0.0;
    if (!parse_double(text, x)) throw ConfigError("--" + key + " expects a number, got '" + text + "'");
    if (is_integer_default(d) && x >= 0.0 && std::floor(x) == x) {
      std::uint64_t u = 0;
      auto res = std::from_chars(text.data(), text.data() + text.size(), u);
      if (res.ec == std::errc{} && res.ptr == text.data() + text.size()) return u;
    }
    return x;
  }
  if (d.is_array()) {
    auto parsed = json::parse(text, nullptr, false);
    if (!parsed.is_discarded()) return parsed;
    json arr = json::array();  // plain comma list: 0.1,0.05
    for (const auto& f : split_csv_line(text)) {
      double x = 0.0;
      if (!parse_double(f, x)) throw ConfigError("--" + key + " expects a list of numbers, got '" + text + "'");
      arr.push_back(x);
    }
    return arr;
  }
  return text;
}

}  // namespace detail

/// Flat configuration: defaults, then the config file, then overrides.
class RunConfig {
 public:
  RunConfig() : values_(default_config()) {}

  static RunConfig load(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    fs::path base = fs::path(path).parent_path();
    for (const auto& [key, value] : j.items()) {
      cfg.set(key, value);
      if (is_path_key(key) && !value.get<std::string>().empty()) {
        fs::path p = value.get<std::string>();
        if (p.is_relative()) cfg.values_[key] = (base / p).lexically_normal().string();
      }
    }
    return cfg;
  }

  void set(const std::string& key, const json& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    *it = detail::coerce(key, *it, value);
  }

  void override_with(const std::string& key, const std::string& text) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown option --" + key);
    set(key, detail::parse_override(key, *it, text));
  }

  /// Applies `--key value` / `--key=value` pairs.
  void apply_overrides(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
      const auto& a = args[i];
      if (a.rfind("--", 0) != 0 || a.size() < 3) throw ConfigError("unexpected argument: " + a);
      auto eq = a.find('=');
      if (eq != std::string::npos) {
        override_with(a.substr(2, eq - 2), a.substr(eq + 1));
      } else {
        if (i + 1 >= args.size()) throw ConfigError("option " + a + " needs a value");
        override_with(a.substr(2), args[++i]);
      }
    }
  }

  void validate() const {
    auto positive = [&](const char* k) {
      if (!(num(k) > 0.0)) throw ConfigError(std::string(k) + " must be positive");
    };
    for (const char* k : {"rows", "cols", "n", "M", "speed_kmh", "period_s", "coverage_threshold_s", "epsilon",
                          "max_iter", "enumeration_budget", "max_nodes", "sigma", "n_calls", "n_batches",
                          "verify_batch_size", "verify_batches", "n_min", "synth_calls"})
      positive(k);
    const auto& b = values_.at("bounds");
    if (b.size() != 4) throw ConfigError("bounds must be [min_lat, max_lat, min_lon, max_lon]");
    if (!(num("train_fraction") > 0.0 && num("train_fraction") < 1.0))
      throw ConfigError("train_fraction must lie strictly between 0 and 1");
    if (!(num("alpha") > 0.0 && num("alpha") < 1.0)) throw ConfigError("alpha must lie strictly between 0 and 1");
    for (const auto& a : values_.at("alphas"))
      if (!(a.get<double>() > 0.0 && a.get<double>() < 1.0)) throw ConfigError("alphas must lie in (0, 1)");
    if (values_.at("alphas").empty()) throw ConfigError("alphas is empty");
    if (!(num("trim_p") >= 0.0 && num("trim_p") < 0.5)) throw ConfigError("trim_p must lie in [0, 0.5)");
    if (!(num("lambda") >= 0.0 && num("lambda") <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
    if (!(num("peak_start_h") >= 0.0 && num("peak_start_h") < num("peak_end_h") && num("peak_end_h") <= 24.0))
      throw ConfigError("peak window must satisfy 0 <= peak_start_h < peak_end_h <= 24");
    if (num("n_max") < num("n_min")) throw ConfigError("n_max must be at least n_min");
    if (num("folds") < 2) throw ConfigError("folds must be at least 2");
    if (num("analysis_folds") < 2) throw ConfigError("analysis_folds must be at least 2");
    auto model = str("model");
    if (model != "stochastic" && model != "robust" && model != "hybrid" && model != "both" && model != "all")
      throw ConfigError("model must be stochastic, robust, hybrid, both or all");
    auto provider = str("travel_provider");
    if (provider != "synthetic" && provider != "matrix") throw ConfigError("travel_provider must be synthetic or matrix");
  }

  double num(const std::string& key) const { return values_.at(key).get<double>(); }
  std::size_t count(const std::string& key) const { return values_.at(key).get<std::size_t>(); }
  int integer(const std::string& key) const { return values_.at(key).get<int>(); }
  bool flag(const std::string& key) const { return values_.at(key).get<bool>(); }
  std::string str(const std::string& key) const { return values_.at(key).get<std::string>(); }
  std::vector<double> list(const std::string& key) const { return values_.at(key).get<std::vector<double>>(); }
  std::uint64_t seed() const { return values_.at("seed").get<std::uint64_t>(); }
  const json& values() const noexcept { return values_; }

 private:
  json values_;
};

/// Bookkeeping for one subcommand run: files read and written under --out.
class Run {
 public:
  Run(std::string command, RunConfig config, fs::path out)
      : command_(std::move(command)), config_(std::move(config)), out_(std::move(out)) {
    fs::create_directories(out_);
  }

  const RunConfig& cfg() const noexcept { return config_; }
  const std::string& command() const noexcept { return command_; }
  const fs::path& out() const noexcept { return out_; }

  /// Output of an earlier subcommand, recorded as an input.
  fs::path need(const std::string& name, const std::string& producer) {
    fs::path p = out_ / name;
    if (!fs::exists(p)) throw DependencyError(name, producer);
    inputs_[p.string()] = p;
    return p;
  }

  bool has(const std::string& name) const { return fs::exists(out_ / name); }

  /// A path taken from the config, recorded as an input.
  fs::path input(const std::string& key) {
    auto value = config_.str(key);
    if (value.empty()) throw ConfigError("config key '" + key + "' must name an input file");
    fs::path p = value;
    if (!fs::exists(p)) throw DataError("input file not found: " + value + " (config key '" + key + "')");
    inputs_[p.string()] = p;
    return p;
  }

  void write(const std::string& name, const std::string& text) {
    write_text((out_ / name).string(), text);
    outputs_[name] = out_ / name;
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  /// Registers a file written by library code.
  void wrote(const std::string& name) { outputs_[name] = out_ / name; }

  const std::map<std::string, fs::path>& inputs() const noexcept { return inputs_; }
  const std::map<std::string, fs::path>& outputs() const noexcept { return outputs_; }

 private:
  std::string command_;
  RunConfig config_;
  fs::path out_;
  std::map<std::string, fs::path> inputs_;
  std::map<std::string, fs::path> outputs_;
};

}  // namespace emsdeploy::cli
