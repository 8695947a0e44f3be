// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

namespace nerfaug::cli {

/// Options of one subcommand, registered once for both the command line and
/// a JSON config file. Values from the config file win over flags, which win
/// over defaults.
class OptionSet {
 public:
  explicit OptionSet(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file whose keys override the flags");
  }

  template <typename T>
  CLI::Option* add(const std::string& name, T& field, const std::string& help) {
    entries_[name] = {[&field, name](const nlohmann::json& j) {
                        try {
                          field = j.get<T>();
                        } catch (const nlohmann::json::exception&) {
                          throw std::invalid_argument("config key '" + name + "' has the wrong type");
                        }
                      },
                      [&field] { return nlohmann::json(field); }};
    return app_->add_option("--" + name, field, help)->capture_default_str();
  }

  /// Applies the config file, if one was given.
  void apply_config() {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    if (!in) throw std::runtime_error("cannot open config file " + config_path_);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("config file " + config_path_ + ": " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config file " + config_path_ + " must hold a JSON object");
    for (const auto& [key, value] : j.items()) {
      const auto it = entries_.find(key);
      if (it == entries_.end()) throw std::invalid_argument("config file: unknown key '" + key + "'");
      it->second.set(value);
    }
  }

  nlohmann::json effective() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, e] : entries_) j[key] = e.get();
    if (!config_path_.empty()) j["config"] = config_path_;
    return j;
  }

 private:
  struct Entry {
    std::function<void(const nlohmann::json&)> set;
    std::function<nlohmann::json()> get;
  };
  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, Entry> entries_;
};

}  // namespace nerfaug::cli
