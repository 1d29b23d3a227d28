#pragma once

// Flat sectioned `key = value` run configuration.
//
//   # comment
//   [barrier]
//   tau = 0.99
//
// Keys are addressed as "section.key". Every known key has a default; an
// unknown key or a malformed value raises ConfigError naming the key.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vocbf/agv.hpp"
#include "vocbf/barrier.hpp"
#include "vocbf/dynamics.hpp"
#include "vocbf/evaluation.hpp"
#include "vocbf/policy.hpp"

namespace vocbf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RunConfig {
 public:
  RunConfig();  // all defaults

  /// Parses config text over the current values.
  void merge_text(const std::string& text, const std::string& origin = "config");
  void merge_file(const std::string& path);
  /// "section.key=value" override.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<std::uint64_t> get_uints(const std::string& key) const;

  /// Canonical text of every key, grouped by section in a fixed order.
  std::string resolved_text() const;
  /// Resolved keys as "section.key=value" lines, for CSV stamping.
  std::vector<std::string> resolved_lines() const;

  static const std::vector<std::string>& known_keys();

  // Typed views. Each validates and throws ConfigError on bad values.
  agv::AgvConfig env() const;
  barrier::BarrierTrainConfig barrier() const;
  barrier::ModelBasedConfig model_based() const;
  dyn::DynamicsTrainConfig dynamics() const;
  policy::BcTrainConfig bc() const;
  policy::GoToGoal goto_goal() const;
  eval::SuiteConfig suite() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace vocbf
