#pragma once

#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fiberlay/model.hpp"

namespace fiberlay::cli {

/// Flat `key = value` configuration. Keys inside `[section]` become
/// `section.key`. Missing or malformed values raise ErrorCode::config.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& origin = "<config>");

  void set(const std::string& key, const std::string& value);
  /// Parses `key=value`.
  void set_assignment(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  double num(const std::string& key) const;
  double num(const std::string& key, double fallback) const;
  std::size_t count(const std::string& key, std::size_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> list(const std::string& key, std::vector<double> fallback) const;
  FullState state(const std::string& key, const FullState& fallback) const;

  /// Sorted keys with normalized values.
  std::map<std::string, std::string> canonical() const;
  /// Canonical values plus every fallback an accessor returned.
  std::map<std::string, std::string> effective() const;
  /// SHA-256 of the canonical form, hex encoded.
  std::string hash(const std::string& salt = "") const;
  /// Keys that no accessor has read.
  std::vector<std::string> unused() const;

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
  mutable std::map<std::string, std::string> defaults_;
};

std::string sha256_hex(const std::string& bytes);

}  // namespace fiberlay::cli
