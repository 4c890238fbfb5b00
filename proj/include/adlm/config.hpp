#pragma once

#include "adlm/errors.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace adlm {

// Flat string-keyed configuration; accepts line-oriented key=value files or
// a JSON object. Unknown keys are rejected against the command's registry,
// and every run embeds the resolved serialization in its outputs.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void validate_keys(const std::set<std::string>& known) const;

  // Sorted key=value lines with a format-identifier header.
  std::string serialize() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace adlm
