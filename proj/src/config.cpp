#include "adlm/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace adlm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

Config Config::from_text(const std::string& text) {
  Config cfg;
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw config_error(std::string("malformed JSON config: ") + e.what());
    }
    if (!j.is_object()) throw config_error("JSON config must be an object");
    for (const auto& [key, value] : j.items()) {
      if (value.is_string())
        cfg.values_[key] = value.get<std::string>();
      else
        cfg.values_[key] = value.dump();
    }
    return cfg;
  }
  std::istringstream lines(body);
  std::string line;
  while (std::getline(lines, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("malformed config line (expected key=value): " + t);
    cfg.values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return cfg;
}

std::string Config::get_str(const std::string& key,
                            const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw config_error("");
    return v;
  } catch (...) {
    throw config_error("config key '" + key + "' is not a number: " +
                       it->second);
  }
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw config_error("");
    return v;
  } catch (...) {
    throw config_error("config key '" + key + "' is not an integer: " +
                       it->second);
  }
}

std::uint64_t Config::get_u64(const std::string& key,
                              std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw config_error("");
    return v;
  } catch (...) {
    throw config_error("config key '" + key + "' is not an integer: " +
                       it->second);
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw config_error("config key '" + key + "' is not a boolean: " +
                     it->second);
}

void Config::validate_keys(const std::set<std::string>& known) const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (known.count(key)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += key;
  }
  if (!unknown.empty()) throw config_error("unknown config keys: " + unknown);
}

std::string Config::serialize() const {
  std::string out = "# adlmconfig v1\n";
  for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
  return out;
}

}  // namespace adlm
