#include "dinglab/config.hpp"

#include <fstream>
#include <sstream>

namespace ding {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text,
                            const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error(origin + ":" + std::to_string(lineno) +
                         ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw config_error(origin + ":" + std::to_string(lineno) +
                         ": empty key");
    if (cfg.kv_.count(key))
      throw config_error(origin + ":" + std::to_string(lineno) +
                         ": duplicate key '" + key + "' (first at line " +
                         std::to_string(cfg.lines_.at(key)) + ")");
    cfg.kv_[key] = value;
    cfg.lines_[key] = lineno;
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

void Config::fail(const std::string& key, const std::string& what) const {
  const auto it = lines_.find(key);
  if (it != lines_.end())
    throw config_error(origin_ + ":" + std::to_string(it->second) + ": key '" +
                       key + "': " + what);
  throw config_error(origin_ + ": key '" + key + "': " + what);
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::get_str(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) fail(key, "missing required key");
  return it->second;
}

std::string Config::get_str(const std::string& key,
                            const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    fail(key, "expected a number, got '" + v + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

int Config::get_int(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return static_cast<int>(x);
  } catch (const std::exception&) {
    fail(key, "expected an integer, got '" + v + "'");
  }
}

int Config::get_int(const std::string& key, int fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key,
                              std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_str(key);
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    fail(key, "expected an unsigned integer, got '" + v + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_str(key);
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  fail(key, "expected a boolean (true/false/on/off/1/0), got '" + v + "'");
}

std::vector<std::string> Config::get_strings(const std::string& key) const {
  const std::string v = get_str(key);
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) fail(key, "expected a comma-separated list");
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_strings(key)) {
    try {
      out.push_back(std::stod(s));
    } catch (const std::exception&) {
      fail(key, "expected numbers, got '" + s + "'");
    }
  }
  return out;
}

std::vector<int> Config::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : get_strings(key)) {
    try {
      out.push_back(std::stoi(s));
    } catch (const std::exception&) {
      fail(key, "expected integers, got '" + s + "'");
    }
  }
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : kv_) {  // std::map iterates in key order
    out += k;
    out += "=";
    out += v;
    out += "\n";
  }
  return out;
}

std::uint64_t Config::hash() const {
  // FNV-1a 64
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : canonical()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace ding
