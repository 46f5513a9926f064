#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ding {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Line-oriented `key = value` configuration with dotted keys. `#` starts a
// comment; blank lines are ignored. Errors carry file:line anchors.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text,
                             const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_strings(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  // Canonical serialization (keys sorted, one per line) and its FNV-1a 64
  // hash; stable under key reordering in the source file.
  std::string canonical() const;
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  std::string origin() const { return origin_; }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::map<std::string, std::string> kv_;
  std::map<std::string, int> lines_;
  std::string origin_ = "<none>";
};

}  // namespace ding
