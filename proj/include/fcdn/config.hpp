#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fcdn/types.hpp"

namespace fcdn {

// Flat `key = value` run configuration ('#' starts a comment). Every key
// has a documented default; unknown keys are rejected. Precedence is
// flags > file > defaults, enforced by the CLI calling set() after load().
class RunConfig {
 public:
  struct KeySpec {
    const char* key;
    const char* default_value;
    const char* help;
  };

  static const std::vector<KeySpec>& known_keys();

  RunConfig();  // defaults

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  bool is_known(const std::string& key) const;

  std::string get_str(const std::string& key) const;
  long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  uint64_t get_u64(const std::string& key) const;
  std::vector<size_t> get_size_list(const std::string& key) const;

  // Canonical "key = value" dump of every resolved key, and its FNV-1a
  // hash; both are embedded in reports for reproducibility.
  std::string dump() const;
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

}  // namespace fcdn
