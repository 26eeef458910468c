#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fastclip/errors.hpp"

namespace fastclip::io {

// Flat key=value configuration with [section] headers. Keys are fixed by a
// registry; unknown keys are rejected with the offending name. Values are
// kept as strings and parsed on access so "auto" sentinels stay cheap.
//
// Precedence (lowest to highest): registry defaults, config file, FASTCLIP_*
// environment variables, explicit set() calls (CLI flags).
class RunConfig {
 public:
  struct KeyInfo {
    const char* key;  // "section.name"
    const char* def;
    const char* doc;
  };

  RunConfig();  // all keys at their defaults

  static const std::vector<KeyInfo>& registry();

  static RunConfig from_file(const std::string& path);
  static RunConfig parse(std::istream& is);

  // FASTCLIP_<SECTION>_<KEY>=value, e.g. FASTCLIP_ALGO_EPOCHS=3.
  void apply_env_overrides();

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  bool is_auto(const std::string& key) const;

  // Canonical serialization: registry order, one [section] per group.
  void write(std::ostream& os) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fastclip::io
