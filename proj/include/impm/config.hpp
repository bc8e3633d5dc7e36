#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "impm/errors.hpp"

namespace impm {

// Sectioned key = value configuration text.
//
//   scenario = bar            # top-level key (empty section)
//   [material]
//   E = 10 kPa                # numbers may carry a unit suffix
//   nu = 0
//   [schedule]
//   steps = 40
//
// Numeric values are converted to SI at parse time, so serialize() emits a
// canonical unit-free form and round-trips exactly. Comments start with '#'.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config parse_file(const std::string& path);

  std::string serialize() const;

  bool has(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  std::vector<double> get_list(const std::string& section, const std::string& key) const;

  // applies a "section.key=value" override (value goes through unit parsing)
  void set_override(const std::string& spec);

  // Hard-errors on keys outside `allowed` ("section.key") and on missing
  // `required` keys.
  void validate_keys(const std::set<std::string>& allowed,
                     const std::set<std::string>& required) const;

  bool operator==(const Config& other) const { return values_ == other.values_; }

 private:
  const std::string& raw(const std::string& section, const std::string& key) const;
  // section -> key -> canonical value string, with insertion order preserved
  std::map<std::string, std::map<std::string, std::string>> values_;
  std::vector<std::string> section_order_;
  std::map<std::string, std::vector<std::string>> key_order_;
};

}  // namespace impm
