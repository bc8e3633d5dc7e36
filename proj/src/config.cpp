#include "impm/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace impm {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// unit suffix -> SI multiplier
bool unit_factor(const std::string& unit, double& factor) {
  static const std::map<std::string, double> table = {
      {"Pa", 1.0},      {"kPa", 1e3},    {"MPa", 1e6},     {"GPa", 1e9},
      {"N", 1.0},       {"kN", 1e3},     {"MN", 1e6},
      {"m", 1.0},       {"cm", 1e-2},    {"mm", 1e-3},     {"km", 1e3},
      {"s", 1.0},       {"min", 60.0},   {"h", 3600.0},    {"day", 86400.0},
      {"kg/m3", 1.0},   {"t/m3", 1e3},
      {"m2", 1.0},      {"m/s2", 1.0},   {"Pa.s", 1.0},    {"m2/s", 1.0},
  };
  const auto it = table.find(unit);
  if (it == table.end()) return false;
  factor = it->second;
  return true;
}

// Parses "number [unit]" into a canonical SI numeric string; returns the
// input untouched when it is not numeric.
std::string canonicalize_scalar(const std::string& raw, const std::string& where) {
  const std::string v = trim(raw);
  if (v.empty()) throw ConfigError("empty value for " + where);
  char* end = nullptr;
  const double num = std::strtod(v.c_str(), &end);
  if (end == v.c_str()) return v;  // not a number: plain string
  std::string unit = trim(std::string(end));
  double factor = 1.0;
  if (!unit.empty() && !unit_factor(unit, factor))
    throw ConfigError("unknown unit '" + unit + "' for " + where);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", num * factor);
  return buf;
}

std::string canonicalize(const std::string& raw, const std::string& where) {
  if (raw.find(',') == std::string::npos) return canonicalize_scalar(raw, where);
  std::string out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!out.empty()) out += ", ";
    out += canonicalize_scalar(item, where);
  }
  return out;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  cfg.section_order_.push_back("");
  cfg.key_order_[""];
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!cfg.values_.count(section)) {
        cfg.section_order_.push_back(section);
        cfg.key_order_[section];
      }
      cfg.values_[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    const std::string where = section.empty() ? key : section + "." + key;
    if (cfg.values_[section].count(key))
      throw ConfigError("duplicate key " + where);
    cfg.values_[section][key] = canonicalize(value, where);
    cfg.key_order_[section].push_back(key);
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& section : section_order_) {
    const auto vit = values_.find(section);
    if (vit == values_.end() || vit->second.empty()) continue;
    if (!section.empty()) out += "[" + section + "]\n";
    for (const auto& key : key_order_.at(section)) out += key + " = " + vit->second.at(key) + "\n";
    out += "\n";
  }
  return out;
}

const std::string& Config::raw(const std::string& section, const std::string& key) const {
  const auto sit = values_.find(section);
  if (sit != values_.end()) {
    const auto kit = sit->second.find(key);
    if (kit != sit->second.end()) return kit->second;
  }
  throw ConfigError("missing config key " + (section.empty() ? key : section + "." + key));
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto sit = values_.find(section);
  return sit != values_.end() && sit->second.count(key) > 0;
}

double Config::get_double(const std::string& section, const std::string& key) const {
  const std::string& v = raw(section, key);
  char* end = nullptr;
  const double num = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || trim(std::string(end)).size())
    throw ConfigError("config key " + section + "." + key + " is not a number: '" + v + "'");
  return num;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

int Config::get_int(const std::string& section, const std::string& key) const {
  const double v = get_double(section, key);
  const int i = static_cast<int>(std::llround(v));
  if (std::abs(v - i) > 1e-9)
    throw ConfigError("config key " + section + "." + key + " must be an integer");
  return i;
}

int Config::get_int(const std::string& section, const std::string& key, int fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = raw(section, key);
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("config key " + section + "." + key + " is not a boolean: '" + v + "'");
}

std::string Config::get_string(const std::string& section, const std::string& key) const {
  return raw(section, key);
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  return has(section, key) ? raw(section, key) : fallback;
}

std::vector<double> Config::get_list(const std::string& section, const std::string& key) const {
  const std::string& v = raw(section, key);
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    char* end = nullptr;
    const double num = std::strtod(item.c_str(), &end);
    if (end == item.c_str())
      throw ConfigError("config key " + section + "." + key + " has a non-numeric element");
    out.push_back(num);
  }
  return out;
}

void Config::set_override(const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like section.key=value");
  std::string path = trim(spec.substr(0, eq));
  const std::string value = trim(spec.substr(eq + 1));
  std::string section, key;
  const std::size_t dot = path.find('.');
  if (dot == std::string::npos) {
    key = path;
  } else {
    section = path.substr(0, dot);
    key = path.substr(dot + 1);
  }
  if (!values_.count(section)) {
    section_order_.push_back(section);
    key_order_[section];
  }
  if (!values_[section].count(key)) key_order_[section].push_back(key);
  values_[section][key] = canonicalize(value, path);
}

void Config::validate_keys(const std::set<std::string>& allowed,
                           const std::set<std::string>& required) const {
  for (const auto& [section, keys] : values_)
    for (const auto& [key, value] : keys) {
      const std::string path = section.empty() ? key : section + "." + key;
      if (!allowed.count(path)) throw ConfigError("unknown config key: " + path);
    }
  for (const auto& path : required) {
    const std::size_t dot = path.find('.');
    const std::string section = dot == std::string::npos ? "" : path.substr(0, dot);
    const std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
    if (!has(section, key)) throw ConfigError("missing required config key: " + path);
  }
}

}  // namespace impm
