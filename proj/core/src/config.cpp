#include "structce/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace structce::config {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string token;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!token.empty()) out.push_back(token);
      token.clear();
    } else {
      token.push_back(c);
    }
  }
  if (!token.empty()) out.push_back(token);
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: missing '=' on line " + std::to_string(lineno));
    }
    const std::string key = trim(stripped.substr(0, eq));
    if (key.empty()) {
      throw std::invalid_argument("config: empty key on line " + std::to_string(lineno));
    }
    cfg.values_[key] = trim(stripped.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[trim(key)] = trim(value);
}

bool KeyValueConfig::has(const std::string& key) const {
  touched_.insert(key);
  return values_.count(key) != 0;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  touched_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  touched_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  double v = std::stod(it->second, &used);
  if (used != it->second.size()) {
    throw std::invalid_argument("config: bad number for key '" + key + "'");
  }
  return v;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  touched_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  long long v = std::stoll(it->second, &used);
  if (used != it->second.size()) {
    throw std::invalid_argument("config: bad integer for key '" + key + "'");
  }
  return v;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    const std::vector<double>& fallback) const {
  touched_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const auto& tok : split_list(it->second)) {
    std::size_t used = 0;
    out.push_back(std::stod(tok, &used));
    if (used != tok.size()) {
      throw std::invalid_argument("config: bad number '" + tok + "' in list '" + key + "'");
    }
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  touched_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return split_list(it->second);
}

std::vector<std::string> KeyValueConfig::untouched_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!touched_.count(k)) out.push_back(k);
  }
  return out;
}

}  // namespace structce::config
