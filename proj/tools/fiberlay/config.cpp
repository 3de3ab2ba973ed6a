#include "config.hpp"

#include <openssl/evp.h>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <charconv>
#include <sstream>

#include "fiberlay/error.hpp"

namespace fiberlay::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

std::string normalize(const std::string& value) {
  const std::string v = trim(value);
  double d;
  if (parse_double(v, d)) return fmt::format("{}", d);
  if (v.find(',') != std::string::npos) {
    std::vector<std::string> out;
    for (const auto& part : split(v, ',')) {
      if (!parse_double(part, d)) return v;
      out.push_back(fmt::format("{}", d));
    }
    return fmt::format("{}", fmt::join(out, ","));
  }
  return v;
}

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::config, msg); }

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

Config Config::parse(std::istream& in, const std::string& origin) {
  Config c;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') config_error(fmt::format("{}:{}: unterminated section", origin, lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      config_error(fmt::format("{}:{}: expected key = value", origin, lineno));
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) config_error(fmt::format("{}:{}: empty key", origin, lineno));
    c.set(section.empty() ? key : section + "." + key, line.substr(eq + 1));
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) { values_[trim(key)] = trim(value); }

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty())
    config_error(fmt::format("override '{}' is not key=value", assignment));
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

const std::string& Config::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) config_error(fmt::format("missing required field '{}'", key));
  used_.insert(key);
  return it->second;
}

std::string Config::str(const std::string& key) const { return raw(key); }

std::string Config::str(const std::string& key, const std::string& fallback) const {
  if (!has(key)) {
    defaults_[key] = fallback;
    return fallback;
  }
  return raw(key);
}

double Config::num(const std::string& key) const {
  double d;
  if (!parse_double(raw(key), d))
    config_error(fmt::format("field '{}' = '{}' is not a number", key, raw(key)));
  return d;
}

double Config::num(const std::string& key, double fallback) const {
  if (!has(key)) {
    defaults_[key] = fmt::format("{}", fallback);
    return fallback;
  }
  return num(key);
}

std::size_t Config::count(const std::string& key, std::size_t fallback) const {
  if (!has(key)) {
    defaults_[key] = fmt::format("{}", fallback);
    return fallback;
  }
  const double d = num(key);
  if (d < 0 || d != std::floor(d))
    config_error(fmt::format("field '{}' must be a nonnegative integer", key));
  return static_cast<std::size_t>(d);
}

bool Config::flag(const std::string& key, bool fallback) const {
  if (!has(key)) {
    defaults_[key] = fallback ? "true" : "false";
    return fallback;
  }
  const std::string v = raw(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  config_error(fmt::format("field '{}' must be true or false", key));
}

std::vector<double> Config::list(const std::string& key, std::vector<double> fallback) const {
  if (!has(key)) {
    if (!fallback.empty()) defaults_[key] = fmt::format("{}", fmt::join(fallback, ","));
    return fallback;
  }
  std::vector<double> out;
  for (const auto& part : split(raw(key), ',')) {
    double d;
    if (!parse_double(part, d))
      config_error(fmt::format("field '{}' has a non-numeric entry '{}'", key, part));
    out.push_back(d);
  }
  if (out.empty()) config_error(fmt::format("field '{}' is empty", key));
  return out;
}

FullState Config::state(const std::string& key, const FullState& fallback) const {
  if (!has(key)) {
    defaults_[key] = fmt::format("{},{},{}", fallback.xi.x(), fallback.xi.y(), fallback.alpha);
    return fallback;
  }
  const auto v = list(key, {});
  if (v.size() != 3) config_error(fmt::format("field '{}' needs three numbers x, y, alpha", key));
  return FullState(Eigen::Vector2d(v[0], v[1]), v[2]);
}

std::map<std::string, std::string> Config::canonical() const {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : values_) out[k] = normalize(v);
  return out;
}

std::map<std::string, std::string> Config::effective() const {
  auto out = canonical();
  for (const auto& [k, v] : defaults_) out.emplace(k, v);
  return out;
}

std::string Config::hash(const std::string& salt) const {
  std::string text = salt + "\n";
  for (const auto& [k, v] : canonical()) text += k + "=" + v + "\n";
  return sha256_hex(text);
}

std::vector<std::string> Config::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

}  // namespace fiberlay::cli
