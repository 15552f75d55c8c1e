#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flip/util/error.hpp"

namespace flip::text {

inline std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  s = strip(s);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

inline bool parse_long(std::string_view s, long long& out) {
  s = strip(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

// Shortest decimal representation that round-trips to the same double.
// Integer-valued doubles print without an exponent.
inline std::string format_double(double v) {
  char buf[40];
  if (v == static_cast<double>(static_cast<long long>(v)) &&
      std::fabs(v) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    if (parse_double(buf, back) && back == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Minimal key = value configuration format shared by schema, world and
// experiment files. Lines are `key = value`, `#` starts a comment, keys may
// repeat (values are kept in order).
class KeyValueFile {
 public:
  static KeyValueFile parse_text(const std::string& content, const std::string& origin);
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  const std::string& get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end() || it->second.empty())
      throw ValidationError(origin_ + ": missing required key '" + key + "'");
    return it->second.front();
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return (it == entries_.end() || it->second.empty()) ? fallback : it->second.front();
  }

  const std::vector<std::string>& all(const std::string& key) const {
    static const std::vector<std::string> empty;
    auto it = entries_.find(key);
    return it == entries_.end() ? empty : it->second;
  }

  double get_double(const std::string& key) const {
    double v = 0.0;
    if (!parse_double(get(key), v))
      throw ValidationError(origin_ + ": key '" + key + "' is not a number");
    return v;
  }

  long long get_int(const std::string& key) const {
    long long v = 0;
    if (!parse_long(get(key), v))
      throw ValidationError(origin_ + ": key '" + key + "' is not an integer");
    return v;
  }

  const std::vector<std::string>& keys_in_order() const { return order_; }
  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::map<std::string, std::vector<std::string>> entries_;
  std::vector<std::string> order_;
};

}  // namespace flip::text
