#include "flip/util/text.hpp"

#include <fstream>

namespace flip::text {

KeyValueFile KeyValueFile::parse_text(const std::string& content, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(content);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = strip(line);
    if (v.empty() || v.front() == '#') continue;
    auto eq = v.find('=');
    if (eq == std::string_view::npos)
      throw ValidationError(origin + ":" + std::to_string(lineno) +
                            ": expected 'key = value'");
    std::string key(strip(v.substr(0, eq)));
    std::string value(strip(v.substr(eq + 1)));
    if (key.empty())
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv.entries_[key].push_back(value);
    kv.order_.push_back(key);
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

}  // namespace flip::text
