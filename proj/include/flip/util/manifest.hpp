#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "flip/util/error.hpp"
#include "flip/util/sha256.hpp"

namespace flip::util {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Resolved-run record written next to every output file set. Reruns with an
// equal manifest (ignoring the timestamp comment) produce byte-identical
// numeric outputs on the same platform.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)) {
    add("artifact_version", kArtifactVersion);
    add("command", command_);
  }

  void add(const std::string& key, const std::string& value) {
    entries_.emplace_back(key, value);
  }
  void add_input(const std::string& key, const std::string& path) {
    add("input." + key, path);
    add("input." + key + ".sha256", Sha256::of_file(path));
  }

  void write(const std::string& path, const std::string& timestamp_utc) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write manifest: " + path);
    out << "# run manifest (timestamp: " << timestamp_utc << ")\n";
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
  }

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace flip::util
