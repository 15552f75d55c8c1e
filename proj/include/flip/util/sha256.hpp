#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace flip::util {

// FIPS 180-4 SHA-256, enough for manifest input digests.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset();
  void update(const void* data, std::size_t len);
  std::string hex_digest();

  static std::string of_string(std::string_view s) {
    Sha256 h;
    h.update(s.data(), s.size());
    return h.hex_digest();
  }
  static std::string of_file(const std::string& path);

 private:
  void process_block(const std::uint8_t* block);

  std::uint32_t state_[8];
  std::uint64_t total_len_ = 0;
  std::uint8_t buffer_[64];
  std::size_t buffer_len_ = 0;
};

}  // namespace flip::util
