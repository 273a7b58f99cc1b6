#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace thbench {

/// 64-bit FNV-1a. Used for content fingerprints, not for security.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) noexcept {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update(const void* data, std::size_t size) noexcept {
    return update(std::string_view(static_cast<const char*>(data), size));
  }
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string fnv1a_hex(std::string_view bytes);

/// Hash of a file's bytes; throws kIo when unreadable.
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace thbench
