#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace examforge {

using Bytes = std::vector<std::uint8_t>;

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);

// Streaming variant for chunked assembly.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> data);
  std::string hex_digest();

 private:
  void* ctx_;
};

std::string base64_encode(std::span<const std::uint8_t> data);
// nullopt on malformed input.
std::optional<Bytes> base64_decode(std::string_view text);

bool is_sha256_hex(std::string_view s);

// Time-ordered opaque ids: ids minted later in one process sort after
// earlier ones, which gives stable (created-at, id) ordering for free.
std::string new_id(std::string_view prefix);

}  // namespace examforge
