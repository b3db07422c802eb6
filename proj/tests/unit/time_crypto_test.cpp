#include <set>

#include <gtest/gtest.h>

#include "examforge/crypto.hpp"
#include "examforge/time.hpp"

using namespace examforge;

TEST(Time, Rfc3339RoundTrip) {
  const auto t = parse_rfc3339("2025-03-01T10:00:00.250Z");
  ASSERT_TRUE(t);
  EXPECT_EQ(format_rfc3339(*t), "2025-03-01T10:00:00.250Z");
  EXPECT_EQ(format_rfc3339(*parse_rfc3339("2025-03-01T10:00:00Z")), "2025-03-01T10:00:00.000Z");
  EXPECT_EQ(format_rfc3339(*parse_rfc3339("2025-03-01T12:00:00+02:00")), "2025-03-01T10:00:00.000Z");
  EXPECT_FALSE(parse_rfc3339("2025-13-01T00:00:00Z"));
  EXPECT_FALSE(parse_rfc3339("yesterday"));
}

TEST(Time, DatesAndRanges) {
  const auto d = parse_date("2024-02-29");
  ASSERT_TRUE(d);
  EXPECT_EQ(format_date(*d), "2024-02-29");
  EXPECT_FALSE(parse_date("2023-02-29"));
  DateRange r{*parse_date("2024-02-28"), *parse_date("2024-03-01")};
  EXPECT_EQ(r.days(), 3);
  EXPECT_TRUE(r.contains(*d));
  EXPECT_EQ(format_rfc3339(r.end()), "2024-03-02T00:00:00.000Z");
}

TEST(Crypto, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(std::string_view("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex(std::string_view("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  const std::string a = "a", bc = "bc";
  h.update({reinterpret_cast<const std::uint8_t*>(a.data()), a.size()});
  h.update({reinterpret_cast<const std::uint8_t*>(bc.data()), bc.size()});
  EXPECT_EQ(h.hex_digest(), sha256_hex(std::string_view("abc")));
}

TEST(Crypto, Base64) {
  const Bytes data = {0, 1, 2, 250, 251, 252, 253};
  const auto enc = base64_encode(data);
  EXPECT_EQ(base64_decode(enc), data);
  EXPECT_EQ(base64_encode(Bytes{'f', 'o', 'o', 'b'}), "Zm9vYg==");
  EXPECT_FALSE(base64_decode("not base64!"));
}

TEST(Crypto, IdsAreUniqueAndOrdered) {
  std::set<std::string> seen;
  std::string prev;
  for (int i = 0; i < 5000; ++i) {
    auto id = new_id("q");
    EXPECT_EQ(id.rfind("q_", 0), 0u);
    EXPECT_GT(id, prev);
    EXPECT_TRUE(seen.insert(id).second);
    prev = id;
  }
  EXPECT_TRUE(is_sha256_hex(sha256_hex(std::string_view("x"))));
  EXPECT_FALSE(is_sha256_hex("ABC"));
}
