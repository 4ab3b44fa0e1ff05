#include <catch2/catch_amalgamated.hpp>

#include "marionet/keyspace.hpp"
#include "marionet/random.hpp"

using namespace marionet;

TEST_CASE("partition of 26^4 into 4 equal ranges") {
  auto ranges = partition_keyspace(26, 4, 4);
  REQUIRE(ranges.size() == 4);
  CHECK(ranges.front().begin == 0);
  CHECK(ranges.back().end == 456976);
  for (const auto& r : ranges) CHECK(r.size() == 114244);
}

TEST_CASE("partition edges") {
  auto two = partition_keyspace(2, 1, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == KeyRange{0, 1});
  CHECK(two[1] == KeyRange{1, 2});

  auto one = partition_keyspace(26, 4, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == KeyRange{0, 456976});

  // more parts than candidates: only non-empty ranges come back
  auto tiny = partition_keyspace(2, 1, 7);
  REQUIRE(tiny.size() == 2);

  CHECK_THROWS_AS(partition_keyspace(26, 4, 0), std::domain_error);
  CHECK_THROWS_AS(partition_keyspace(0, 4, 1), std::domain_error);
}

TEST_CASE("keyspace size overflow boundary") {
  CHECK_NOTHROW(keyspace_size(2, 127));
  CHECK_THROWS_AS(keyspace_size(2, 128), std::domain_error);
  CHECK_THROWS_AS(keyspace_size(256, 16), std::domain_error);
  CHECK(keyspace_size(36, 5) == 60466176);
}

TEST_CASE("partition property: disjoint, covering, balanced") {
  Rng rng(101);
  for (int i = 0; i < 100; ++i) {
    uint64_t alphabet = 1 + rng.below(36);
    uint32_t length = static_cast<uint32_t>(1 + rng.below(5));
    uint64_t parts = 1 + rng.below(64);
    auto ranges = partition_keyspace(alphabet, length, parts);
    u128 total = keyspace_size(alphabet, length);
    REQUIRE(!ranges.empty());
    CHECK(ranges.front().begin == 0);
    CHECK(ranges.back().end == total);
    u128 min_size = ranges.front().size(), max_size = ranges.front().size();
    for (size_t k = 0; k < ranges.size(); ++k) {
      CHECK(ranges[k].begin < ranges[k].end);
      if (k > 0) CHECK(ranges[k].begin == ranges[k - 1].end);  // disjoint and contiguous
      min_size = std::min(min_size, ranges[k].size());
      max_size = std::max(max_size, ranges[k].size());
    }
    CHECK(max_size - min_size <= 1);
  }
}

TEST_CASE("candidate expansion examples") {
  CHECK(index_to_candidate(0, "ab", 2) == "aa");
  CHECK(index_to_candidate(3, "ab", 2) == "bb");
  CHECK(index_to_candidate(456975, "abcdefghijklmnopqrstuvwxyz", 4) == "zzzz");
  CHECK(index_to_candidate(337135, "abcdefghijklmnopqrstuvwxyz", 4) == "test");
  CHECK_THROWS_AS(index_to_candidate(4, "ab", 2), std::domain_error);
}

TEST_CASE("candidate order matches an independent odometer") {
  const std::string alphabet = "xyz";
  const uint32_t length = 3;
  std::string odo(length, alphabet[0]);
  auto tick = [&]() {
    for (uint32_t i = length; i-- > 0;) {
      size_t pos = alphabet.find(odo[i]);
      if (pos + 1 < alphabet.size()) {
        odo[i] = alphabet[pos + 1];
        return;
      }
      odo[i] = alphabet[0];
    }
  };
  for (u128 i = 0; i < 27; ++i) {
    CHECK(index_to_candidate(i, alphabet, length) == odo);
    tick();
  }
}

TEST_CASE("candidate mapping is a bijection on sampled ranges") {
  Rng rng(7);
  const std::string full = "abcdefghijklmnopqrstuvwxyz0123456789";
  for (int trial = 0; trial < 50; ++trial) {
    size_t alpha_len = 1 + rng.below(full.size());
    std::string alphabet = full.substr(0, alpha_len);
    uint32_t length = static_cast<uint32_t>(1 + rng.below(5));
    u128 total = keyspace_size(alphabet.size(), length);
    for (int s = 0; s < 20; ++s) {
      u128 index = rng.next_u64() % static_cast<uint64_t>(std::min<u128>(total, ~uint64_t(0)));
      std::string candidate = index_to_candidate(index, alphabet, length);
      CHECK(candidate.size() == length);
      CHECK(candidate_to_index(candidate, alphabet) == index);
    }
  }
  CHECK_THROWS_AS(candidate_to_index("a!", "ab"), std::domain_error);
}

TEST_CASE("u128 decimal round-trip") {
  u128 big = (static_cast<u128>(0xffffffffffffffffULL) << 64) | 0xffffffffffffffffULL;
  CHECK(u128_to_string(big) == "340282366920938463463374607431768211455");
  u128 parsed = 0;
  CHECK(parse_u128("340282366920938463463374607431768211455", parsed));
  CHECK(parsed == big);
  CHECK_FALSE(parse_u128("340282366920938463463374607431768211456", parsed));  // overflow
  CHECK_FALSE(parse_u128("", parsed));
  CHECK_FALSE(parse_u128("12x", parsed));
}
