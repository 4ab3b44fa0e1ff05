#pragma once

// Mixed-radix candidate space [0, |alphabet|^length) and its partitioning
// into contiguous work ranges. Sizes are 128-bit so that spaces up to
// 2^128 - 1 candidates stay exact.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace marionet {

using u128 = unsigned __int128;

inline std::string u128_to_string(u128 v) {
  if (v == 0) return "0";
  std::string out;
  while (v > 0) {
    out.push_back(static_cast<char>('0' + static_cast<unsigned>(v % 10)));
    v /= 10;
  }
  return std::string(out.rbegin(), out.rend());
}

inline bool parse_u128(std::string_view s, u128& out) {
  if (s.empty() || s.size() > 39) return false;
  u128 v = 0;
  constexpr u128 kMax = ~static_cast<u128>(0);
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    unsigned d = static_cast<unsigned>(c - '0');
    if (v > (kMax - d) / 10) return false;
    v = v * 10 + d;
  }
  out = v;
  return true;
}

// alphabet_size^length, throwing std::domain_error on 128-bit overflow.
inline u128 keyspace_size(uint64_t alphabet_size, uint32_t length) {
  if (alphabet_size == 0) throw std::domain_error("keyspace: alphabet must be non-empty");
  constexpr u128 kMax = ~static_cast<u128>(0);
  u128 result = 1;
  for (uint32_t i = 0; i < length; ++i) {
    if (result > kMax / alphabet_size)
      throw std::domain_error("keyspace: alphabet_size^length exceeds 128-bit range");
    result *= alphabet_size;
  }
  return result;
}

// Half-open index interval [begin, end).
struct KeyRange {
  u128 begin = 0;
  u128 end = 0;

  u128 size() const { return end - begin; }
  bool contains(u128 i) const { return i >= begin && i < end; }
  friend bool operator==(const KeyRange&, const KeyRange&) = default;
};

// Splits [0, alphabet_size^length) into at most `parts` non-empty ranges,
// sorted, disjoint, sizes differing by at most one. Fewer than `parts`
// ranges come back when the space is smaller than the requested count.
inline std::vector<KeyRange> partition_keyspace(uint64_t alphabet_size, uint32_t length,
                                                uint64_t parts) {
  if (parts < 1) throw std::domain_error("partition_keyspace: parts must be >= 1");
  if (length < 1) throw std::domain_error("partition_keyspace: length must be >= 1");
  u128 total = keyspace_size(alphabet_size, length);
  u128 n = parts;
  if (n > total) n = total;
  u128 base = total / n;
  u128 remainder = total % n;
  std::vector<KeyRange> ranges;
  ranges.reserve(static_cast<size_t>(n));
  u128 cursor = 0;
  for (u128 i = 0; i < n; ++i) {
    u128 size = base + (i < remainder ? 1 : 0);
    ranges.push_back(KeyRange{cursor, cursor + size});
    cursor += size;
  }
  return ranges;
}

// Fixed-length expansion of `index`, most significant position first:
// index 0 is alphabet[0] repeated `length` times.
inline std::string index_to_candidate(u128 index, std::string_view alphabet, uint32_t length) {
  u128 total = keyspace_size(alphabet.size(), length);
  if (index >= total) throw std::domain_error("index_to_candidate: index outside keyspace");
  std::string out(length, alphabet[0]);
  u128 rest = index;
  uint64_t radix = alphabet.size();
  for (uint32_t pos = length; pos-- > 0;) {
    out[pos] = alphabet[static_cast<size_t>(rest % radix)];
    rest /= radix;
  }
  return out;
}

inline u128 candidate_to_index(std::string_view candidate, std::string_view alphabet) {
  u128 index = 0;
  for (char c : candidate) {
    size_t pos = alphabet.find(c);
    if (pos == std::string_view::npos)
      throw std::domain_error("candidate_to_index: character not in alphabet");
    index = index * alphabet.size() + pos;
  }
  return index;
}

}  // namespace marionet
