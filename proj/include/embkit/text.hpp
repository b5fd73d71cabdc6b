#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace embkit {

inline constexpr std::uint32_t kDefaultHashBuckets = 65536;

/// Sparse hashed-feature vector: (bucket, weight) sorted by bucket, no
/// duplicate buckets. Dense realization has unit L2 norm unless empty.
struct FeatureVector {
  std::uint32_t buckets = kDefaultHashBuckets;
  std::vector<std::pair<std::uint32_t, double>> entries;

  bool empty() const { return entries.empty(); }
  std::vector<double> dense() const;
  bool operator==(const FeatureVector&) const = default;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// Decodes UTF-8 to code points. Invalid sequences decode to U+FFFD.
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(std::u32string_view s);

/// Simple lowercasing with the Turkish dotted/dotless I rules applied first:
/// 'I' -> 'ı' and 'İ' -> 'i'. Covers ASCII, Latin-1, Latin Extended-A,
/// Greek and Cyrillic; other code points pass through unchanged.
char32_t turkish_lower(char32_t c);
std::u32string turkish_lower(std::u32string_view s);

/// Whole tokens plus every 3-, 4- and 5-code-point n-gram inside each token,
/// UTF-8 encoded, in emission order.
std::vector<std::string> feature_strings(std::string_view text);

/// Hashes feature_strings with FNV-1a 64 mod `buckets`, accumulates counts,
/// L2-normalizes. Empty or whitespace-only text gives the zero vector.
FeatureVector featurize(std::string_view text, std::uint32_t buckets = kDefaultHashBuckets);

}  // namespace embkit
