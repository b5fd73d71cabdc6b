#include "embkit/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "embkit/common.hpp"

namespace embkit {

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

std::vector<double> FeatureVector::dense() const {
  std::vector<double> out(buckets, 0.0);
  for (const auto& [b, w] : entries) out[b] = w;
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c0 < 0x80) {
      len = 1;
      cp = c0;
    } else if ((c0 & 0xE0) == 0xC0) {
      len = 2;
      cp = c0 & 0x1F;
    } else if ((c0 & 0xF0) == 0xE0) {
      len = 3;
      cp = c0 & 0x0F;
    } else if ((c0 & 0xF8) == 0xF0) {
      len = 4;
      cp = c0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto ck = static_cast<unsigned char>(s[i + k]);
      if ((ck & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (ck & 0x3F);
    }
    if (!ok) {
      out.push_back(U'�');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) {
    if (c < 0x80) {
      out += static_cast<char>(c);
    } else if (c < 0x800) {
      out += static_cast<char>(0xC0 | (c >> 6));
      out += static_cast<char>(0x80 | (c & 0x3F));
    } else if (c < 0x10000) {
      out += static_cast<char>(0xE0 | (c >> 12));
      out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (c & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (c >> 18));
      out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (c & 0x3F));
    }
  }
  return out;
}

char32_t turkish_lower(char32_t c) {
  if (c == U'I') return U'ı';
  if (c == U'İ') return U'i';
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c < 0x80) return c;
  // Latin-1: À..Þ except ×
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  // Latin Extended-A: pairs (upper even, lower odd) in 0100..0137 and 014A..0177,
  // (upper odd, lower even) in 0139..0148 and 0179..017E.
  if ((c >= 0x100 && c <= 0x137) || (c >= 0x14A && c <= 0x177)) return (c % 2 == 0) ? c + 1 : c;
  if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) return (c % 2 == 1) ? c + 1 : c;
  if (c == 0x178) return 0xFF;
  // Greek capitals
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c == 0x386) return 0x3AC;
  if (c >= 0x388 && c <= 0x38A) return c + 37;
  if (c == 0x38C) return 0x3CC;
  if (c == 0x38E || c == 0x38F) return c + 63;
  // Cyrillic
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  return c;
}

std::u32string turkish_lower(std::u32string_view s) {
  std::u32string out(s);
  for (auto& c : out) c = turkish_lower(c);
  return out;
}

namespace {

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' || c == 0xA0 ||
         c == 0x2028 || c == 0x2029 || c == 0x3000 || (c >= 0x2000 && c <= 0x200A);
}

}  // namespace

std::vector<std::string> feature_strings(std::string_view text) {
  const std::u32string lowered = turkish_lower(utf8_decode(text));
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < lowered.size()) {
    while (i < lowered.size() && is_space(lowered[i])) ++i;
    std::size_t j = i;
    while (j < lowered.size() && !is_space(lowered[j])) ++j;
    if (j > i) {
      std::u32string_view token(lowered.data() + i, j - i);
      out.push_back(utf8_encode(token));
      for (std::size_t n = 3; n <= 5; ++n)
        for (std::size_t s = 0; s + n <= token.size(); ++s) out.push_back(utf8_encode(token.substr(s, n)));
    }
    i = j;
  }
  return out;
}

FeatureVector featurize(std::string_view text, std::uint32_t buckets) {
  if (buckets < 2) throw Error("featurize: hash space must have at least 2 buckets");
  std::map<std::uint32_t, double> counts;
  for (const auto& f : feature_strings(text)) counts[static_cast<std::uint32_t>(fnv1a64(f) % buckets)] += 1.0;

  FeatureVector fv;
  fv.buckets = buckets;
  double sq = 0.0;
  for (const auto& [b, c] : counts) sq += c * c;
  const double norm = std::sqrt(sq);
  fv.entries.reserve(counts.size());
  for (const auto& [b, c] : counts) fv.entries.emplace_back(b, c / norm);
  return fv;
}

}  // namespace embkit
