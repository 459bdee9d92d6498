#pragma once

// String similarity primitives: UTF-8 decoding, bit-parallel Levenshtein
// distance, and character-bigram Sørensen-Dice.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace uibench::text {

/// Decodes UTF-8 into code points. Malformed sequences decode byte-wise as
/// U+FFFD so every input has a defined code-point length.
inline std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

inline std::string utf8_encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

inline std::size_t code_point_length(std::string_view s) { return utf8_decode(s).size(); }

namespace detail {

// Per-block match bitmasks for the pattern string.
class PatternMasks {
 public:
  explicit PatternMasks(std::u32string_view pattern)
      : blocks_((pattern.size() + 63) / 64), ascii_(blocks_ * 256, 0) {
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      const std::size_t block = i / 64;
      const std::uint64_t bit = std::uint64_t{1} << (i % 64);
      const char32_t c = pattern[i];
      if (c < 256) {
        ascii_[block * 256 + c] |= bit;
      } else {
        auto& v = other_[c];
        if (v.empty()) v.assign(blocks_, 0);
        v[block] |= bit;
      }
    }
  }

  std::uint64_t get(std::size_t block, char32_t c) const {
    if (c < 256) return ascii_[block * 256 + c];
    auto it = other_.find(c);
    return it == other_.end() ? 0 : it->second[block];
  }

  std::size_t blocks() const noexcept { return blocks_; }

 private:
  std::size_t blocks_;
  std::vector<std::uint64_t> ascii_;
  std::unordered_map<char32_t, std::vector<std::uint64_t>> other_;
};

}  // namespace detail

/// Unit-cost Levenshtein distance (insert, delete, substitute) using Myers'
/// bit-vector recurrence in 64-row blocks. O(ceil(|a|/64) * |b|).
template <typename CharT>
std::size_t levenshtein(std::basic_string_view<CharT> a, std::basic_string_view<CharT> b) {
  if (a.size() > b.size()) std::swap(a, b);
  const std::size_t m = a.size();
  if (m == 0) return b.size();

  const std::u32string pattern(a.begin(), a.end());
  const detail::PatternMasks peq(pattern);
  const std::size_t blocks = peq.blocks();
  std::vector<std::uint64_t> pv(blocks, ~std::uint64_t{0});
  std::vector<std::uint64_t> mv(blocks, 0);
  const std::uint64_t last_bit = std::uint64_t{1} << ((m - 1) % 64);
  constexpr std::uint64_t kHigh = std::uint64_t{1} << 63;

  std::size_t score = m;
  for (const CharT ch : b) {
    const auto c = static_cast<char32_t>(ch);
    int h_in = 1;  // top row D[0][j] grows by one per column
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      std::uint64_t eq = peq.get(blk, c);
      const std::uint64_t p = pv[blk];
      const std::uint64_t mm = mv[blk];
      const std::uint64_t xv = eq | mm;
      if (h_in < 0) eq |= 1;
      const std::uint64_t xh = (((eq & p) + p) ^ p) | eq;
      std::uint64_t ph = mm | ~(xh | p);
      std::uint64_t mh = p & xh;

      const std::uint64_t out_bit = blk + 1 == blocks ? last_bit : kHigh;
      int h_out = 0;
      if (ph & out_bit) h_out = 1;
      else if (mh & out_bit) h_out = -1;

      ph <<= 1;
      mh <<= 1;
      if (h_in < 0) mh |= 1;
      else if (h_in > 0) ph |= 1;
      pv[blk] = mh | ~(xv | ph);
      mv[blk] = ph & xv;
      h_in = h_out;
    }
    score = static_cast<std::size_t>(static_cast<long long>(score) + h_in);
  }
  return score;
}

/// S = 1 - distance / (l1 + l2) over code points; 1 when both are empty.
inline double normalized_code_similarity(std::string_view a, std::string_view b) {
  const std::u32string ua = utf8_decode(a);
  const std::u32string ub = utf8_decode(b);
  const std::size_t total = ua.size() + ub.size();
  if (total == 0) return 1.0;
  const std::size_t d = levenshtein<char32_t>(ua, ub);
  return 1.0 - static_cast<double>(d) / static_cast<double>(total);
}

inline bool is_space(char32_t c) {
  return c == U'\x20' || (c >= U'\x09' && c <= U'\x0D') || c == U'\u00A0' ||
         c == U'\u1680' || (c >= U'\u2000' && c <= U'\u200A') || c == U'\u2028' ||
         c == U'\u2029' || c == U'\u202F' || c == U'\u205F' || c == U'\u3000';
}

/// Collapses whitespace runs to one space and trims both ends.
inline std::u32string normalize_whitespace(std::u32string_view s) {
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline std::string normalize_whitespace(std::string_view s) {
  return utf8_encode(normalize_whitespace(utf8_decode(s)));
}

/// Simple case folding covering ASCII, Latin-1, Latin Extended-A pairs,
/// Greek and Cyrillic capitals.
inline char32_t fold_case(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if ((c >= 0xC0 && c <= 0xDE) && c != 0xD7) return c + 32;
  if ((c >= 0x100 && c <= 0x137) || (c >= 0x14A && c <= 0x177)) return c % 2 == 0 ? c + 1 : c;
  if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) return c % 2 == 1 ? c + 1 : c;
  if (c == 0x178) return 0xFF;
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

/// Sørensen-Dice over character-bigram multisets of the whitespace-normalized,
/// case-folded inputs. Inputs shorter than two code points compare by equality.
inline double dice(std::string_view a, std::string_view b) {
  auto prep = [](std::string_view s) {
    std::u32string n = normalize_whitespace(utf8_decode(s));
    for (auto& c : n) c = fold_case(c);
    return n;
  };
  const std::u32string x = prep(a);
  const std::u32string y = prep(b);
  if (x.size() < 2 || y.size() < 2) return x == y ? 1.0 : 0.0;

  auto key = [](char32_t p, char32_t q) {
    return (static_cast<std::uint64_t>(p) << 32) | static_cast<std::uint64_t>(q);
  };
  std::unordered_map<std::uint64_t, int> counts;
  counts.reserve(x.size());
  for (std::size_t i = 0; i + 1 < x.size(); ++i) ++counts[key(x[i], x[i + 1])];
  std::size_t shared = 0;
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    auto it = counts.find(key(y[i], y[i + 1]));
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++shared;
    }
  }
  const double total = static_cast<double>((x.size() - 1) + (y.size() - 1));
  return 2.0 * static_cast<double>(shared) / total;
}

}  // namespace uibench::text
