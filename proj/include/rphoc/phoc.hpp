#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rphoc {

struct PhocConfig {
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::vector<int> unigram_levels = {2, 3, 4, 5};
  std::vector<std::string> bigrams = default_bigrams();
  std::vector<int> bigram_levels = {2};
  double occupancy_overlap = 0.5;

  static std::vector<std::string> default_bigrams();

  // Canonical JSON form; the hash below is computed over exactly this text.
  std::string to_json() const;
  static PhocConfig from_json(std::string_view text);
  // 16 hex digits of FNV-1a over to_json().
  std::string hash() const;
  void validate() const;
};

// Attribute vector. Binary for string encodings, probabilities for network outputs.
using PhocVector = std::vector<float>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

Interval occupancy(int k, int n);

// |char_iv ∩ region_iv| >= overlap_frac * |char_iv|
bool in_region(Interval char_iv, Interval region_iv, double overlap_frac = 0.5);

std::size_t phoc_dimension(const PhocConfig& cfg);

// Lowercase fold, then drop characters outside the alphabet.
std::string normalize_word(std::string_view word, const PhocConfig& cfg);

// Layout: unigram levels in order, regions left to right, alphabet order; then
// bigram levels, regions, bigram list order.
PhocVector encode_string(std::string_view word, const PhocConfig& cfg);

}  // namespace rphoc
