#include "rphoc/phoc.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <json.hpp>
#include <numeric>

#include "rphoc/error.hpp"

namespace rphoc {

std::vector<std::string> PhocConfig::default_bigrams() {
  return {"th", "he", "in", "er", "an", "re", "on", "at", "en", "nd", "ti", "es", "or",
          "te", "of", "ed", "is", "it", "al", "ar", "st", "to", "nt", "ng", "se", "ha",
          "as", "ou", "io", "le", "ve", "co", "me", "de", "hi", "ri", "ro", "ic", "ne",
          "ea", "ra", "ce", "li", "ch", "ll", "be", "ma", "si", "om", "ur"};
}

std::string PhocConfig::to_json() const {
  nlohmann::ordered_json j;
  j["alphabet"] = alphabet;
  j["unigram_levels"] = unigram_levels;
  j["bigrams"] = bigrams;
  j["bigram_levels"] = bigram_levels;
  j["occupancy_overlap"] = occupancy_overlap;
  return j.dump();
}

PhocConfig PhocConfig::from_json(std::string_view text) {
  PhocConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.contains("alphabet")) cfg.alphabet = j.at("alphabet").get<std::string>();
    if (j.contains("unigram_levels"))
      cfg.unigram_levels = j.at("unigram_levels").get<std::vector<int>>();
    if (j.contains("bigrams")) cfg.bigrams = j.at("bigrams").get<std::vector<std::string>>();
    if (j.contains("bigram_levels"))
      cfg.bigram_levels = j.at("bigram_levels").get<std::vector<int>>();
    if (j.contains("occupancy_overlap"))
      cfg.occupancy_overlap = j.at("occupancy_overlap").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("PHOC config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string PhocConfig::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : to_json()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void PhocConfig::validate() const {
  if (alphabet.empty()) throw InvalidInput("PHOC config: empty alphabet");
  std::string sorted = alphabet;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidInput("PHOC config: duplicate alphabet symbol");
  auto positive = [](const std::vector<int>& v) {
    return std::all_of(v.begin(), v.end(), [](int l) { return l >= 1; });
  };
  if (!positive(unigram_levels) || !positive(bigram_levels))
    throw InvalidInput("PHOC config: levels must be >= 1");
  for (const auto& bg : bigrams)
    if (bg.size() != 2) throw InvalidInput("PHOC config: bigram '" + bg + "' is not 2 symbols");
  if (!(occupancy_overlap > 0.0 && occupancy_overlap <= 1.0))
    throw InvalidInput("PHOC config: occupancy_overlap must lie in (0, 1]");
}

Interval occupancy(int k, int n) {
  if (n <= 0 || k < 0 || k >= n) throw InvalidInput("occupancy: require 0 <= k < n");
  return {static_cast<double>(k) / n, static_cast<double>(k + 1) / n};
}

bool in_region(Interval char_iv, Interval region_iv, double overlap_frac) {
  const double inter = std::min(char_iv.hi, region_iv.hi) - std::max(char_iv.lo, region_iv.lo);
  // Slack absorbs rounding in the caller's k/n and r/L divisions.
  return inter >= overlap_frac * char_iv.length() - 1e-12;
}

std::size_t phoc_dimension(const PhocConfig& cfg) {
  const auto sum = [](const std::vector<int>& v) {
    return static_cast<std::size_t>(std::accumulate(v.begin(), v.end(), 0));
  };
  return cfg.alphabet.size() * sum(cfg.unigram_levels) + cfg.bigrams.size() * sum(cfg.bigram_levels);
}

std::string normalize_word(std::string_view word, const PhocConfig& cfg) {
  std::string out;
  out.reserve(word.size());
  for (unsigned char c : word) {
    const char lower = static_cast<char>(std::tolower(c));
    if (cfg.alphabet.find(lower) != std::string::npos) out.push_back(lower);
  }
  return out;
}

namespace {

// Membership of the span [first, first + span) of an n-symbol word in region r
// of L. Everything is scaled by n*L so the test is on integers.
bool span_in_region(int first, int span, int n, int r, int L, double overlap_frac) {
  const long long lo = static_cast<long long>(first) * L;
  const long long hi = static_cast<long long>(first + span) * L;
  const long long rlo = static_cast<long long>(r) * n;
  const long long rhi = static_cast<long long>(r + 1) * n;
  const long long inter = std::min(hi, rhi) - std::max(lo, rlo);
  return inter > 0 && static_cast<double>(inter) >= overlap_frac * static_cast<double>(hi - lo);
}

}  // namespace

PhocVector encode_string(std::string_view word, const PhocConfig& cfg) {
  const std::string norm = normalize_word(word, cfg);
  if (norm.empty()) throw InvalidInput("encode_string: word has no in-alphabet characters");
  const int n = static_cast<int>(norm.size());
  const int A = static_cast<int>(cfg.alphabet.size());

  std::vector<int> symbol(n);
  for (int i = 0; i < n; ++i) symbol[i] = static_cast<int>(cfg.alphabet.find(norm[i]));

  PhocVector out(phoc_dimension(cfg), 0.0f);
  std::size_t offset = 0;
  for (int L : cfg.unigram_levels) {
    for (int r = 0; r < L; ++r, offset += A)
      for (int k = 0; k < n; ++k)
        if (span_in_region(k, 1, n, r, L, cfg.occupancy_overlap)) out[offset + symbol[k]] = 1.0f;
  }

  const int B = static_cast<int>(cfg.bigrams.size());
  for (int L : cfg.bigram_levels) {
    for (int r = 0; r < L; ++r, offset += B) {
      for (int k = 0; k + 1 < n; ++k) {
        const auto it = std::find(cfg.bigrams.begin(), cfg.bigrams.end(), norm.substr(k, 2));
        if (it == cfg.bigrams.end()) continue;
        if (span_in_region(k, 2, n, r, L, cfg.occupancy_overlap))
          out[offset + static_cast<std::size_t>(it - cfg.bigrams.begin())] = 1.0f;
      }
    }
  }
  return out;
}

}  // namespace rphoc
