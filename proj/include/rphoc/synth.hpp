#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rphoc/dataset.hpp"

namespace rphoc {

struct SynthSpec {
  std::vector<std::string> lexicon;  // empty = built-in word list
  int pages = 20;
  int lines_per_page = 6;
  int words_per_line = 5;
  int scale_min = 2;  // integer glyph magnification
  int scale_max = 2;
  int noise = 20;     // additive uniform intensity noise, +-noise
  int jitter = 2;     // per-word vertical offset, +-jitter pixels
  int gap_min = 10;   // inter-word gap in pixels
  int gap_max = 18;
  int line_gap = 14;  // blank rows between line slots
  int margin = 12;
  int ink = 40;
  int paper = 220;
  std::uint64_t seed = 7;

  void validate() const;
};

const std::vector<std::string>& default_lexicon();

// 7 rows of 5 columns, '#' = ink. Only [a-z0-9] have glyphs.
const std::array<const char*, 7>& glyph_rows(char c);

Dataset render_synthetic(const SynthSpec& spec);

}  // namespace rphoc
