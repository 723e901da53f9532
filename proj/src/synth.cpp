#include "rphoc/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>

#include "rphoc/error.hpp"

namespace rphoc {

namespace {

using Rows = std::array<const char*, 7>;

const std::map<char, Rows>& font() {
  static const std::map<char, Rows> glyphs = {
      {'a', {" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'b', {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "}},
      {'c', {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "}},
      {'d', {"#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "}},
      {'e', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"}},
      {'f', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "}},
      {'g', {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ####"}},
      {'h', {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'i', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "#####"}},
      {'j', {"  ###", "   # ", "   # ", "   # ", "   # ", "#  # ", " ##  "}},
      {'k', {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"}},
      {'l', {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"}},
      {'m', {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"}},
      {'n', {"#   #", "#   #", "##  #", "# # #", "#  ##", "#   #", "#   #"}},
      {'o', {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'p', {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "}},
      {'q', {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"}},
      {'r', {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"}},
      {'s', {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "}},
      {'t', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'u', {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'v', {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "}},
      {'w', {"#   #", "#   #", "#   #", "# # #", "# # #", "# # #", " # # "}},
      {'x', {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"}},
      {'y', {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'z', {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"}},
      {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
      {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
      {'3', {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "}},
      {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
      {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
      {'6', {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "}},
      {'7', {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "}},
      {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
      {'9', {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "}},
  };
  return glyphs;
}

}  // namespace

const std::array<const char*, 7>& glyph_rows(char c) {
  const auto it = font().find(c);
  if (it == font().end()) throw InvalidInput(std::string("no glyph for character '") + c + "'");
  return it->second;
}

const std::vector<std::string>& default_lexicon() {
  static const std::vector<std::string> words = {
      "the",     "and",     "of",      "to",      "in",      "for",     "was",     "his",
      "with",    "that",    "by",      "on",      "as",      "letter",  "orders",  "company",
      "captain", "virginia","fort",    "regiment","soldiers","officer", "general", "colonel",
      "march",   "winter",  "county",  "george",  "river",   "troops",  "money",   "service",
      "return",  "would",   "should",  "present", "public",  "horses",  "1757",    "1756",
      "men",     "your",    "have",    "which",   "from",    "been",    "will",    "not",
  };
  return words;
}

void SynthSpec::validate() const {
  if (pages < 1 || lines_per_page < 1 || words_per_line < 1)
    throw InvalidInput("synth: pages, lines and words per line must be >= 1");
  if (scale_min < 1 || scale_max < scale_min) throw InvalidInput("synth: bad glyph scale range");
  if (noise < 0 || jitter < 0 || margin < 0 || line_gap < 0) throw InvalidInput("synth: negative parameter");
  // Inter-word gaps must exceed the one-column glyph spacing at the largest scale.
  if (gap_min <= scale_max || gap_max < gap_min) throw InvalidInput("synth: bad inter-word gap range");
  if (!(ink >= 0 && paper <= 255 && ink + noise < paper - noise))
    throw InvalidInput("synth: ink and paper intensities overlap under noise");
  if (2 * jitter >= line_gap + 1 && lines_per_page > 1)
    throw InvalidInput("synth: baseline jitter would let neighbouring lines touch");
}

namespace {

struct PlacedWord {
  std::string text;
  int scale = 1;
  int x = 0;
  int y = 0;  // top of the glyph cell
};

int word_width(const std::string& w, int scale) {
  return static_cast<int>(w.size()) * 6 * scale - scale;
}

}  // namespace

Dataset render_synthetic(const SynthSpec& spec) {
  spec.validate();
  const auto& lexicon = spec.lexicon.empty() ? default_lexicon() : spec.lexicon;
  const PhocConfig phoc;
  std::vector<std::string> words;
  for (const auto& w : lexicon) {
    std::string lw = normalize_word(w, phoc);
    if (lw.empty() || lw.size() != w.size())
      throw InvalidInput("synth: lexicon word '" + w + "' has characters without a glyph");
    for (char c : lw) glyph_rows(c);
    words.push_back(lw);
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<size_t> pick_word(0, words.size() - 1);
  std::uniform_int_distribution<int> pick_scale(spec.scale_min, spec.scale_max);
  std::uniform_int_distribution<int> pick_gap(spec.gap_min, spec.gap_max);
  std::uniform_int_distribution<int> pick_jitter(-spec.jitter, spec.jitter);
  std::uniform_int_distribution<int> pick_noise(-spec.noise, spec.noise);

  const int slot = 7 * spec.scale_max + 2 * spec.jitter;
  const int pitch = slot + spec.line_gap;

  Dataset data;
  for (int p = 0; p < spec.pages; ++p) {
    std::vector<PlacedWord> placed;
    int width = 0;
    for (int l = 0; l < spec.lines_per_page; ++l) {
      int x = spec.margin;
      const int line_top = spec.margin + l * pitch + spec.jitter;
      for (int k = 0; k < spec.words_per_line; ++k) {
        PlacedWord w;
        w.text = words[pick_word(rng)];
        w.scale = pick_scale(rng);
        w.x = x;
        // Bottom-aligned on a shared baseline, then jittered.
        w.y = line_top + 7 * (spec.scale_max - w.scale) + pick_jitter(rng);
        x += word_width(w.text, w.scale) + pick_gap(rng);
        width = std::max(width, w.x + word_width(w.text, w.scale));
        placed.push_back(std::move(w));
      }
    }
    width += spec.margin;
    const int height = 2 * spec.margin + spec.lines_per_page * pitch - spec.line_gap;

    std::vector<std::uint8_t> ink_mask(static_cast<size_t>(width) * height, 0);
    Page page;
    char id[16];
    std::snprintf(id, sizeof id, "p%02d", p + 1);
    page.id = id;
    for (const auto& w : placed) {
      int x0 = width, y0 = height, x1 = -1, y1 = -1;
      for (size_t c = 0; c < w.text.size(); ++c) {
        const auto& rows = glyph_rows(w.text[c]);
        const int gx = w.x + static_cast<int>(c) * 6 * w.scale;
        for (int r = 0; r < 7; ++r)
          for (int col = 0; col < 5; ++col) {
            if (rows[r][col] != '#') continue;
            for (int dy = 0; dy < w.scale; ++dy)
              for (int dx = 0; dx < w.scale; ++dx) {
                const int px = gx + col * w.scale + dx, py = w.y + r * w.scale + dy;
                ink_mask[static_cast<size_t>(py) * width + px] = 1;
                x0 = std::min(x0, px), y0 = std::min(y0, py);
                x1 = std::max(x1, px), y1 = std::max(y1, py);
              }
          }
      }
      page.words.push_back({page.id, {x0, y0, x1 - x0 + 1, y1 - y0 + 1}, w.text, w.text});
    }
    std::vector<std::uint8_t> pixels(ink_mask.size());
    for (size_t i = 0; i < pixels.size(); ++i) {
      const int base = ink_mask[i] ? spec.ink : spec.paper;
      pixels[i] = static_cast<std::uint8_t>(std::clamp(base + pick_noise(rng), 0, 255));
    }
    page.image = GrayImage(width, height, std::move(pixels));
    data.pages.push_back(std::move(page));
  }
  return data;
}

}  // namespace rphoc
