#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rphoc/imaging.hpp"
#include "rphoc/phoc.hpp"

namespace rphoc {

struct GroundTruthWord {
  std::string page_id;
  BBox bbox;
  std::string transcription;
  std::string normalized;  // lowercase, in-alphabet characters only
};

struct Page {
  std::string id;
  GrayImage image;
  std::vector<GroundTruthWord> words;
};

struct Dataset {
  std::vector<Page> pages;
  // Human-readable notes about clipped boxes and similar repairs.
  std::vector<std::string> warnings;

  const Page& page(const std::string& id) const;
  std::vector<std::string> page_ids() const;
};

// Directory of `<id>.pgm|png` images with `<id>.gt` annotations; each
// annotation line is `x y w h transcription` (0-indexed, top-left origin).
Dataset load_dataset(const std::filesystem::path& root, const PhocConfig& phoc = {});
void save_dataset(const Dataset& data, const std::filesystem::path& root);

// Parses one annotation file body. `source` labels error messages.
std::vector<GroundTruthWord> parse_annotations(const std::string& text, const std::string& page_id,
                                               const PhocConfig& phoc, const std::string& source);

struct FoldSplit {
  int index = 0;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Seeded shuffle into `bins` equal test bins; fold k tests on bin k.
std::vector<FoldSplit> make_folds(const std::vector<std::string>& page_ids, std::uint64_t seed,
                                  int bins = 4);

}  // namespace rphoc
