#include "rphoc/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "rphoc/error.hpp"
#include "rphoc/image_io.hpp"

namespace rphoc {

const Page& Dataset::page(const std::string& id) const {
  for (const auto& p : pages)
    if (p.id == id) return p;
  throw InvalidInput("unknown page id '" + id + "'");
}

std::vector<std::string> Dataset::page_ids() const {
  std::vector<std::string> ids;
  for (const auto& p : pages) ids.push_back(p.id);
  return ids;
}

std::vector<GroundTruthWord> parse_annotations(const std::string& text, const std::string& page_id,
                                               const PhocConfig& phoc, const std::string& source) {
  std::vector<GroundTruthWord> words;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    GroundTruthWord w;
    w.page_id = page_id;
    if (!(fields >> w.bbox.x >> w.bbox.y >> w.bbox.w >> w.bbox.h))
      throw InvalidInput(source + ":" + std::to_string(lineno) + ": expected 'x y w h transcription'");
    std::string rest;
    std::getline(fields, rest);
    const auto b = rest.find_first_not_of(" \t");
    if (b == std::string::npos)
      throw InvalidInput(source + ":" + std::to_string(lineno) + ": missing transcription");
    w.transcription = rest.substr(b, rest.find_last_not_of(" \t") - b + 1);
    if (w.bbox.w <= 0 || w.bbox.h <= 0)
      throw InvalidInput(source + ":" + std::to_string(lineno) + ": box must have positive size");
    w.normalized = normalize_word(w.transcription, phoc);
    words.push_back(std::move(w));
  }
  return words;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& root, const PhocConfig& phoc) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw InvalidInput("dataset root is not a directory: " + root.string());
  std::vector<fs::path> annotations;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".gt") annotations.push_back(entry.path());
  std::sort(annotations.begin(), annotations.end());

  Dataset data;
  for (const auto& gt : annotations) {
    Page page;
    page.id = gt.stem().string();
    fs::path image;
    for (const char* ext : {".pgm", ".png"}) {
      auto candidate = gt.parent_path() / (page.id + ext);
      if (fs::exists(candidate)) {
        image = candidate;
        break;
      }
    }
    if (image.empty()) throw InvalidInput("no image (.pgm/.png) for annotation " + gt.string());
    page.image = load_image(image);
    const BBox bounds{0, 0, page.image.width(), page.image.height()};
    for (auto& w : parse_annotations(read_text(gt), page.id, phoc, gt.string())) {
      if (bounds.contains(w.bbox)) {
        page.words.push_back(std::move(w));
        continue;
      }
      const int x0 = std::max(w.bbox.x, 0), y0 = std::max(w.bbox.y, 0);
      const int x1 = std::min(w.bbox.right(), bounds.w), y1 = std::min(w.bbox.bottom(), bounds.h);
      if (x1 <= x0 || y1 <= y0) {
        data.warnings.push_back(page.id + ": dropped box outside the page for '" + w.transcription + "'");
        continue;
      }
      data.warnings.push_back(page.id + ": clipped box for '" + w.transcription + "'");
      w.bbox = {x0, y0, x1 - x0, y1 - y0};
      page.words.push_back(std::move(w));
    }
    data.pages.push_back(std::move(page));
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  for (const auto& page : data.pages) {
    save_pgm(page.image, root / (page.id + ".pgm"));
    std::ofstream out(root / (page.id + ".gt"));
    if (!out) throw InvalidInput("cannot write annotations for " + page.id);
    for (const auto& w : page.words)
      out << w.bbox.x << ' ' << w.bbox.y << ' ' << w.bbox.w << ' ' << w.bbox.h << ' '
          << w.transcription << '\n';
  }
}

std::vector<FoldSplit> make_folds(const std::vector<std::string>& page_ids, std::uint64_t seed,
                                  int bins) {
  if (bins < 2) throw InvalidInput("folds: need at least 2 bins");
  if (page_ids.empty() || page_ids.size() % static_cast<size_t>(bins) != 0)
    throw InvalidInput("folds: " + std::to_string(page_ids.size()) + " pages cannot be split into " +
                       std::to_string(bins) + " equal bins; pass --bins with a divisor of the page count");
  std::vector<std::string> order = page_ids;
  std::sort(order.begin(), order.end());
  std::mt19937_64 rng(seed);
  for (size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const size_t per_bin = order.size() / bins;
  std::vector<FoldSplit> folds;
  for (int k = 0; k < bins; ++k) {
    FoldSplit f;
    f.index = k;
    for (size_t i = 0; i < order.size(); ++i)
      (i / per_bin == static_cast<size_t>(k) ? f.test : f.train).push_back(order[i]);
    folds.push_back(std::move(f));
  }
  return folds;
}

}  // namespace rphoc
