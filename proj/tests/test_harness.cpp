#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "rphoc/config.hpp"
#include "rphoc/dataset.hpp"
#include "rphoc/error.hpp"
#include "rphoc/image_io.hpp"
#include "rphoc/imaging.hpp"
#include "rphoc/synth.hpp"

using namespace rphoc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rphoc_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("annotation parsing") {
  PhocConfig phoc;
  const auto words = parse_annotations("10 20 30 40 Company\n\n5 6 7 8   two words here\n", "p", phoc, "p.gt");
  REQUIRE(words.size() == 2);
  CHECK(words[0].bbox == BBox{10, 20, 30, 40});
  CHECK(words[0].transcription == "Company");
  CHECK(words[0].normalized == "company");
  CHECK(words[0].page_id == "p");
  CHECK(words[1].transcription == "two words here");
  CHECK(parse_annotations("", "p", phoc, "p.gt").empty());

  try {
    parse_annotations("1 2 3 4 ok\n1 2 x 4 bad\n", "p", phoc, "p.gt");
    FAIL("expected InvalidInput");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("p.gt:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_annotations("1 2 3 4\n", "p", phoc, "p.gt"), InvalidInput);
  CHECK_THROWS_AS(parse_annotations("1 2 0 4 zero\n", "p", phoc, "p.gt"), InvalidInput);
}

TEST_CASE("dataset loading") {
  const auto dir = scratch("ds");
  save_pgm(GrayImage(50, 40), dir / "a.pgm");
  write_text(dir / "a.gt", "10 20 30 40 Company\n45 0 20 10 edge\n80 80 5 5 gone\n");
  save_pgm(GrayImage(20, 20), dir / "b.pgm");
  write_text(dir / "b.gt", "");

  const auto data = load_dataset(dir);
  REQUIRE(data.pages.size() == 2);
  CHECK(data.page_ids() == std::vector<std::string>{"a", "b"});
  const auto& a = data.page("a");
  REQUIRE(a.words.size() == 2);
  CHECK(a.words[0].bbox == BBox{10, 20, 30, 20});
  CHECK(a.words[1].bbox == BBox{45, 0, 5, 10});
  CHECK(data.warnings.size() == 3);
  CHECK(data.page("b").words.empty());
  CHECK_THROWS_AS(data.page("zz"), InvalidInput);

  write_text(dir / "c.gt", "1 1 2 2 lost\n");
  CHECK_THROWS_AS(load_dataset(dir), InvalidInput);
  fs::remove_all(dir);
}

TEST_CASE("save then load keeps normalized content") {
  SynthSpec spec;
  spec.pages = 3;
  spec.lines_per_page = 2;
  spec.words_per_line = 3;
  const auto data = render_synthetic(spec);
  const auto dir = scratch("rt");
  save_dataset(data, dir);
  const auto back = load_dataset(dir);
  REQUIRE(back.pages.size() == data.pages.size());
  for (size_t i = 0; i < data.pages.size(); ++i) {
    CHECK(back.pages[i].id == data.pages[i].id);
    CHECK(std::equal(back.pages[i].image.pixels().begin(), back.pages[i].image.pixels().end(),
                     data.pages[i].image.pixels().begin(), data.pages[i].image.pixels().end()));
    REQUIRE(back.pages[i].words.size() == data.pages[i].words.size());
    for (size_t w = 0; w < data.pages[i].words.size(); ++w) {
      CHECK(back.pages[i].words[w].bbox == data.pages[i].words[w].bbox);
      CHECK(back.pages[i].words[w].normalized == data.pages[i].words[w].normalized);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("folds") {
  std::vector<std::string> ids;
  for (int i = 1; i <= 20; ++i) ids.push_back("p" + std::to_string(i));
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto folds = make_folds(ids, seed);
    REQUIRE(folds.size() == 4);
    std::multiset<std::string> tested;
    for (const auto& f : folds) {
      CHECK(f.train.size() == 15);
      CHECK(f.test.size() == 5);
      std::set<std::string> all(f.train.begin(), f.train.end());
      for (const auto& t : f.test) CHECK(all.insert(t).second);
      CHECK(all.size() == 20);
      tested.insert(f.test.begin(), f.test.end());
    }
    CHECK(tested == std::multiset<std::string>(ids.begin(), ids.end()));
    const auto again = make_folds(ids, seed);
    for (int k = 0; k < 4; ++k) CHECK(again[k].test == folds[k].test);
  }
  CHECK(make_folds(ids, 1)[0].test != make_folds(ids, 2)[0].test);
  ids.pop_back();
  try {
    make_folds(ids, 1);
    FAIL("expected InvalidInput");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("--bins") != std::string::npos);
  }
  CHECK(make_folds(ids, 1, 19).size() == 19);
}

TEST_CASE("single synthetic word is tightly boxed") {
  SynthSpec spec;
  spec.pages = 1;
  spec.lines_per_page = 1;
  spec.words_per_line = 1;
  spec.noise = 0;
  const auto data = render_synthetic(spec);
  REQUIRE(data.pages.size() == 1);
  REQUIRE(data.pages[0].words.size() == 1);
  const auto& img = data.pages[0].image;
  const auto b = data.pages[0].words[0].bbox;
  int x0 = img.width(), y0 = img.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (img.at(x, y) < 128) x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
  CHECK(b == BBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1});
}

TEST_CASE("noiseless synthetic glyphs reassemble the ground truth") {
  SynthSpec spec;
  spec.pages = 2;
  spec.noise = 0;
  spec.jitter = 0;
  const auto data = render_synthetic(spec);
  for (const auto& page : data.pages) {
    const auto ccs = connected_components(binarize(page.image)).components;
    for (const auto& w : page.words) {
      std::optional<BBox> u;
      int glyphs = 0;
      for (const auto& cc : ccs)
        if (w.bbox.contains(cc.bbox)) {
          u = u ? bbox_union(*u, cc.bbox) : cc.bbox;
          ++glyphs;
        }
      REQUIRE(u);
      CHECK(*u == w.bbox);
      CHECK(glyphs == static_cast<int>(w.normalized.size()));
    }
  }
}

TEST_CASE("synthetic ground truth is airtight and disjoint") {
  SynthSpec spec;
  spec.pages = 3;
  const auto data = render_synthetic(spec);
  for (const auto& page : data.pages) {
    const auto bin = binarize(page.image);
    const auto ccs = connected_components(bin).components;
    for (const auto& cc : ccs) {
      int owners = 0;
      for (const auto& w : page.words) owners += w.bbox.contains(cc.bbox);
      CHECK(owners == 1);
    }
    for (size_t i = 0; i < page.words.size(); ++i)
      for (size_t j = i + 1; j < page.words.size(); ++j) {
        const auto& a = page.words[i].bbox;
        const auto& b = page.words[j].bbox;
        const bool overlap = a.x < b.right() && b.x < a.right() && a.y < b.bottom() && b.y < a.bottom();
        CHECK_FALSE(overlap);
      }
  }
}

TEST_CASE("synthetic rendering is deterministic") {
  SynthSpec spec;
  spec.pages = 2;
  const auto a = render_synthetic(spec), b = render_synthetic(spec);
  for (size_t i = 0; i < a.pages.size(); ++i) {
    CHECK(std::equal(a.pages[i].image.pixels().begin(), a.pages[i].image.pixels().end(),
                     b.pages[i].image.pixels().begin(), b.pages[i].image.pixels().end()));
  }
  spec.seed = 8;
  const auto c = render_synthetic(spec);
  CHECK_FALSE(std::equal(a.pages[0].image.pixels().begin(), a.pages[0].image.pixels().end(),
                         c.pages[0].image.pixels().begin(), c.pages[0].image.pixels().end()));
  spec.lexicon = {"ok", "bad!"};
  CHECK_THROWS_AS(render_synthetic(spec), InvalidInput);
}

TEST_CASE("config parsing") {
  const auto toml = parse_config(R"(
seed = 5
fold_bins = 4
[train]
lr = 0.01
iterations = 300
[retrieval]
metric = "euclidean"
[phoc]
unigram_levels = [2, 3]
)",
                                 true);
  CHECK(toml.seed == 5);
  CHECK(toml.train.lr0 == 0.01);
  CHECK(toml.train.iterations == 300);
  CHECK(toml.retrieval.eval.metric == Metric::Euclidean);
  CHECK(toml.arch.output_dim == static_cast<int>(phoc_dimension(toml.phoc)));

  const auto json = parse_config(R"({"seed": 5, "train": {"lr": 0.01, "iterations": 300}})", false);
  CHECK(json.train.lr0 == toml.train.lr0);
  CHECK(json.seed == 5);

  CHECK_THROWS_AS(parse_config("[train]\nlearning_rat = 0.1\n", true), InvalidInput);
  CHECK_THROWS_AS(parse_config("colour = 1\n", true), InvalidInput);
  CHECK_THROWS_AS(parse_config("[train\n", true), InvalidInput);
  CHECK_THROWS_AS(parse_config("[train]\nlr = -1.0\n", true), InvalidInput);

  const auto back = parse_config(toml.to_json(), false);
  CHECK(back.to_json() == toml.to_json());
}
