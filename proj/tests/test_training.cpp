#include <doctest.h>

#include <random>
#include <set>

#include "rphoc/error.hpp"
#include "rphoc/proposals.hpp"
#include "rphoc/synth.hpp"
#include "rphoc/training.hpp"

using namespace rphoc;

TEST_CASE("lr schedule examples") {
  TrainConfig cfg;
  CHECK(lr_schedule(0, cfg) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_schedule(999, cfg) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_schedule(1000, cfg) == doctest::Approx(9e-5).epsilon(1e-12));
  CHECK(lr_schedule(2000, cfg) == doctest::Approx(8.1e-5).epsilon(1e-12));
}

TEST_CASE("tile layout examples") {
  TrainConfig cfg;
  auto t = tile_layout(600, 1000, cfg);
  REQUIRE(t.size() == 1);
  CHECK(t[0].region == BBox{0, 0, 600, 1000});

  t = tile_layout(1100, 1000, cfg);
  REQUIRE(t.size() == 2);
  CHECK(t[0].region.x == 0);
  CHECK(t[1].region.x == 500);

  t = tile_layout(300, 200, cfg);
  REQUIRE(t.size() == 1);
  CHECK(t[0].region == BBox{0, 0, 300, 200});

  t = tile_layout(1250, 2100, cfg);
  std::set<int> xs, ys;
  for (const auto& tile : t) {
    xs.insert(tile.region.x);
    ys.insert(tile.region.y);
    CHECK(tile.region.right() <= 1250);
    CHECK(tile.region.bottom() <= 2100);
  }
  CHECK(xs == std::set<int>{0, 500, 650});
  CHECK(ys == std::set<int>{0, 900, 1100});
}

TEST_CASE("tile assignment is unique and nearest-center") {
  TrainConfig cfg;
  const auto tiles = tile_layout(1100, 1000, cfg);
  const std::vector<BBox> boxes = {{520, 10, 40, 20}, {560, 10, 40, 20}, {10, 10, 40, 20}, {510, 0, 80, 20}};
  const auto owner = assign_to_tiles(boxes, tiles);
  CHECK(owner[0] == 0);  // center 540, tile centers 300 and 800
  CHECK(owner[1] == 1);
  CHECK(owner[2] == 0);
  CHECK(owner[3] == 0);  // equidistant, first tile wins
  const std::vector<BBox> wide = {{0, 0, 1100, 10}};
  CHECK(assign_to_tiles(wide, tiles)[0] == -1);
}

TEST_CASE("tile_page crops the layout") {
  GrayImage page(700, 120);
  page.at(650, 5) = 3;
  TrainConfig cfg;
  cfg.tile_w = 400;
  cfg.tile_h = 100;
  cfg.tile_overlap = 50;
  const auto tiles = tile_page(page, cfg);
  REQUIRE(tiles.size() == 4);
  for (const auto& t : tiles) {
    CHECK(t.image.width() == t.tile.region.w);
    CHECK(t.image.height() == t.tile.region.h);
  }
  CHECK(tiles[1].image.at(650 - tiles[1].tile.region.x, 5) == 3);
}

namespace {

std::vector<LabeledRoi> pool_of(int positives, int background, int middle = 0) {
  std::vector<LabeledRoi> pool;
  for (int i = 0; i < positives; ++i) pool.push_back({{i, 0, 5, 5}, 0.8, i % 3});
  for (int i = 0; i < background; ++i) pool.push_back({{i, 10, 5, 5}, 0.05, 1});
  for (int i = 0; i < middle; ++i) pool.push_back({{i, 20, 5, 5}, 0.3, 2});
  return pool;
}

int count_positive(const Minibatch& b) {
  int n = 0;
  for (int g : b.gt_index) n += g >= 0;
  return n;
}

}  // namespace

TEST_CASE("minibatch composition") {
  TrainConfig cfg;
  CHECK(positive_quota(cfg) == 77);
  std::mt19937_64 rng(1);

  auto b = sample_minibatch(pool_of(200, 200), cfg, rng);
  REQUIRE(b);
  CHECK(b->rois.size() == 128);
  CHECK(count_positive(*b) == 77);
  std::set<std::pair<int, int>> distinct;
  for (const auto& r : b->rois) distinct.insert({r.x, r.y});
  CHECK(distinct.size() == 128);

  b = sample_minibatch(pool_of(10, 300, 50), cfg, rng);
  REQUIRE(b);
  CHECK(count_positive(*b) >= 77);
  for (const auto& r : b->rois) CHECK(r.y != 20);

  CHECK_FALSE(sample_minibatch(pool_of(0, 0, 40), cfg, rng).has_value());
  CHECK_FALSE(sample_minibatch(pool_of(0, 100, 40), cfg, rng).has_value());
}

namespace {

Architecture small_arch() {
  Architecture a;
  a.trunk = {{TrunkLayer::Kind::Conv, 4, 3}, {TrunkLayer::Kind::Relu, 0, 3}, {TrunkLayer::Kind::Pool, 0, 3}};
  a.roi_grid_h = 1;
  a.roi_grid_w = 4;
  a.head_hidden = {16};
  a.output_dim = 604;
  return a;
}

struct SmallRun {
  Dataset data;
  std::vector<TrainingPage> pages;
};

SmallRun small_corpus() {
  SmallRun run;
  SynthSpec spec;
  spec.pages = 1;
  spec.lines_per_page = 2;
  spec.words_per_line = 3;
  run.data = render_synthetic(spec);
  for (const auto& p : run.data.pages) run.pages.push_back({&p, {}});
  return run;
}

TrainConfig small_cfg() {
  TrainConfig cfg;
  cfg.iterations = 6;
  cfg.batch_rois = 8;
  cfg.lr0 = 0.01;
  cfg.tile_w = 120;
  cfg.tile_h = 60;
  cfg.tile_overlap = 30;
  cfg.seed = 4;
  return cfg;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched") {
  const auto run = small_corpus();
  const auto init = init_params(small_arch(), 3, false);
  auto cfg = small_cfg();
  cfg.lr0 = 0.0;
  const auto res = train(run.pages, PhocConfig{}, init, cfg);
  REQUIRE(res.params.tensors.size() == init.tensors.size());
  for (size_t i = 0; i < init.tensors.size(); ++i) CHECK(res.params.tensors[i].values == init.tensors[i].values);
  CHECK(res.loss_trace.size() == 6);
}

TEST_CASE("seeded training is reproducible") {
  const auto run = small_corpus();
  const auto init = init_params(small_arch(), 3, false);
  const auto a = train(run.pages, PhocConfig{}, init, small_cfg());
  const auto b = train(run.pages, PhocConfig{}, init, small_cfg());
  CHECK(a.loss_trace == b.loss_trace);
  for (size_t i = 0; i < a.params.tensors.size(); ++i) CHECK(a.params.tensors[i].values == b.params.tensors[i].values);
  CHECK(a.params.iteration == 6);
  bool moved = false;
  for (size_t i = 0; i < init.tensors.size(); ++i) moved |= a.params.tensors[i].values != init.tensors[i].values;
  CHECK(moved);
}

TEST_CASE("train rejects a mismatched model") {
  const auto run = small_corpus();
  auto arch = small_arch();
  arch.output_dim = 100;
  CHECK_THROWS_AS(train(run.pages, PhocConfig{}, init_params(arch, 1), small_cfg()), Incompatible);
  auto bad = small_cfg();
  bad.tile_overlap = 200;
  CHECK_THROWS_AS(train(run.pages, PhocConfig{}, init_params(small_arch(), 1), bad), InvalidInput);
}

TEST_CASE("warmup changes the sampled batches only while it lasts") {
  const auto run = small_corpus();
  auto pages = run.pages;
  for (auto& tp : pages)
    for (const auto& w : tp.page->words) tp.candidates.push_back({w.bbox.x, w.bbox.y, 2, 2});
  const auto init = init_params(small_arch(), 3, false);
  auto cfg = small_cfg();
  const auto plain = train(pages, PhocConfig{}, init, cfg);
  cfg.warmup_iterations = 6;
  const auto warm = train(pages, PhocConfig{}, init, cfg);
  CHECK(warm.loss_trace != plain.loss_trace);
  cfg.warmup_iterations = 0;
  CHECK(train(pages, PhocConfig{}, init, cfg).loss_trace == plain.loss_trace);
  cfg.warmup_iterations = -1;
  CHECK_THROWS_AS(train(pages, PhocConfig{}, init, cfg), InvalidInput);
}
