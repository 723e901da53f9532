#include <doctest.h>

#include <limits>
#include <random>

#include "oracles.hpp"
#include "rphoc/error.hpp"
#include "rphoc/proposals.hpp"

using namespace rphoc;

namespace {

std::vector<ConnectedComponent> row_of_ccs(const std::vector<std::pair<int, int>>& xy) {
  std::vector<ConnectedComponent> ccs;
  for (size_t i = 0; i < xy.size(); ++i) {
    ConnectedComponent cc;
    cc.id = static_cast<int>(i);
    cc.bbox = {xy[i].first, xy[i].second, 4, 6};
    cc.core_box = cc.bbox;
    cc.pixel_count = 24;
    ccs.push_back(cc);
  }
  return ccs;
}

std::vector<int> sorted_x(const LineBand& band, const std::vector<ConnectedComponent>& ccs) {
  std::vector<int> xs;
  for (int id : sort_line_members(band, ccs)) xs.push_back(ccs[id].bbox.x);
  return xs;
}

}  // namespace

TEST_CASE("line member order examples") {
  auto ccs = row_of_ccs({{30, 0}, {10, 0}, {20, 0}});
  CHECK(sorted_x({0, 0, 9, {0}}, ccs) == std::vector<int>{30});
  CHECK(sorted_x({0, 0, 9, {0, 1, 2}}, ccs) == std::vector<int>{10, 20, 30});
  ccs = row_of_ccs({{10, 5}, {10, 2}});
  CHECK(sort_line_members({0, 0, 9, {0, 1}}, ccs) == std::vector<int>{1, 0});
}

TEST_CASE("candidate count matches the run formula") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 40; ++t) {
    const int m = std::uniform_int_distribution<int>(1, 14)(rng);
    const int max_run = std::uniform_int_distribution<int>(1, 9)(rng);
    std::vector<std::pair<int, int>> xy;
    for (int i = 0; i < m; ++i) xy.push_back({i * 10, 0});
    const auto ccs = row_of_ccs(xy);
    LineBand band{0, 0, 9, {}};
    for (int i = 0; i < m; ++i) band.members.push_back(i);
    const auto cands = enumerate_candidates(std::vector<LineBand>{band}, ccs, max_run);
    long expected = 0;
    for (int r = 1; r <= std::min(m, max_run); ++r) expected += m - r + 1;
    CHECK(static_cast<long>(cands.size()) == expected);
    for (const auto& c : cands) {
      CHECK(c.first_cc <= c.last_cc);
      BBox u = ccs[c.first_cc].bbox;
      for (int i = c.first_cc; i <= c.last_cc; ++i) u = bbox_union(u, ccs[i].bbox);
      CHECK(c.bbox == u);
    }
  }
}

TEST_CASE("identical boxes from two bands are kept once") {
  const auto ccs = row_of_ccs({{0, 0}, {10, 0}});
  const std::vector<LineBand> bands = {{0, 0, 5, {0, 1}}, {1, 3, 9, {0, 1}}};
  CHECK(enumerate_candidates(bands, ccs, 8).size() == 3);
}

TEST_CASE("iou against pixel enumeration") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> pos(0, 12), ext(1, 10);
  for (int t = 0; t < 400; ++t) {
    const BBox a{pos(rng), pos(rng), ext(rng), ext(rng)}, b{pos(rng), pos(rng), ext(rng), ext(rng)};
    const double v = iou(a, b);
    CHECK(v == doctest::Approx(oracle::iou(a, b)).epsilon(1e-12));
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK((v == 0.0) == (oracle::iou_num(a, b) == 0));
    CHECK((v == 1.0) == (a == b));
  }
}

TEST_CASE("candidate feature examples") {
  FilterConfig cfg;
  BinaryImage full(20, 10), empty(20, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) full.set(x, y, true);
  const auto f1 = candidate_features({1, 1, 17, 6}, full, cfg);
  for (double d : f1.column_densities) CHECK(d == 1.0);
  for (double d : f1.row_densities) CHECK(d == 1.0);
  const auto f0 = candidate_features({1, 1, 17, 6}, empty, cfg);
  for (double d : f0.column_densities) CHECK(d == 0.0);
  for (double d : f0.row_densities) CHECK(d == 0.0);

  BinaryImage half(4, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) half.set(x, y, true);
  FilterConfig two{2, 2, 2.0, 8.0};
  const auto f = candidate_features({0, 0, 4, 2}, half, two);
  CHECK(f.column_densities == std::vector<double>{1.0, 0.0});
  CHECK(f.row_densities == std::vector<double>{0.5, 0.5});
  CHECK(f.norm_height == 1.0);
  CHECK(f.norm_width == 0.5);
  CHECK(f.flatten().size() == 6);
  CHECK_THROWS_AS(candidate_features({3, 0, 4, 2}, half, two), InvalidInput);
}

TEST_CASE("feature length and bounds on random regions") {
  std::mt19937_64 rng(12);
  BinaryImage bin(40, 30);
  std::bernoulli_distribution ink(0.3);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) bin.set(x, y, ink(rng));
  const InkIntegral integral(bin);
  for (int t = 0; t < 200; ++t) {
    FilterConfig cfg{std::uniform_int_distribution<int>(1, 12)(rng), std::uniform_int_distribution<int>(1, 6)(rng),
                     10.0, 20.0};
    std::uniform_int_distribution<int> w(1, 40), h(1, 30);
    BBox b{0, 0, w(rng), h(rng)};
    b.x = std::uniform_int_distribution<int>(0, 40 - b.w)(rng);
    b.y = std::uniform_int_distribution<int>(0, 30 - b.h)(rng);
    const auto f = candidate_features(b, integral, cfg);
    const auto v = f.flatten();
    CHECK(v.size() == static_cast<size_t>(cfg.column_segments + cfg.row_segments + 2));
    for (int i = 0; i < cfg.column_segments + cfg.row_segments; ++i) {
      CHECK(v[i] >= 0.0);
      CHECK(v[i] <= 1.0);
    }
  }
}

TEST_CASE("filter labels follow the IoU bands") {
  CHECK(filter_label(0.5) == 1);
  CHECK(filter_label(0.9) == 1);
  CHECK(filter_label(0.19) == -1);
  CHECK(filter_label(0.2) == 0);
  CHECK(filter_label(0.49) == 0);
}

namespace {

LabeledFeatures sample(double a, double b, int label) {
  LabeledFeatures s;
  s.features.column_densities = {a};
  s.features.row_densities = {b};
  s.label = label;
  return s;
}

std::vector<LabeledFeatures> toy_set() {
  std::vector<LabeledFeatures> s;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 60; ++i) {
    const double a = u(rng), b = u(rng);
    if (std::abs(a - b) < 0.4) continue;
    s.push_back(sample(a, b, a > b ? 1 : -1));
  }
  return s;
}

}  // namespace

TEST_CASE("filter training on a separable toy set") {
  const auto s = toy_set();
  FilterConfig fcfg{1, 1, 1.0, 1.0};
  FilterTrainConfig cfg;
  cfg.epochs = 5000;
  cfg.learning_rate = 0.5;
  cfg.reg = 1e-6;
  cfg.batch_size = 0;
  const auto model = train_filter(s, fcfg, cfg);
  CHECK(hinge_loss(model, s) < 0.01);
}

TEST_CASE("duplicated samples give the same full-batch model") {
  const auto s = toy_set();
  auto twice = s;
  twice.insert(twice.end(), s.begin(), s.end());
  FilterConfig fcfg{1, 1, 1.0, 1.0};
  FilterTrainConfig cfg;
  cfg.batch_size = 0;
  const auto a = train_filter(s, fcfg, cfg), b = train_filter(twice, fcfg, cfg);
  for (size_t i = 0; i < a.weights.size(); ++i) CHECK(a.weights[i] == doctest::Approx(b.weights[i]).epsilon(1e-12));
  CHECK(a.bias == doctest::Approx(b.bias).epsilon(1e-12));
}

TEST_CASE("flipping every label negates the model") {
  const auto s = toy_set();
  auto flipped = s;
  for (auto& x : flipped) x.label = -x.label;
  FilterConfig fcfg{1, 1, 1.0, 1.0};
  for (int batch : {0, 8}) {
    FilterTrainConfig cfg;
    cfg.batch_size = batch;
    const auto a = train_filter(s, fcfg, cfg), b = train_filter(flipped, fcfg, cfg);
    for (size_t i = 0; i < a.weights.size(); ++i) CHECK(a.weights[i] == -b.weights[i]);
    CHECK(a.bias == -b.bias);
  }
}

TEST_CASE("single class training is rejected") {
  std::vector<LabeledFeatures> s = {sample(0.1, 0.2, 1), sample(0.3, 0.1, 1)};
  CHECK_THROWS_AS(train_filter(s, {1, 1, 1.0, 1.0}), DegenerateTraining);
}

TEST_CASE("filter_candidates examples") {
  BinaryImage bin(20, 4);
  const InkIntegral ink(bin);
  std::vector<CandidateRegion> cands(3);
  cands[0].bbox = {0, 0, 8, 4};
  cands[1].bbox = {0, 0, 2, 4};
  cands[2].bbox = {0, 0, 5, 4};
  LinearFilter model;
  model.column_segments = 1;
  model.row_segments = 1;
  model.avg_width = 1.0;
  model.avg_height = 1.0;
  model.weights = {0, 0, 0, 0.5};  // score = 0.5 * width - 2
  model.bias = -2.0;
  const auto kept = filter_candidates(cands, model, ink, 0.0);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].bbox == cands[0].bbox);
  CHECK(*kept[0].score == doctest::Approx(2.0));
  CHECK(kept[1].bbox == cands[2].bbox);
  CHECK(*kept[1].score == doctest::Approx(0.5));

  CHECK(filter_candidates(cands, model, ink, -std::numeric_limits<double>::infinity()).size() == 3);
  LinearFilter reject = model;
  reject.weights = {0, 0, 0, 0};
  reject.bias = -1.0;
  CHECK(filter_candidates(cands, reject, ink, 0.0).empty());
}

TEST_CASE("linear filter json round trip") {
  LinearFilter m;
  m.weights = {0.25, -1.5, 3.0, 0.0, 1e-3, 2.0, -0.5, 1.0, 0, 0, 0, 0, 0, 0};
  m.bias = 0.125;
  m.avg_height = 31.5;
  const auto back = LinearFilter::from_json(m.to_json());
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.avg_height == m.avg_height);
  CHECK(back.column_segments == 8);
}
