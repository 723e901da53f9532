#include "rphoc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <json.hpp>
#include <limits>

#include "rphoc/retrieval.hpp"

namespace rphoc {

std::string BenchReport::to_json() const {
  nlohmann::ordered_json j;
  j["candidates"] = candidates;
  j["tiles"] = tiles;
  j["shared_seconds"] = shared_seconds;
  j["per_candidate_seconds"] = per_candidate_seconds;
  j["ratio"] = ratio;
  return j.dump(2);
}

PhocVector forward_single_crop(const Network<float>& model, const GrayImage& page, const BBox& box) {
  const int min_size = model.arch().min_input_size();
  GrayImage crop = page.crop(box);
  if (crop.width() < min_size || crop.height() < min_size) {
    GrayImage padded(std::max(crop.width(), min_size), std::max(crop.height(), min_size), 255);
    for (int y = 0; y < crop.height(); ++y)
      for (int x = 0; x < crop.width(); ++x) padded.at(x, y) = crop.at(x, y);
    crop = std::move(padded);
  }
  const BBox whole{0, 0, box.w, box.h};
  const auto probs = model.forward(crop, std::span<const BBox>(&whole, 1));
  const auto row = probs.row(0);
  return {row.begin(), row.end()};
}

BenchReport bench_shared_vs_percandidate(const Network<float>& model, const GrayImage& page,
                                         std::span<const BBox> candidates,
                                         const TrainConfig& tiling, int repeats) {
  using Clock = std::chrono::steady_clock;
  const auto tiles = tile_layout(page.width(), page.height(), tiling);
  const auto owner = assign_to_tiles(candidates, tiles);
  std::vector<BBox> usable;
  for (size_t i = 0; i < candidates.size(); ++i)
    if (owner[i] >= 0) usable.push_back(candidates[i]);

  BenchReport report;
  report.candidates = usable.size();
  const auto used = assign_to_tiles(usable, tiles);
  std::vector<bool> seen(tiles.size(), false);
  for (int t : used) seen[t] = true;
  report.tiles = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));

  double best_shared = std::numeric_limits<double>::infinity();
  double best_single = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, repeats); ++r) {
    auto t0 = Clock::now();
    const auto shared = embed_boxes(model, page, usable, tiling, false);
    auto t1 = Clock::now();
    best_shared = std::min(best_shared, std::chrono::duration<double>(t1 - t0).count());

    t0 = Clock::now();
    for (const auto& box : usable) {
      const auto v = forward_single_crop(model, page, box);
      (void)v;
    }
    t1 = Clock::now();
    best_single = std::min(best_single, std::chrono::duration<double>(t1 - t0).count());
  }
  report.shared_seconds = best_shared;
  report.per_candidate_seconds = best_single;
  report.ratio = best_shared > 0.0 ? best_single / best_shared : 0.0;
  return report;
}

}  // namespace rphoc
