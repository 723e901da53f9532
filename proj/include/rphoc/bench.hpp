#pragma once

#include <span>
#include <string>

#include "rphoc/model.hpp"
#include "rphoc/training.hpp"

namespace rphoc {

struct BenchReport {
  std::size_t candidates = 0;
  std::size_t tiles = 0;
  double shared_seconds = 0.0;
  double per_candidate_seconds = 0.0;
  double ratio = 0.0;  // per-candidate / shared

  std::string to_json() const;
};

// Wall clock of (a) one trunk pass per tile shared by every candidate it owns
// against (b) an independent trunk + ROI pool + head pass per candidate crop,
// padded to the trunk's minimum input size. Each path is timed `repeats` times
// and the fastest run is kept. Candidates contained in no tile are skipped.
BenchReport bench_shared_vs_percandidate(const Network<float>& model, const GrayImage& page,
                                         std::span<const BBox> candidates,
                                         const TrainConfig& tiling, int repeats = 3);

// Independent forward for one candidate: crop, pad, trunk, ROI pool over the
// whole crop, head.
PhocVector forward_single_crop(const Network<float>& model, const GrayImage& page, const BBox& box);

}  // namespace rphoc
