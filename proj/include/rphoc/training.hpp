#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rphoc/dataset.hpp"
#include "rphoc/model.hpp"
#include "rphoc/phoc.hpp"

namespace rphoc {

struct TrainConfig {
  double lr0 = 1e-4;
  long lr_step = 1000;
  double lr_gamma = 0.9;
  double momentum = 0.0;
  double weight_decay = 0.0;
  // Rescales the whole gradient to this L2 norm when larger (0 = off).
  double clip_norm = 0.0;
  long iterations = 30000;
  int batch_rois = 128;
  double positive_fraction = 0.6;
  double iou_pos = 0.5;
  double iou_bg = 0.2;
  int tile_w = 600;
  int tile_h = 1000;
  int tile_overlap = 100;
  // Ground-truth boxes join the candidate pool as IoU-1 positives.
  bool include_gt_boxes = true;
  // First iterations draw positives only.
  long warmup_iterations = 0;
  std::uint64_t seed = 1;

  void validate() const;
};

double lr_schedule(long iteration, const TrainConfig& cfg);

struct RoiSpec {
  BBox bbox;  // page coordinates
  int tile_id = -1;
};

struct Tile {
  BBox region;  // in page coordinates; offset = (region.x, region.y)
};

// Tiles of tile_w x tile_h with stride (tile - overlap); the last tile in each
// direction is clamped to the page edge. Pages smaller than a tile yield one
// tile covering the page.
std::vector<Tile> tile_layout(int page_width, int page_height, const TrainConfig& cfg);

struct TiledPage {
  Tile tile;
  GrayImage image;
};
std::vector<TiledPage> tile_page(const GrayImage& page, const TrainConfig& cfg);

// Each box goes to the containing tile whose center is nearest its own center;
// -1 when no tile contains it.
std::vector<int> assign_to_tiles(std::span<const BBox> boxes, std::span<const Tile> tiles);

struct LabeledRoi {
  BBox bbox;        // tile coordinates
  double max_iou = 0.0;
  int gt_index = -1;  // word with the largest IoU
};

struct Minibatch {
  std::vector<BBox> rois;
  std::vector<int> gt_index;  // -1 for background
};

// Positives (IoU > iou_pos) fill at least ceil(positive_fraction * batch_rois)
// slots, background (IoU < iou_bg) the rest. Returns nullopt when the positive
// pool is empty (the caller should move to another tile).
std::optional<Minibatch> sample_minibatch(std::span<const LabeledRoi> pool, const TrainConfig& cfg,
                                          std::mt19937_64& rng);

int positive_quota(const TrainConfig& cfg);

struct TrainingPage {
  const Page* page = nullptr;
  std::vector<BBox> candidates;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_trace;  // batch loss (summed over ROIs) per iteration
  int tiles_used = 0;
  int dropped_rois = 0;
};

using TrainProgress = std::function<void(long iteration, double loss, double lr)>;

// SGD over tiles: pick a tile, sample a minibatch, forward, sum the per-ROI
// losses, backward, step. Deterministic given cfg.seed. Starts from `init`
// (fresh or resumed parameters).
TrainResult train(std::span<const TrainingPage> pages, const PhocConfig& phoc,
                  const ModelParams& init, const TrainConfig& cfg,
                  const TrainProgress& progress = {});

// Mean of intensity / 255 over the given pages.
double dataset_mean(std::span<const TrainingPage> pages);

}  // namespace rphoc
