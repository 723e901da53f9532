#include "rphoc/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "rphoc/error.hpp"
#include "rphoc/proposals.hpp"

namespace rphoc {

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0)) throw InvalidInput("train: lr must be >= 0");
  if (lr_step < 1) throw InvalidInput("train: lr step must be >= 1");
  if (!(lr_gamma > 0.0)) throw InvalidInput("train: lr gamma must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("train: momentum must lie in [0, 1)");
  if (iterations < 0) throw InvalidInput("train: iterations must be >= 0");
  if (warmup_iterations < 0) throw InvalidInput("train: warmup iterations must be >= 0");
  if (!(clip_norm >= 0.0)) throw InvalidInput("train: clip norm must be >= 0");
  if (batch_rois < 1) throw InvalidInput("train: batch must be >= 1");
  if (!(positive_fraction > 0.0 && positive_fraction <= 1.0))
    throw InvalidInput("train: positive fraction must lie in (0, 1]");
  if (!(iou_bg < iou_pos)) throw InvalidInput("train: background IoU must be below positive IoU");
  if (tile_w < 1 || tile_h < 1 || tile_overlap < 0 || tile_overlap >= std::min(tile_w, tile_h))
    throw InvalidInput("train: tile overlap must be smaller than both tile dimensions");
}

double lr_schedule(long iteration, const TrainConfig& cfg) {
  if (iteration < 0) throw InvalidInput("lr_schedule: negative iteration");
  return cfg.lr0 * std::pow(cfg.lr_gamma, static_cast<double>(iteration / cfg.lr_step));
}

namespace {

std::vector<int> axis_positions(int size, int tile, int overlap) {
  if (size <= tile) return {0};
  std::vector<int> pos;
  const int stride = tile - overlap;
  int p = 0;
  for (; p + tile < size; p += stride) pos.push_back(p);
  if (pos.empty() || pos.back() != size - tile) pos.push_back(size - tile);
  return pos;
}

}  // namespace

std::vector<Tile> tile_layout(int page_width, int page_height, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<Tile> tiles;
  const int tw = std::min(cfg.tile_w, page_width), th = std::min(cfg.tile_h, page_height);
  for (int y : axis_positions(page_height, cfg.tile_h, cfg.tile_overlap))
    for (int x : axis_positions(page_width, cfg.tile_w, cfg.tile_overlap))
      tiles.push_back({{x, y, tw, th}});
  return tiles;
}

std::vector<TiledPage> tile_page(const GrayImage& page, const TrainConfig& cfg) {
  std::vector<TiledPage> out;
  for (const auto& t : tile_layout(page.width(), page.height(), cfg))
    out.push_back({t, page.crop(t.region)});
  return out;
}

std::vector<int> assign_to_tiles(std::span<const BBox> boxes, std::span<const Tile> tiles) {
  std::vector<int> out(boxes.size(), -1);
  for (size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    // Doubled coordinates keep centers integral.
    const long long bx = 2LL * b.x + b.w, by = 2LL * b.y + b.h;
    long long best = std::numeric_limits<long long>::max();
    for (size_t t = 0; t < tiles.size(); ++t) {
      const auto& r = tiles[t].region;
      if (!r.contains(b)) continue;
      const long long dx = 2LL * r.x + r.w - bx, dy = 2LL * r.y + r.h - by;
      const long long d = dx * dx + dy * dy;
      if (d < best) best = d, out[i] = static_cast<int>(t);
    }
  }
  return out;
}

int positive_quota(const TrainConfig& cfg) {
  return static_cast<int>(std::ceil(cfg.positive_fraction * cfg.batch_rois - 1e-9));
}

namespace {

// `count` draws from `pool`: a shuffled pass without replacement first, then
// uniform draws with replacement once the pool is exhausted.
void draw(const std::vector<size_t>& pool, int count, std::mt19937_64& rng,
          std::vector<size_t>& out) {
  if (count <= 0 || pool.empty()) return;
  std::vector<size_t> shuffled = pool;
  const size_t take = std::min<size_t>(shuffled.size(), static_cast<size_t>(count));
  for (size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<size_t> pick(i, shuffled.size() - 1);
    std::swap(shuffled[i], shuffled[pick(rng)]);
    out.push_back(shuffled[i]);
  }
  std::uniform_int_distribution<size_t> any(0, pool.size() - 1);
  for (size_t i = take; i < static_cast<size_t>(count); ++i) out.push_back(pool[any(rng)]);
}

}  // namespace

std::optional<Minibatch> sample_minibatch(std::span<const LabeledRoi> pool, const TrainConfig& cfg,
                                          std::mt19937_64& rng) {
  std::vector<size_t> pos, bg;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].max_iou > cfg.iou_pos && pool[i].gt_index >= 0)
      pos.push_back(i);
    else if (pool[i].max_iou < cfg.iou_bg)
      bg.push_back(i);
  }
  if (pos.empty()) return std::nullopt;

  const int n_pos = bg.empty() ? cfg.batch_rois : positive_quota(cfg);
  std::vector<size_t> chosen;
  draw(pos, n_pos, rng, chosen);
  draw(bg, cfg.batch_rois - n_pos, rng, chosen);

  Minibatch batch;
  for (size_t i : chosen) {
    batch.rois.push_back(pool[i].bbox);
    batch.gt_index.push_back(pool[i].max_iou > cfg.iou_pos ? pool[i].gt_index : -1);
  }
  return batch;
}

double dataset_mean(std::span<const TrainingPage> pages) {
  double sum = 0.0;
  double count = 0.0;
  for (const auto& tp : pages) {
    const auto px = tp.page->image.pixels();
    sum += std::accumulate(px.begin(), px.end(), 0.0);
    count += static_cast<double>(px.size());
  }
  return count > 0 ? sum / count / 255.0 : 0.0;
}

namespace {

struct TileData {
  Tensor<float> input;
  std::vector<LabeledRoi> pool;
  const Page* page = nullptr;
};

}  // namespace

TrainResult train(std::span<const TrainingPage> pages, const PhocConfig& phoc,
                  const ModelParams& init, const TrainConfig& cfg, const TrainProgress& progress) {
  cfg.validate();
  const int dim = static_cast<int>(phoc_dimension(phoc));
  if (init.arch.output_dim != dim)
    throw Incompatible("train: model output dimension differs from the PHOC dimension");
  if (!init.phoc_hash.empty() && init.phoc_hash != phoc.hash())
    throw Incompatible("train: model was built for a different PHOC configuration");

  Network<float> net(init);
  TrainResult result;

  std::map<std::pair<const Page*, int>, std::vector<float>> target_cache;
  std::vector<TileData> tiles;
  for (const auto& tp : pages) {
    const Page& page = *tp.page;
    std::vector<BBox> boxes = tp.candidates;
    if (cfg.include_gt_boxes)
      for (const auto& w : page.words) boxes.push_back(w.bbox);
    const auto layout = tile_layout(page.image.width(), page.image.height(), cfg);
    const auto owner = assign_to_tiles(boxes, layout);
    std::vector<TileData> page_tiles(layout.size());
    for (size_t t = 0; t < layout.size(); ++t) page_tiles[t].page = &page;
    for (size_t i = 0; i < boxes.size(); ++i) {
      if (owner[i] < 0) {
        ++result.dropped_rois;
        continue;
      }
      LabeledRoi roi;
      for (size_t g = 0; g < page.words.size(); ++g) {
        if (page.words[g].normalized.empty()) continue;
        const double v = iou(boxes[i], page.words[g].bbox);
        if (v > roi.max_iou) roi.max_iou = v, roi.gt_index = static_cast<int>(g);
      }
      const auto& region = layout[owner[i]].region;
      roi.bbox = {boxes[i].x - region.x, boxes[i].y - region.y, boxes[i].w, boxes[i].h};
      page_tiles[owner[i]].pool.push_back(roi);
    }
    for (size_t t = 0; t < layout.size(); ++t) {
      const bool has_positive =
          std::any_of(page_tiles[t].pool.begin(), page_tiles[t].pool.end(),
                      [&](const LabeledRoi& r) { return r.max_iou > cfg.iou_pos && r.gt_index >= 0; });
      if (!has_positive) continue;
      page_tiles[t].input = net.prepare_input(page.image.crop(layout[t].region));
      tiles.push_back(std::move(page_tiles[t]));
    }
  }
  result.tiles_used = static_cast<int>(tiles.size());
  if (tiles.empty() && cfg.iterations > 0)
    throw DegenerateTraining("train: no tile contains a positive training region");

  auto& values = net.values();
  auto& grads = net.grads();
  std::vector<std::vector<float>> velocity;
  for (const auto& v : values) velocity.emplace_back(v.size(), 0.0f);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<size_t> pick_tile(0, tiles.empty() ? 0 : tiles.size() - 1);
  TrainConfig warm = cfg;
  warm.positive_fraction = 1.0;
  const long start = init.iteration;
  for (long it = start; it < start + cfg.iterations; ++it) {
    const TileData& tile = tiles[pick_tile(rng)];
    const auto batch = sample_minibatch(tile.pool, it < cfg.warmup_iterations ? warm : cfg, rng);
    if (!batch) continue;  // unreachable: tiles were filtered for positives

    Tensor<float> targets({static_cast<int>(batch->rois.size()), dim});
    for (size_t r = 0; r < batch->rois.size(); ++r) {
      const int g = batch->gt_index[r];
      if (g < 0) continue;
      auto& cached = target_cache[{tile.page, g}];
      if (cached.empty()) cached = encode_string(tile.page->words[g].normalized, phoc);
      std::copy(cached.begin(), cached.end(), targets.row(static_cast<int>(r)).begin());
    }

    net.zero_grads();
    const auto loss = net.forward_backward(tile.input, batch->rois, targets);
    const double lr = lr_schedule(it, cfg);
    if (!std::isfinite(loss.loss))
      throw Divergence("train: loss became non-finite at iteration " + std::to_string(it) +
                           " (lr " + std::to_string(lr) + ")",
                       it, lr);
    float scale = 1.0f;
    if (cfg.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads)
        for (float v : g) sq += static_cast<double>(v) * v;
      const double norm = std::sqrt(sq);
      if (norm > cfg.clip_norm) scale = static_cast<float>(cfg.clip_norm / norm);
    }
    const float flr = static_cast<float>(lr);
    const float mu = static_cast<float>(cfg.momentum);
    const float wd = static_cast<float>(cfg.weight_decay);
    for (size_t p = 0; p < values.size(); ++p) {
      auto& w = values[p];
      auto& g = grads[p];
      auto& v = velocity[p];
      for (size_t k = 0; k < w.size(); ++k) {
        v[k] = mu * v[k] + scale * g[k] + wd * w[k];
        w[k] -= flr * v[k];
      }
    }
    result.loss_trace.push_back(loss.loss);
    if (progress) progress(it, loss.loss, lr);
  }

  result.params = net.export_params();
  result.params.phoc_hash = phoc.hash();
  result.params.iteration = start + cfg.iterations;
  return result;
}

}  // namespace rphoc
