#include "rphoc/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include "rphoc/error.hpp"
#include "rphoc/proposals.hpp"

namespace rphoc {

EmbeddingStore::EmbeddingStore(std::string phoc_hash, std::size_t dim,
                               std::vector<EmbeddingRecord> records)
    : phoc_hash_(std::move(phoc_hash)), dim_(dim), records_(std::move(records)) {
  for (const auto& r : records_)
    if (r.vector.size() != dim_) throw InvalidInput("embedding store: vector dimension mismatch");
}

std::vector<PhocVector> embed_boxes(const Network<float>& model, const GrayImage& page,
                                    std::span<const BBox> boxes, const TrainConfig& tiling,
                                    bool fallback_crop) {
  std::vector<PhocVector> out(boxes.size());
  if (boxes.empty()) return out;
  const auto tiles = tile_layout(page.width(), page.height(), tiling);
  const auto owner = assign_to_tiles(boxes, tiles);

  for (size_t t = 0; t < tiles.size(); ++t) {
    const auto& region = tiles[t].region;
    std::vector<BBox> rois;
    std::vector<size_t> which;
    for (size_t i = 0; i < boxes.size(); ++i) {
      if (owner[i] != static_cast<int>(t)) continue;
      rois.push_back({boxes[i].x - region.x, boxes[i].y - region.y, boxes[i].w, boxes[i].h});
      which.push_back(i);
    }
    if (rois.empty()) continue;
    const auto probs = model.forward(page.crop(region), rois);
    for (size_t r = 0; r < which.size(); ++r) {
      const auto row = probs.row(static_cast<int>(r));
      out[which[r]].assign(row.begin(), row.end());
    }
  }

  if (fallback_crop) {
    for (size_t i = 0; i < boxes.size(); ++i) {
      if (owner[i] >= 0) continue;
      const auto& b = boxes[i];
      if (b.x < 0 || b.y < 0 || b.right() > page.width() || b.bottom() > page.height())
        throw InvalidRoi("region lies outside the page", static_cast<int>(i));
      // Window of at least tile size centred on the box, clipped to the page.
      const int w = std::min(page.width(), std::max(b.w, tiling.tile_w));
      const int h = std::min(page.height(), std::max(b.h, tiling.tile_h));
      const int x = std::clamp(b.x + b.w / 2 - w / 2, 0, page.width() - w);
      const int y = std::clamp(b.y + b.h / 2 - h / 2, 0, page.height() - h);
      const BBox roi{b.x - x, b.y - y, b.w, b.h};
      const auto probs = model.forward(page.crop({x, y, w, h}), std::span<const BBox>(&roi, 1));
      const auto row = probs.row(0);
      out[i].assign(row.begin(), row.end());
    }
  }
  return out;
}

EmbeddingStore embed_pages(const Network<float>& model, std::span<const PageCandidates> pages,
                           const PhocConfig& phoc, const TrainConfig& tiling, EmbedReport* report,
                           bool fallback_crop) {
  if (model.phoc_hash() != phoc.hash())
    throw Incompatible("embed: model PHOC hash " + model.phoc_hash() +
                       " does not match the requested configuration " + phoc.hash());
  if (model.arch().output_dim != static_cast<int>(phoc_dimension(phoc)))
    throw Incompatible("embed: model output dimension differs from the PHOC dimension");
  std::vector<EmbeddingRecord> records;
  EmbedReport rep;
  for (const auto& pc : pages) {
    auto vectors = embed_boxes(model, pc.page->image, pc.boxes, tiling, fallback_crop);
    for (size_t i = 0; i < vectors.size(); ++i) {
      if (vectors[i].empty()) {
        ++rep.dropped;
        continue;
      }
      records.push_back({pc.page->id, pc.boxes[i], std::move(vectors[i])});
    }
  }
  rep.embedded = records.size();
  if (report) *report = rep;
  return EmbeddingStore(phoc.hash(), phoc_dimension(phoc), std::move(records));
}

double cosine_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidInput("cosine_distance: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw UndefinedDistance("cosine_distance: zero vector");
  return std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
}

double euclidean_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidInput("euclidean_distance: dimension mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

RankedList rank_store(std::span<const float> query, const EmbeddingStore& store, Metric metric) {
  if (query.size() != store.dim()) throw InvalidInput("query dimension differs from the store");
  const bool zero_query = std::all_of(query.begin(), query.end(), [](float v) { return v == 0.0f; });
  if (metric == Metric::Cosine && zero_query)
    throw UndefinedDistance("query vector is all zeros");
  RankedList list(store.size());
  for (size_t i = 0; i < store.size(); ++i) {
    list[i].record = i;
    try {
      list[i].distance = metric == Metric::Cosine ? cosine_distance(query, store[i].vector)
                                                  : euclidean_distance(query, store[i].vector);
    } catch (const UndefinedDistance&) {
      list[i].distance = std::numeric_limits<double>::infinity();
    }
  }
  std::sort(list.begin(), list.end(), [&](const RankedEntry& a, const RankedEntry& b) {
    const auto& ra = store[a.record];
    const auto& rb = store[b.record];
    return std::tie(a.distance, ra.page_id, ra.bbox) < std::tie(b.distance, rb.page_id, rb.bbox);
  });
  return list;
}

RankedList query_by_example(const Network<float>& model, const GrayImage& page, const BBox& box,
                            const EmbeddingStore& store, const TrainConfig& tiling, Metric metric) {
  if (model.phoc_hash() != store.phoc_hash())
    throw Incompatible("query: model and store use different PHOC configurations");
  const auto vec = embed_boxes(model, page, std::span<const BBox>(&box, 1), tiling, true);
  return rank_store(vec[0], store, metric);
}

RankedList query_by_string(std::string_view word, const EmbeddingStore& store,
                           const PhocConfig& phoc, Metric metric) {
  if (phoc.hash() != store.phoc_hash())
    throw Incompatible("query: store was built with a different PHOC configuration");
  return rank_store(encode_string(word, phoc), store, metric);
}

RelevanceJudge::RelevanceJudge(std::span<const GroundTruthWord> ground_truth,
                               std::string query_label, double iou_thr)
    : label_(std::move(query_label)), iou_thr_(iou_thr) {
  for (const auto& w : ground_truth)
    if (!label_.empty() && w.normalized == label_) candidates_.push_back(&w);
  matched_.assign(candidates_.size(), false);
}

void RelevanceJudge::exclude(const std::string& page_id, const BBox& box) {
  for (size_t i = 0; i < candidates_.size(); ++i)
    if (!matched_[i] && candidates_[i]->page_id == page_id && candidates_[i]->bbox == box) {
      matched_[i] = true;
      return;
    }
}

std::size_t RelevanceJudge::relevant_total() const {
  return static_cast<std::size_t>(std::count(matched_.begin(), matched_.end(), false));
}

bool RelevanceJudge::judge(const std::string& page_id, const BBox& box) {
  // Match the unclaimed instance with the highest overlap.
  int best = -1;
  double best_iou = -1.0;
  for (size_t i = 0; i < candidates_.size(); ++i) {
    if (matched_[i] || candidates_[i]->page_id != page_id) continue;
    const double v = iou(box, candidates_[i]->bbox);
    if (v >= iou_thr_ && v > best_iou) best = static_cast<int>(i), best_iou = v;
  }
  if (best < 0) return false;
  matched_[best] = true;
  return true;
}

double average_precision(const std::vector<bool>& relevance, std::size_t n_relevant) {
  if (n_relevant == 0) throw InvalidInput("average_precision: no relevant items");
  double sum = 0.0;
  std::size_t hits = 0;
  for (size_t k = 0; k < relevance.size(); ++k) {
    if (!relevance[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(n_relevant);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["map"] = map;
  j["map_long"] = map_long;
  j["query_count"] = queries.size();
  j["long_query_count"] = long_queries;
  j["skipped"] = skipped;
  nlohmann::ordered_json by_len = nlohmann::ordered_json::object();
  for (const auto& [len, value] : map_by_length) by_len[std::to_string(len)] = value;
  j["map_by_length"] = by_len;
  auto qs = nlohmann::ordered_json::array();
  for (const auto& q : queries)
    qs.push_back({{"label", q.label},
                  {"page_id", q.page_id},
                  {"bbox", {q.bbox.x, q.bbox.y, q.bbox.w, q.bbox.h}},
                  {"ap", q.ap},
                  {"relevant", q.relevant}});
  j["queries"] = qs;
  return j.dump(2);
}

namespace {

std::vector<GroundTruthWord> collect_ground_truth(std::span<const Page* const> pages) {
  std::vector<GroundTruthWord> gt;
  for (const Page* p : pages) gt.insert(gt.end(), p->words.begin(), p->words.end());
  return gt;
}

}  // namespace

EvalReport score_rankings(const std::string& mode, std::span<const GroundTruthWord> queries,
                          std::span<const RankedList> lists, std::span<const Page* const> test_pages,
                          const EmbeddingStore& store, const EvalOptions& opts) {
  if (queries.size() != lists.size())
    throw InvalidInput("score_rankings: one ranked list per query is required");
  const auto gt = collect_ground_truth(test_pages);
  EvalReport report;
  report.mode = mode;
  std::map<std::size_t, std::pair<double, std::size_t>> by_length;
  double sum = 0.0, sum_long = 0.0;
  for (size_t q = 0; q < queries.size(); ++q) {
    const auto& query = queries[q];
    RelevanceJudge judge(gt, query.normalized, opts.iou_thr);
    if (opts.exclude_self && mode == "qbe") judge.exclude(query.page_id, query.bbox);
    const std::size_t n_rel = judge.relevant_total();
    if (n_rel == 0) {
      ++report.skipped;
      continue;
    }
    const auto& list = lists[q];
    const size_t depth = opts.max_ranks == 0 ? list.size() : std::min(list.size(), opts.max_ranks);
    std::vector<bool> flags(depth);
    for (size_t k = 0; k < depth; ++k) {
      const auto& rec = store[list[k].record];
      flags[k] = judge.judge(rec.page_id, rec.bbox);
    }
    const double ap = average_precision(flags, n_rel);
    report.queries.push_back({query.normalized, query.page_id, query.bbox, ap, n_rel});
    sum += ap;
    const std::size_t len = query.normalized.size();
    auto& bucket = by_length[len];
    bucket.first += ap;
    ++bucket.second;
    if (len >= 6) {
      sum_long += ap;
      ++report.long_queries;
    }
  }
  if (!report.queries.empty()) report.map = sum / static_cast<double>(report.queries.size());
  if (report.long_queries > 0) report.map_long = sum_long / static_cast<double>(report.long_queries);
  for (const auto& [len, acc] : by_length)
    report.map_by_length[len] = acc.first / static_cast<double>(acc.second);
  return report;
}

EvalReport evaluate_qbe(const Network<float>& model, std::span<const Page* const> test_pages,
                        const EmbeddingStore& store, const TrainConfig& tiling,
                        const EvalOptions& opts, std::vector<RankedList>* ranked_lists) {
  if (model.phoc_hash() != store.phoc_hash())
    throw Incompatible("evaluate: model and store use different PHOC configurations");
  std::vector<GroundTruthWord> queries;
  std::vector<RankedList> lists;
  for (const Page* page : test_pages) {
    std::vector<BBox> boxes;
    std::vector<const GroundTruthWord*> words;
    for (const auto& w : page->words) {
      if (w.normalized.empty()) continue;
      boxes.push_back(w.bbox);
      words.push_back(&w);
    }
    const auto vectors = embed_boxes(model, page->image, boxes, tiling, true);
    for (size_t i = 0; i < words.size(); ++i) {
      queries.push_back(*words[i]);
      lists.push_back(rank_store(vectors[i], store, opts.metric));
    }
  }
  auto report = score_rankings("qbe", queries, lists, test_pages, store, opts);
  if (ranked_lists) *ranked_lists = std::move(lists);
  return report;
}

EvalReport evaluate_qbs(std::span<const Page* const> test_pages, const EmbeddingStore& store,
                        const PhocConfig& phoc, const EvalOptions& opts) {
  std::vector<GroundTruthWord> queries;
  std::set<std::string> seen;
  for (const Page* page : test_pages)
    for (const auto& w : page->words)
      if (!w.normalized.empty() && seen.insert(w.normalized).second) queries.push_back(w);
  std::vector<RankedList> lists;
  for (const auto& q : queries) lists.push_back(query_by_string(q.normalized, store, phoc, opts.metric));
  return score_rankings("qbs", queries, lists, test_pages, store, opts);
}

}  // namespace rphoc
