#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rphoc/dataset.hpp"
#include "rphoc/model.hpp"
#include "rphoc/phoc.hpp"
#include "rphoc/training.hpp"

namespace rphoc {

struct EmbeddingRecord {
  std::string page_id;
  BBox bbox;
  PhocVector vector;
};

// Immutable once built; records keep insertion order.
class EmbeddingStore {
 public:
  EmbeddingStore(std::string phoc_hash, std::size_t dim, std::vector<EmbeddingRecord> records);

  const std::string& phoc_hash() const { return phoc_hash_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }
  std::span<const EmbeddingRecord> records() const { return records_; }

 private:
  std::string phoc_hash_;
  std::size_t dim_;
  std::vector<EmbeddingRecord> records_;
};

// "RPHE", u32 header length, JSON header {phoc_hash, dim, count}, then per
// record: u32-length-prefixed page id, x y w h as int32 LE, dim float32 LE.
void save_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_store(const std::filesystem::path& path);

struct PageCandidates {
  const Page* page = nullptr;
  std::vector<BBox> boxes;
};

struct EmbedReport {
  std::size_t embedded = 0;
  std::size_t dropped = 0;  // contained in no tile
};

// Tiles every page, runs one forward per tile over the ROIs assigned to it and
// records page-coordinate boxes with their attribute vectors. Boxes in no tile
// are dropped unless `fallback_crop` is set (see embed_boxes).
EmbeddingStore embed_pages(const Network<float>& model, std::span<const PageCandidates> pages,
                           const PhocConfig& phoc, const TrainConfig& tiling,
                           EmbedReport* report = nullptr, bool fallback_crop = false);

// Attribute vectors for boxes of one page: one trunk pass per tile over the
// boxes it owns. Boxes contained in no tile are computed on a page crop around
// them when `fallback_crop` is set and left empty otherwise.
std::vector<PhocVector> embed_boxes(const Network<float>& model, const GrayImage& page,
                                    std::span<const BBox> boxes, const TrainConfig& tiling,
                                    bool fallback_crop);

enum class Metric { Cosine, Euclidean };

// 1 - a.b / (|a||b|); throws UndefinedDistance for an all-zero vector.
double cosine_distance(std::span<const float> a, std::span<const float> b);
double euclidean_distance(std::span<const float> a, std::span<const float> b);

struct RankedEntry {
  std::size_t record = 0;
  double distance = 0.0;  // +inf for records with an undefined distance
};

using RankedList = std::vector<RankedEntry>;

// Ascending distance; ties by page id, then bbox (x, y, w, h).
RankedList rank_store(std::span<const float> query, const EmbeddingStore& store,
                      Metric metric = Metric::Cosine);

RankedList query_by_example(const Network<float>& model, const GrayImage& page, const BBox& box,
                            const EmbeddingStore& store, const TrainConfig& tiling,
                            Metric metric = Metric::Cosine);

RankedList query_by_string(std::string_view word, const EmbeddingStore& store,
                           const PhocConfig& phoc, Metric metric = Metric::Cosine);

// Greedy top-down relevance: a retrieved box is relevant when it reaches
// iou_thr with a not-yet-matched ground-truth word carrying the query label.
class RelevanceJudge {
 public:
  RelevanceJudge(std::span<const GroundTruthWord> ground_truth, std::string query_label,
                 double iou_thr = 0.5);
  // Removes one ground-truth instance (the query itself) from the relevant set.
  void exclude(const std::string& page_id, const BBox& box);
  bool judge(const std::string& page_id, const BBox& box);
  std::size_t relevant_total() const;

 private:
  std::vector<const GroundTruthWord*> candidates_;
  std::vector<bool> matched_;
  std::string label_;
  double iou_thr_;
};

// Non-interpolated AP: (1 / n_relevant) * sum_k rel(k) * precision@k.
double average_precision(const std::vector<bool>& relevance, std::size_t n_relevant);

struct QueryResult {
  std::string label;
  std::string page_id;
  BBox bbox;
  double ap = 0.0;
  std::size_t relevant = 0;
};

struct EvalReport {
  std::string mode;  // "qbe" or "qbs"
  std::vector<QueryResult> queries;
  double map = 0.0;
  double map_long = 0.0;  // labels of 6+ characters
  std::size_t long_queries = 0;
  std::size_t skipped = 0;  // no relevant instance
  std::map<std::size_t, double> map_by_length;

  std::string to_json() const;
};

struct EvalOptions {
  double iou_thr = 0.5;
  bool exclude_self = false;
  Metric metric = Metric::Cosine;
  // Only the first `max_ranks` entries are judged (0 = whole list).
  std::size_t max_ranks = 0;
};

// Ground truth of the evaluated pages; queries are every word with a non-empty
// normalized label.
EvalReport evaluate_qbe(const Network<float>& model, std::span<const Page* const> test_pages,
                        const EmbeddingStore& store, const TrainConfig& tiling,
                        const EvalOptions& opts = {},
                        std::vector<RankedList>* ranked_lists = nullptr);

// One query per distinct normalized label of the test pages.
EvalReport evaluate_qbs(std::span<const Page* const> test_pages, const EmbeddingStore& store,
                        const PhocConfig& phoc, const EvalOptions& opts = {});

// Average-precision report from precomputed ranked lists (one per query word).
EvalReport score_rankings(const std::string& mode, std::span<const GroundTruthWord> queries,
                          std::span<const RankedList> lists, std::span<const Page* const> test_pages,
                          const EmbeddingStore& store, const EvalOptions& opts);

}  // namespace rphoc
