#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rphoc/imaging.hpp"

namespace rphoc {

struct CandidateRegion {
  BBox bbox;
  int line_id = 0;
  int first_cc = 0;  // index into the line's sorted member list
  int last_cc = 0;
  std::optional<double> score;
};

struct FilterFeatures {
  std::vector<double> column_densities;
  std::vector<double> row_densities;
  double norm_height = 0.0;
  double norm_width = 0.0;

  std::vector<double> flatten() const;
};

struct FilterConfig {
  int column_segments = 8;  // P
  int row_segments = 4;     // Q
  double avg_height = 1.0;
  double avg_width = 1.0;
};

struct LinearFilter {
  std::vector<double> weights;
  double bias = 0.0;
  int column_segments = 8;
  int row_segments = 4;
  double avg_height = 1.0;
  double avg_width = 1.0;

  FilterConfig feature_config() const {
    return {column_segments, row_segments, avg_height, avg_width};
  }
  double score(const FilterFeatures& f) const;

  std::string to_json() const;
  static LinearFilter from_json(const std::string& text);
};

struct FilterTrainConfig {
  double reg = 1e-4;
  int epochs = 30;
  double learning_rate = 0.05;
  int batch_size = 32;  // 0 = full batch
  bool balanced = true;  // reweight classes to equal total mass
  std::uint64_t seed = 1;
};

struct LabeledFeatures {
  FilterFeatures features;
  int label = 1;  // +1 word, -1 non-word
};

// Ascending by bbox.x, then bbox.y, then id. Returns component ids.
std::vector<int> sort_line_members(const LineBand& band,
                                   std::span<const ConnectedComponent> ccs);

std::vector<CandidateRegion> enumerate_candidates(std::span<const LineBand> bands,
                                                  std::span<const ConnectedComponent> ccs,
                                                  int max_run = 8);

double iou(const BBox& a, const BBox& b);

// Summed-area table over a binary page; makes candidate features O(P + Q).
class InkIntegral {
 public:
  explicit InkIntegral(const BinaryImage& bin);
  long long count(int x0, int y0, int x1, int y1) const;
  int width() const { return width_; }
  int height() const { return height_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<long long> sums_;
};

FilterFeatures candidate_features(const BBox& region, const InkIntegral& ink,
                                  const FilterConfig& cfg);
FilterFeatures candidate_features(const BBox& region, const BinaryImage& bin,
                                  const FilterConfig& cfg);

// +1 when max IoU >= 0.5, -1 when < 0.2, 0 (skip) otherwise.
int filter_label(double max_iou);

LinearFilter train_filter(std::span<const LabeledFeatures> samples, const FilterConfig& feature_cfg,
                          const FilterTrainConfig& cfg = {});

// Mean hinge loss (no regulariser) of `model` over `samples`.
double hinge_loss(const LinearFilter& model, std::span<const LabeledFeatures> samples);

std::vector<CandidateRegion> filter_candidates(std::span<const CandidateRegion> cands,
                                               const LinearFilter& model, const InkIntegral& ink,
                                               double threshold = 0.0);

}  // namespace rphoc
