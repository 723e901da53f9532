#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rphoc/config.hpp"
#include "rphoc/dataset.hpp"

namespace rphoc {

struct PageProposals {
  PageLayout layout;
  std::vector<CandidateRegion> candidates;
};

PageProposals propose_page(const GrayImage& image, const PipelineConfig& cfg);

// Filter features are normalised by the mean line-band height and the mean
// candidate width over the training pages.
LinearFilter train_proposal_filter(std::span<const Page* const> pages, const PipelineConfig& cfg);

std::vector<CandidateRegion> filtered_proposals(const GrayImage& image, const LinearFilter& filter,
                                                const PipelineConfig& cfg);

// Fraction of ground-truth words (non-empty labels) matched at IoU >= iou_thr
// by at least one box.
double proposal_recall(std::span<const GroundTruthWord> words, std::span<const BBox> boxes,
                       double iou_thr = 0.5);

std::vector<BBox> boxes_of(std::span<const CandidateRegion> cands);

// One JSON object per line: {"page_id", "x", "y", "w", "h", "score"?}.
using CandidateMap = std::map<std::string, std::vector<CandidateRegion>>;
void save_candidates(const CandidateMap& cands, const std::filesystem::path& path);
CandidateMap load_candidates(const std::filesystem::path& path);

struct FoldOutcome {
  LinearFilter filter;
  TrainResult training;
  EmbeddingStore store{"", 0, {}};
  EvalReport qbe;
  EvalReport qbs;
};

// Fresh parameters for `pages` with the input mean taken from them.
ModelParams initial_params(std::span<const Page* const> pages, const PipelineConfig& cfg);

// Candidates for training the network: every enumerated region of each page.
std::vector<TrainingPage> training_pages(std::span<const Page* const> pages, const PipelineConfig& cfg);

EmbeddingStore build_store(const Network<float>& model, std::span<const Page* const> pages,
                           const LinearFilter& filter, const PipelineConfig& cfg,
                           EmbedReport* report = nullptr);

// propose -> filter -> train -> embed test pages -> QBE and QBS evaluation.
FoldOutcome run_fold(const Dataset& data, const FoldSplit& fold, const PipelineConfig& cfg,
                     const TrainProgress& progress = {});

std::vector<const Page*> select_pages(const Dataset& data, const std::vector<std::string>& ids);

}  // namespace rphoc
