#include "rphoc/pipeline.hpp"

#include <fstream>
#include <json.hpp>

#include "rphoc/error.hpp"

namespace rphoc {

PageProposals propose_page(const GrayImage& image, const PipelineConfig& cfg) {
  PageProposals out;
  out.layout = analyze_page(image, cfg.imaging);
  out.candidates = enumerate_candidates(out.layout.bands, out.layout.components.components,
                                        cfg.proposals.max_run);
  return out;
}

std::vector<BBox> boxes_of(std::span<const CandidateRegion> cands) {
  std::vector<BBox> out;
  out.reserve(cands.size());
  for (const auto& c : cands) out.push_back(c.bbox);
  return out;
}

namespace {

double max_iou(const BBox& box, std::span<const GroundTruthWord> words) {
  double best = 0.0;
  for (const auto& w : words)
    if (!w.normalized.empty()) best = std::max(best, iou(box, w.bbox));
  return best;
}

}  // namespace

LinearFilter train_proposal_filter(std::span<const Page* const> pages, const PipelineConfig& cfg) {
  std::vector<PageProposals> props;
  double band_sum = 0.0, width_sum = 0.0;
  long bands = 0, cands = 0;
  for (const Page* p : pages) {
    props.push_back(propose_page(p->image, cfg));
    for (const auto& b : props.back().layout.bands) band_sum += b.y_bottom - b.y_top + 1, ++bands;
    for (const auto& c : props.back().candidates) width_sum += c.bbox.w, ++cands;
  }
  if (bands == 0 || cands == 0) throw DegenerateTraining("filter: training pages yield no candidates");

  FilterConfig fcfg = cfg.proposals.features;
  fcfg.avg_height = band_sum / bands;
  fcfg.avg_width = width_sum / cands;

  std::vector<LabeledFeatures> samples;
  for (size_t i = 0; i < props.size(); ++i) {
    const InkIntegral ink(props[i].layout.binary);
    for (const auto& c : props[i].candidates) {
      const int label = filter_label(max_iou(c.bbox, pages[i]->words));
      if (label == 0) continue;
      samples.push_back({candidate_features(c.bbox, ink, fcfg), label});
    }
  }
  return train_filter(samples, fcfg, cfg.proposals.train);
}

std::vector<CandidateRegion> filtered_proposals(const GrayImage& image, const LinearFilter& filter,
                                                const PipelineConfig& cfg) {
  const auto props = propose_page(image, cfg);
  const InkIntegral ink(props.layout.binary);
  return filter_candidates(props.candidates, filter, ink, cfg.proposals.threshold);
}

double proposal_recall(std::span<const GroundTruthWord> words, std::span<const BBox> boxes,
                       double iou_thr) {
  size_t total = 0, hit = 0;
  for (const auto& w : words) {
    if (w.normalized.empty()) continue;
    ++total;
    for (const auto& b : boxes)
      if (iou(b, w.bbox) >= iou_thr) {
        ++hit;
        break;
      }
  }
  return total ? static_cast<double>(hit) / total : 1.0;
}

void save_candidates(const CandidateMap& cands, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  for (const auto& [page, list] : cands)
    for (const auto& c : list) {
      nlohmann::ordered_json j;
      j["page_id"] = page;
      j["x"] = c.bbox.x;
      j["y"] = c.bbox.y;
      j["w"] = c.bbox.w;
      j["h"] = c.bbox.h;
      if (c.score) j["score"] = *c.score;
      out << j.dump() << '\n';
    }
}

CandidateMap load_candidates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  CandidateMap out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CandidateRegion c;
      c.bbox = {j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>()};
      if (c.bbox.w <= 0 || c.bbox.h <= 0) throw InvalidInput("non-positive box size");
      if (j.contains("score")) c.score = j.at("score").get<double>();
      out[j.at("page_id").get<std::string>()].push_back(c);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const InvalidInput& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<const Page*> select_pages(const Dataset& data, const std::vector<std::string>& ids) {
  std::vector<const Page*> out;
  for (const auto& id : ids) out.push_back(&data.page(id));
  return out;
}

std::vector<TrainingPage> training_pages(std::span<const Page* const> pages, const PipelineConfig& cfg) {
  std::vector<TrainingPage> out;
  for (const Page* p : pages) out.push_back({p, boxes_of(propose_page(p->image, cfg).candidates)});
  return out;
}

ModelParams initial_params(std::span<const Page* const> pages, const PipelineConfig& cfg) {
  std::vector<TrainingPage> tp;
  for (const Page* p : pages) tp.push_back({p, {}});
  Architecture arch = cfg.arch;
  arch.input_mean = dataset_mean(tp);
  auto params = init_params(arch, cfg.seed);
  params.phoc_hash = cfg.phoc.hash();
  return params;
}

EmbeddingStore build_store(const Network<float>& model, std::span<const Page* const> pages,
                           const LinearFilter& filter, const PipelineConfig& cfg, EmbedReport* report) {
  std::vector<PageCandidates> cands;
  for (const Page* p : pages) cands.push_back({p, boxes_of(filtered_proposals(p->image, filter, cfg))});
  return embed_pages(model, cands, cfg.phoc, cfg.train, report, cfg.retrieval.fallback_crop);
}

FoldOutcome run_fold(const Dataset& data, const FoldSplit& fold, const PipelineConfig& cfg,
                     const TrainProgress& progress) {
  const auto train_pages = select_pages(data, fold.train);
  const auto test_pages = select_pages(data, fold.test);

  FoldOutcome out;
  out.filter = train_proposal_filter(train_pages, cfg);
  const auto tps = training_pages(train_pages, cfg);
  out.training = train(tps, cfg.phoc, initial_params(train_pages, cfg), cfg.train, progress);

  const Network<float> net(out.training.params);
  out.store = build_store(net, test_pages, out.filter, cfg);
  out.qbe = evaluate_qbe(net, test_pages, out.store, cfg.train, cfg.retrieval.eval);
  out.qbs = evaluate_qbs(test_pages, out.store, cfg.phoc, cfg.retrieval.eval);
  return out;
}

}  // namespace rphoc
