#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rphoc/bench.hpp"
#include "rphoc/checkpoint.hpp"
#include "rphoc/grad_check.hpp"
#include "rphoc/pipeline.hpp"
#include "rphoc/synth.hpp"

using namespace rphoc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

PipelineConfig desk_config() { return load_config(RPHOC_DESK_CONFIG); }

Outcome phoc_oracle() {
  const auto t0 = Clock::now();
  PhocConfig cfg;
  std::mt19937_64 rng(2024);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto w = oracle::random_word(rng, alphabet, 1, 12);
    if (encode_string(w, cfg) != oracle::phoc(w, cfg)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  const auto dim = phoc_dimension(cfg);
  return {mismatches == 0 && dim == 604 && secs < 5.0,
          std::to_string(mismatches) + " mismatches / 1000, dim " + std::to_string(dim) + ", " + fmt("%.2f s", secs)};
}

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  const auto arch = Architecture::desk_default();
  const auto params = init_params(arch, 11, false);
  const auto batch = random_grad_check_batch(arch, 16, 32, 3, 12);
  GradCheckOptions opts;
  const auto clean = grad_check(params, batch, opts);
  opts.fault = BackwardFault::ConvKernelSignFlip;
  const auto faulty = grad_check(params, batch, opts);
  const double secs = seconds_since(t0);
  return {clean.max_rel_error < 1e-4 && faulty.max_rel_error > 0.1 && secs < 60.0,
          "max rel error " + fmt("%.3g", clean.max_rel_error) + ", fault control " + fmt("%.3g", faulty.max_rel_error) +
              ", " + fmt("%.1f s", secs)};
}

Outcome roi_pool_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  int mismatches = 0;
  for (int t = 0; t < 500; ++t) {
    const int c = std::uniform_int_distribution<int>(1, 4)(rng);
    const int fh = std::uniform_int_distribution<int>(1, 12)(rng), fw = std::uniform_int_distribution<int>(1, 16)(rng);
    const int stride = 1 << std::uniform_int_distribution<int>(0, 3)(rng);
    Tensor<double> f({c, fh, fw});
    std::uniform_real_distribution<double> v(-1.0, 1.0);
    for (auto& x : f.data) x = v(rng);
    BBox r;
    r.x = std::uniform_int_distribution<int>(0, fw * stride - 1)(rng);
    r.y = std::uniform_int_distribution<int>(0, fh * stride - 1)(rng);
    r.w = std::uniform_int_distribution<int>(1, fw * stride + 4)(rng);
    r.h = std::uniform_int_distribution<int>(1, fh * stride + 4)(rng);
    const int gh = std::uniform_int_distribution<int>(1, 4)(rng), gw = std::uniform_int_distribution<int>(1, 8)(rng);
    std::vector<int> arg;
    const std::vector<BBox> rois = {r};
    const auto got = layers::roi_pool<double>(f, rois, gh, gw, stride, arg).data;
    const auto want = oracle::roi_pool(f, r, gh, gw, stride);
    if (!std::equal(got.begin(), got.end(), want.begin(), want.end())) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0, std::to_string(mismatches) + " mismatches / 500, " + fmt("%.2f s", secs)};
}

Outcome loss_anchors() {
  const auto arch = Architecture::desk_default();
  Network<double> net(init_params(arch, 5));
  const auto batch = random_grad_check_batch(arch, 24, 48, 8, 6);
  const auto res = net.forward_backward(batch.input, batch.rois, batch.targets);
  double worst = 0.0;
  for (double l : res.per_roi) worst = std::max(worst, std::abs(l - std::log(2.0)));
  const std::vector<double> p = {0.8, 0.4}, t = {1.0, 0.0};
  const double worked = layers::phoc_loss<double>(p, t);
  const double direct = -(std::log(0.8) + std::log(0.6)) / 2.0;
  return {worst <= 1e-9 && std::abs(worked - direct) <= 1e-6,
          "initial |loss - ln2| " + fmt("%.2g", worst) + ", worked example " + fmt("%.7f", worked) +
              " (direct evaluation " + fmt("%.7f", direct) + ", quoted 0.366915)"};
}

Outcome single_pass() {
  const auto arch = Architecture::desk_default();
  Network<float> net(init_params(arch, 8, false));
  SynthSpec spec;
  spec.pages = 1;
  const auto page = render_synthetic(spec).pages[0].image;
  std::mt19937_64 rng(9);
  std::vector<BBox> rois;
  for (int i = 0; i < 100; ++i) {
    BBox b;
    b.w = std::uniform_int_distribution<int>(1, 120)(rng);
    b.h = std::uniform_int_distribution<int>(1, 40)(rng);
    b.x = std::uniform_int_distribution<int>(0, page.width() - b.w)(rng);
    b.y = std::uniform_int_distribution<int>(0, page.height() - b.h)(rng);
    rois.push_back(b);
  }
  const auto input = net.prepare_input(page);
  const auto all = net.forward(input, rois);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto one = net.forward(input, std::span<const BBox>(&rois[i], 1));
    for (int c = 0; c < arch.output_dim; ++c)
      worst = std::max(worst, std::abs(double(one.data[c]) - all.data[i * arch.output_dim + c]));
  }
  return {worst <= 1e-6, "max elementwise difference " + fmt("%.3g", worst)};
}

struct Corpus {
  PipelineConfig cfg;
  Dataset data;
  FoldSplit fold;
};

const Corpus& desk_corpus() {
  static const Corpus corpus = [] {
    Corpus c;
    c.cfg = desk_config();
    c.data = render_synthetic(c.cfg.synth);
    c.fold = make_folds(c.data.page_ids(), c.cfg.seed, c.cfg.fold_bins)[0];
    return c;
  }();
  return corpus;
}

Outcome proposal_recall_check() {
  const auto& c = desk_corpus();
  const auto train = select_pages(c.data, c.fold.train);
  const auto filter = train_proposal_filter(train, c.cfg);
  std::size_t words = 0, raw_hits = 0, kept_hits = 0, kept = 0, total = 0;
  for (const auto& page : c.data.pages) {
    const auto raw = boxes_of(propose_page(page.image, c.cfg).candidates);
    const auto filtered = boxes_of(filtered_proposals(page.image, filter, c.cfg));
    const auto n = page.words.size();
    words += n;
    raw_hits += static_cast<std::size_t>(std::lround(proposal_recall(page.words, raw) * n));
    kept_hits += static_cast<std::size_t>(std::lround(proposal_recall(page.words, filtered) * n));
    kept += filtered.size();
    total += raw.size();
  }
  const double before = double(raw_hits) / words, after = double(kept_hits) / words;
  return {before >= 0.95 && after >= 0.90,
          std::to_string(c.data.pages.size()) + " pages, " + std::to_string(words) + " words, recall " +
              fmt("%.4f", before) + " before / " + fmt("%.4f", after) + " after filtering (" + std::to_string(kept) +
              " of " + std::to_string(total) + " candidates kept)"};
}

std::optional<FoldOutcome> trained;

Outcome end_to_end() {
  const auto& c = desk_corpus();
  const auto t0 = Clock::now();
  trained = run_fold(c.data, c.fold, c.cfg, [&](long it, double loss, double) {
    if ((it + 1) % 500 == 0) std::cerr << "  iteration " << it + 1 << " loss " << loss << "\n";
  });
  const double secs = seconds_since(t0);
  const auto& trace = trained->training.loss_trace;
  const std::size_t k = std::min<std::size_t>(100, trace.size() / 2);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < k; ++i) first += trace[i], last += trace[trace.size() - 1 - i];
  first /= std::max<std::size_t>(k, 1);
  last /= std::max<std::size_t>(k, 1);
  const bool ok = c.cfg.train.iterations <= 5000 && secs <= 1800.0 && trained->qbe.map >= 0.70 &&
                  trained->qbs.map >= 0.60 && k > 0 && last < first;
  return {ok, std::to_string(c.cfg.train.iterations) + " iterations, QBE mAP " + fmt("%.4f", trained->qbe.map) +
                  ", QBS mAP " + fmt("%.4f", trained->qbs.map) + ", loss first/last 100 " + fmt("%.3f", first) + " / " +
                  fmt("%.3f", last) + ", " + fmt("%.0f s", secs)};
}

Outcome evaluator() {
  struct Case {
    std::vector<bool> flags;
    std::size_t n;
    double expected;
  };
  const std::vector<Case> cases = {
      {{true, true, true}, 3, 1.0},
      {{false, false, false}, 3, 0.0},
      {{true, false, true}, 2, 5.0 / 6.0},
      {{false, true}, 1, 0.5},
      {{true}, 1, 1.0},
      {{false, false, true}, 1, 1.0 / 3.0},
      {{true, false, true}, 3, (1.0 + 2.0 / 3.0) / 3.0},
      {{false, true, false, true}, 2, (0.5 + 0.5) / 2.0},
      {{true, true, false, false, true}, 4, (1.0 + 1.0 + 0.6) / 4.0},
      {{false, false, false, false}, 1, 0.0},
  };
  int bad = 0;
  for (const auto& c : cases)
    if (std::abs(average_precision(c.flags, c.n) - c.expected) > 1e-12) ++bad;
  std::vector<std::string> ids;
  for (int i = 1; i <= 20; ++i) ids.push_back("p" + std::to_string(i));
  int bad_folds = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::set<std::string> tested;
    for (const auto& f : make_folds(ids, seed)) {
      std::set<std::string> all(f.train.begin(), f.train.end());
      all.insert(f.test.begin(), f.test.end());
      if (f.train.size() != 15 || f.test.size() != 5 || all.size() != 20) ++bad_folds;
      tested.insert(f.test.begin(), f.test.end());
    }
    if (tested.size() != 20) ++bad_folds;
  }
  return {bad == 0 && bad_folds == 0,
          std::to_string(10 - bad) + "/10 AP cases, " + std::to_string(bad_folds) + " bad fold splits over 50 seeds"};
}

Outcome speedup() {
  const auto& c = desk_corpus();
  const auto train = select_pages(c.data, c.fold.train);
  const auto filter = trained ? trained->filter : train_proposal_filter(train, c.cfg);
  const ModelParams params = trained ? trained->training.params : initial_params(train, c.cfg);
  const Network<float> model(params);
  const TrainConfig& tiling = c.cfg.train;
  const Page* page = nullptr;
  std::vector<BBox> boxes;
  for (const auto& p : c.data.pages) {
    const auto all = boxes_of(filtered_proposals(p.image, filter, c.cfg));
    const auto owner = assign_to_tiles(all, tile_layout(p.image.width(), p.image.height(), tiling));
    std::map<int, std::vector<BBox>> per_tile;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (owner[i] >= 0) per_tile[owner[i]].push_back(all[i]);
    for (auto& [t, b] : per_tile)
      if (b.size() >= 100 && b.size() > boxes.size()) boxes = std::move(b), page = &p;
    if (page) break;
  }
  if (!page) return {false, "no tile with 100 filtered candidates"};
  std::mt19937_64 rng(c.cfg.seed);
  std::shuffle(boxes.begin(), boxes.end(), rng);
  std::vector<double> ratios;
  std::string detail = "page " + page->id;
  for (std::size_t n : {10, 50, 100}) {
    const auto rep = bench_shared_vs_percandidate(model, page->image, std::span<const BBox>(boxes.data(), n), tiling, 5);
    ratios.push_back(rep.ratio);
    detail += ", " + std::to_string(n) + " -> " + fmt("%.2f", rep.ratio);
  }
  const bool monotone = ratios[0] <= ratios[1] && ratios[1] <= ratios[2];
  return {ratios[2] > 3.0 && monotone, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  auto cfg = desk_config();
  cfg.synth.pages = 8;
  cfg.train.iterations = 40;
  const auto data = render_synthetic(cfg.synth);
  const auto fold = make_folds(data.page_ids(), cfg.seed, cfg.fold_bins)[0];
  const auto dir = fs::temp_directory_path() / "rphoc_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> files[2];
  for (int run = 0; run < 2; ++run) {
    const auto out = run_fold(data, fold, cfg);
    const auto tag = std::to_string(run);
    save_checkpoint(out.training.params, dir / ("model" + tag));
    save_store(out.store, dir / ("store" + tag));
    std::ofstream(dir / ("eval" + tag)) << out.qbe.to_json() << out.qbs.to_json();
    for (const char* kind : {"model", "store", "eval"}) files[run].push_back(slurp(dir / (kind + tag)));
  }
  fs::remove_all(dir);
  std::string differ;
  const char* kinds[] = {"checkpoint", "store", "reports"};
  for (std::size_t k = 0; k < 3; ++k)
    if (files[0][k] != files[1][k]) differ += std::string(differ.empty() ? "" : ", ") + kinds[k];
  const bool same = differ.empty();
  return {same, (same ? std::string("checkpoint, store and reports byte-identical") : differ + " differ") + " (" +
                    std::to_string(cfg.synth.pages) + " pages, " + std::to_string(cfg.train.iterations) +
                    " iterations)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"phoc oracle equivalence", phoc_oracle},
      {"gradient integrity", gradient_integrity},
      {"roi-pool oracle", roi_pool_oracle},
      {"loss anchors", loss_anchors},
      {"single-pass equivalence", single_pass},
      {"proposal recall", proposal_recall_check},
      {"end-to-end retrieval", end_to_end},
      {"evaluator correctness", evaluator},
      {"shared-pass speedup", speedup},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
