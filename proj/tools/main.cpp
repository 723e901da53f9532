#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "rphoc/bench.hpp"
#include "rphoc/checkpoint.hpp"
#include "rphoc/config.hpp"
#include "rphoc/error.hpp"
#include "rphoc/grad_check.hpp"
#include "rphoc/image_io.hpp"
#include "rphoc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rphoc;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config, "TOML or JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed for every random choice");
  auto* out = cmd->add_option("--out", c.out, "output path");
  if (needs_out) out->required();
}

PipelineConfig config_of(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) cfg.apply_seed(*c.seed);
  cfg.validate();
  return cfg;
}

Dataset dataset_of(const Common& c, const PipelineConfig& cfg) {
  if (c.data.empty()) throw InvalidInput("--data is required");
  auto data = load_dataset(c.data, cfg.phoc);
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
  return data;
}

FoldSplit fold_of(const Dataset& data, const PipelineConfig& cfg, int fold) {
  const auto folds = make_folds(data.page_ids(), cfg.seed, cfg.fold_bins);
  if (fold < 0 || fold >= static_cast<int>(folds.size()))
    throw InvalidInput("--fold must lie in [0, " + std::to_string(folds.size() - 1) + "]");
  return folds[fold];
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text << '\n';
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// page:x,y,w,h
std::pair<std::string, BBox> parse_region(const std::string& s) {
  const auto colon = s.rfind(':');
  BBox b;
  if (colon == std::string::npos ||
      std::sscanf(s.c_str() + colon + 1, "%d,%d,%d,%d", &b.x, &b.y, &b.w, &b.h) != 4)
    throw InvalidInput("expected page:x,y,w,h, got '" + s + "'");
  return {s.substr(0, colon), b};
}

nlohmann::ordered_json ranked_json(const RankedList& list, const EmbeddingStore& store, size_t top) {
  auto arr = nlohmann::ordered_json::array();
  for (size_t i = 0; i < list.size() && (top == 0 || i < top); ++i) {
    const auto& r = store[list[i].record];
    arr.push_back({{"rank", i + 1},
                   {"page_id", r.page_id},
                   {"x", r.bbox.x},
                   {"y", r.bbox.y},
                   {"w", r.bbox.w},
                   {"h", r.bbox.h},
                   {"distance", list[i].distance}});
  }
  return arr;
}

void emit(const Common& c, const std::string& text) {
  if (c.out.empty())
    std::cout << text << '\n';
  else
    write_text(c.out, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation-free word spotting with region-pooled PHOC embeddings"};
  app.require_subcommand(1);
  Common c;
  std::function<void()> action;

  // render-synth
  auto* synth = app.add_subcommand("render-synth", "render a synthetic annotated corpus");
  add_common(synth, c, true);
  std::optional<int> synth_pages;
  synth->add_option("--pages", synth_pages, "page count");
  synth->callback([&] {
    action = [&] {
      auto cfg = config_of(c);
      if (synth_pages) cfg.synth.pages = *synth_pages;
      const auto data = render_synthetic(cfg.synth);
      save_dataset(data, c.out);
      std::cerr << "wrote " << data.pages.size() << " pages to " << c.out << '\n';
    };
  });

  // propose
  auto* propose = app.add_subcommand("propose", "enumerate (and optionally filter) word candidates");
  add_common(propose, c, true);
  propose->add_option("--data", c.data, "dataset directory")->required();
  std::vector<std::string> page_ids;
  std::string filter_path;
  propose->add_option("--page", page_ids, "page ids (default: all)");
  propose->add_option("--filter", filter_path, "linear filter JSON")->check(CLI::ExistingFile);
  propose->callback([&] {
    action = [&] {
      const auto cfg = config_of(c);
      const auto data = dataset_of(c, cfg);
      const auto ids = page_ids.empty() ? data.page_ids() : page_ids;
      std::optional<LinearFilter> filter;
      if (!filter_path.empty()) filter = LinearFilter::from_json(read_text(filter_path));
      CandidateMap out;
      for (const auto& id : ids) {
        const auto& page = data.page(id);
        out[id] = filter ? filtered_proposals(page.image, *filter, cfg) : propose_page(page.image, cfg).candidates;
        std::cerr << id << ": " << out[id].size() << " candidates, recall "
                  << proposal_recall(page.words, boxes_of(out[id])) << '\n';
      }
      save_candidates(out, c.out);
    };
  });

  // train-filter
  auto* tfilter = app.add_subcommand("train-filter", "train the word/non-word candidate filter");
  add_common(tfilter, c, true);
  tfilter->add_option("--data", c.data, "dataset directory")->required();
  std::optional<int> fold;
  tfilter->add_option("--fold", fold, "train on this fold's training pages (default: all pages)");
  tfilter->callback([&] {
    action = [&] {
      const auto cfg = config_of(c);
      const auto data = dataset_of(c, cfg);
      const auto ids = fold ? fold_of(data, cfg, *fold).train : data.page_ids();
      const auto pages = select_pages(data, ids);
      write_text(c.out, train_proposal_filter(pages, cfg).to_json());
    };
  });

  // train
  auto* trn = app.add_subcommand("train", "train the attribute network");
  add_common(trn, c, true);
  trn->add_option("--data", c.data, "dataset directory")->required();
  trn->add_option("--fold", fold, "train on this fold's training pages (default: all pages)");
  std::optional<long> iters, lr_step;
  std::optional<double> lr, lr_gamma, pos_frac;
  std::optional<int> batch;
  std::string arch_path, resume_path;
  trn->add_option("--iters", iters, "iterations");
  trn->add_option("--lr", lr, "initial learning rate");
  trn->add_option("--lr-step", lr_step, "iterations per learning-rate step");
  trn->add_option("--lr-gamma", lr_gamma, "learning-rate decay per step");
  trn->add_option("--batch", batch, "ROIs per minibatch");
  trn->add_option("--pos-frac", pos_frac, "minimum positive fraction per minibatch");
  trn->add_option("--arch", arch_path, "architecture JSON")->check(CLI::ExistingFile);
  trn->add_option("--resume", resume_path, "checkpoint to continue from")->check(CLI::ExistingFile);
  trn->callback([&] {
    action = [&] {
      auto cfg = config_of(c);
      if (iters) cfg.train.iterations = *iters;
      if (lr) cfg.train.lr0 = *lr;
      if (lr_step) cfg.train.lr_step = *lr_step;
      if (lr_gamma) cfg.train.lr_gamma = *lr_gamma;
      if (batch) cfg.train.batch_rois = *batch;
      if (pos_frac) cfg.train.positive_fraction = *pos_frac;
      if (!arch_path.empty()) {
        cfg.arch = Architecture::from_json(read_text(arch_path));
        cfg.arch.output_dim = static_cast<int>(phoc_dimension(cfg.phoc));
      }
      cfg.validate();
      const auto data = dataset_of(c, cfg);
      const auto ids = fold ? fold_of(data, cfg, *fold).train : data.page_ids();
      const auto pages = select_pages(data, ids);
      const auto init = resume_path.empty() ? initial_params(pages, cfg) : load_checkpoint(resume_path);
      const long every = std::max(1L, cfg.train.iterations / 20);
      const auto result = train(training_pages(pages, cfg), cfg.phoc, init, cfg.train,
                                [&](long it, double loss, double rate) {
                                  if ((it + 1) % every == 0)
                                    std::cerr << "iter " << it + 1 << " loss " << loss << " lr " << rate << '\n';
                                });
      save_checkpoint(result.params, c.out);
    };
  });

  // embed
  auto* emb = app.add_subcommand("embed", "embed candidate regions into a searchable store");
  add_common(emb, c, true);
  emb->add_option("--data", c.data, "dataset directory")->required();
  std::string model_path, candidates_path;
  emb->add_option("--model", model_path, "network checkpoint")->required()->check(CLI::ExistingFile);
  emb->add_option("--filter", filter_path, "linear filter JSON")->check(CLI::ExistingFile);
  emb->add_option("--candidates", candidates_path, "candidate JSONL (instead of --filter)")
      ->check(CLI::ExistingFile);
  emb->add_option("--fold", fold, "embed this fold's test pages (default: all pages)");
  emb->callback([&] {
    action = [&] {
      const auto cfg = config_of(c);
      const auto data = dataset_of(c, cfg);
      const Network<float> net(load_checkpoint(model_path));
      const auto ids = fold ? fold_of(data, cfg, *fold).test : data.page_ids();
      EmbedReport rep;
      std::optional<EmbeddingStore> store;
      if (!candidates_path.empty()) {
        const auto cands = load_candidates(candidates_path);
        std::vector<PageCandidates> pcs;
        for (const auto& id : ids) {
          const auto it = cands.find(id);
          pcs.push_back({&data.page(id), it == cands.end() ? std::vector<BBox>{} : boxes_of(it->second)});
        }
        store.emplace(embed_pages(net, pcs, cfg.phoc, cfg.train, &rep, cfg.retrieval.fallback_crop));
      } else {
        if (filter_path.empty()) throw InvalidInput("embed needs --filter or --candidates");
        const auto filter = LinearFilter::from_json(read_text(filter_path));
        store.emplace(build_store(net, select_pages(data, ids), filter, cfg, &rep));
      }
      save_store(*store, c.out);
      std::cerr << "embedded " << rep.embedded << " regions, dropped " << rep.dropped << '\n';
    };
  });

  // query
  auto* qry = app.add_subcommand("query", "rank a store against a word image or a string");
  add_common(qry, c, false);
  std::string store_path, qbe, qbs;
  size_t top = 20;
  qry->add_option("--store", store_path, "embedding store")->required()->check(CLI::ExistingFile);
  qry->add_option("--model", model_path, "network checkpoint (query by example)")->check(CLI::ExistingFile);
  qry->add_option("--data", c.data, "dataset directory (query by example)");
  auto* qbe_opt = qry->add_option("--qbe", qbe, "query region page:x,y,w,h");
  auto* qbs_opt = qry->add_option("--qbs", qbs, "query string");
  qbe_opt->excludes(qbs_opt);
  qry->add_option("--top", top, "entries to print (0 = all)");
  qry->callback([&] {
    action = [&] {
      const auto cfg = config_of(c);
      const auto store = load_store(store_path);
      RankedList list;
      if (!qbe.empty()) {
        if (model_path.empty()) throw InvalidInput("--qbe needs --model and --data");
        const auto data = dataset_of(c, cfg);
        const auto [page_id, box] = parse_region(qbe);
        const Network<float> net(load_checkpoint(model_path));
        list = query_by_example(net, data.page(page_id).image, box, store, cfg.train,
                                cfg.retrieval.eval.metric);
      } else if (!qbs.empty()) {
        list = query_by_string(qbs, store, cfg.phoc, cfg.retrieval.eval.metric);
      } else {
        throw InvalidInput("query needs --qbe or --qbs");
      }
      emit(c, ranked_json(list, store, top).dump(2));
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "QBE and QBS mean average precision on one fold");
  add_common(ev, c, false);
  ev->add_option("--data", c.data, "dataset directory")->required();
  int eval_fold = 0;
  ev->add_option("--fold", eval_fold, "fold index")->required();
  ev->add_option("--model", model_path, "trained checkpoint (default: train on the fold)")
      ->check(CLI::ExistingFile);
  ev->add_option("--filter", filter_path, "linear filter JSON (default: train on the fold)")
      ->check(CLI::ExistingFile);
  ev->callback([&] {
    action = [&] {
      const auto cfg = config_of(c);
      const auto data = dataset_of(c, cfg);
      const auto split = fold_of(data, cfg, eval_fold);
      nlohmann::ordered_json j;
      j["fold"] = eval_fold;
      if (model_path.empty()) {
        const long every = std::max(1L, cfg.train.iterations / 20);
        const auto outcome = run_fold(data, split, cfg, [&](long it, double loss, double) {
          if ((it + 1) % every == 0) std::cerr << "iter " << it + 1 << " loss " << loss << '\n';
        });
        j["qbe"] = nlohmann::ordered_json::parse(outcome.qbe.to_json());
        j["qbs"] = nlohmann::ordered_json::parse(outcome.qbs.to_json());
      } else {
        const auto test_pages = select_pages(data, split.test);
        const auto filter = filter_path.empty()
                                ? train_proposal_filter(select_pages(data, split.train), cfg)
                                : LinearFilter::from_json(read_text(filter_path));
        const Network<float> net(load_checkpoint(model_path));
        const auto store = build_store(net, test_pages, filter, cfg);
        j["qbe"] = nlohmann::ordered_json::parse(
            evaluate_qbe(net, test_pages, store, cfg.train, cfg.retrieval.eval).to_json());
        j["qbs"] = nlohmann::ordered_json::parse(
            evaluate_qbs(test_pages, store, cfg.phoc, cfg.retrieval.eval).to_json());
      }
      j["map"] = j["qbe"]["map"];
      emit(c, j.dump(2));
    };
  });

  // bench
  auto* bn = app.add_subcommand("bench", "shared-trunk versus per-candidate forward timing");
  add_common(bn, c, false);
  bn->add_option("--data", c.data, "dataset directory")->required();
  std::string bench_page;
  int repeats = 3;
  bn->add_option("--page", bench_page, "page id")->required();
  bn->add_option("--candidates", candidates_path, "candidate JSONL")->required()->check(CLI::ExistingFile);
  bn->add_option("--model", model_path, "checkpoint (default: fresh parameters)")->check(CLI::ExistingFile);
  bn->add_option("--repeats", repeats, "timing repeats (fastest kept)");
  bn->callback([&] {
    action = [&] {
      const auto cfg = config_of(c);
      const auto data = dataset_of(c, cfg);
      const auto& page = data.page(bench_page);
      const auto cands = load_candidates(candidates_path);
      const auto it = cands.find(bench_page);
      if (it == cands.end()) throw InvalidInput("no candidates for page " + bench_page);
      ModelParams params;
      if (model_path.empty()) {
        const Page* pp = &page;
        params = initial_params(std::span<const Page* const>(&pp, 1), cfg);
      } else {
        params = load_checkpoint(model_path);
      }
      const Network<float> net(params);
      const auto boxes = boxes_of(it->second);
      emit(c, bench_shared_vs_percandidate(net, page.image, boxes, cfg.train, repeats).to_json());
    };
  });

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the analytic gradients");
  add_common(gc, c, false);
  bool fault = false;
  int samples = 200, gc_rois = 4, gc_h = 24, gc_w = 40;
  gc->add_flag("--fault", fault, "flip the sign of the conv kernel gradients (negative control)");
  gc->add_option("--samples", samples, "entries checked per tensor");
  gc->add_option("--rois", gc_rois, "ROIs in the batch");
  gc->add_option("--height", gc_h, "tile height");
  gc->add_option("--width", gc_w, "tile width");
  gc->callback([&] {
    action = [&] {
      const auto cfg = config_of(c);
      const auto params = init_params(cfg.arch, cfg.seed, false);
      const auto batch = random_grad_check_batch(cfg.arch, gc_h, gc_w, gc_rois, cfg.seed);
      GradCheckOptions opts;
      opts.samples_per_tensor = samples;
      opts.seed = cfg.seed;
      opts.fault = fault ? BackwardFault::ConvKernelSignFlip : BackwardFault::None;
      const auto rep = grad_check(params, batch, opts);
      nlohmann::ordered_json j;
      j["max_rel_error"] = rep.max_rel_error;
      j["skipped_kinks"] = rep.skipped_kinks;
      for (const auto& t : rep.tensors)
        j["tensors"].push_back({{"name", t.name}, {"checked", t.checked}, {"max_rel_error", t.max_rel_error}});
      emit(c, j.dump(2));
    };
  });

  // phoc-encode
  auto* pe = app.add_subcommand("phoc-encode", "print the attribute vector of a word");
  add_common(pe, c, false);
  std::string word;
  pe->add_option("--word", word, "word to encode")->required();
  pe->callback([&] {
    action = [&] {
      const auto cfg = config_of(c);
      const auto v = encode_string(word, cfg.phoc);
      std::string bits;
      std::vector<size_t> set;
      for (size_t i = 0; i < v.size(); ++i) {
        bits += v[i] > 0.5f ? '1' : '0';
        if (v[i] > 0.5f) set.push_back(i);
      }
      nlohmann::ordered_json j;
      j["word"] = word;
      j["normalized"] = normalize_word(word, cfg.phoc);
      j["dim"] = v.size();
      j["set_bits"] = set.size();
      j["indices"] = set;
      j["bits"] = bits;
      emit(c, j.dump(2));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  const bool out_existed = !c.out.empty() && fs::exists(c.out);
  auto cleanup = [&] {
    std::error_code ec;
    if (!c.out.empty() && !out_existed) fs::remove_all(c.out, ec);
  };
  try {
    action();
  } catch (const InvalidInput& e) {
    cleanup();
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const InvalidShape& e) {
    cleanup();
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const InvalidRoi& e) {
    cleanup();
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Incompatible& e) {
    cleanup();
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    cleanup();
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
