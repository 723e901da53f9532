#include "rphoc/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <toml.hpp>

#include "rphoc/error.hpp"

namespace rphoc {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads keys from one table and complains about leftovers.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    node_ = &root.at(name_);
    if (!node_->is_object()) throw InvalidInput("config: [" + name_ + "] must be a table");
  }
  Section(const json& node, std::string name, bool) : node_(&node), name_(std::move(name)) {}

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidInput("config: " + name_ + "." + key + ": " + e.what());
    }
  }
  const json* raw(const char* key) {
    seen_.insert(key);
    return node_ && node_->contains(key) ? &node_->at(key) : nullptr;
  }
  void finish() const {
    if (!node_) return;
    for (const auto& [k, v] : node_->items())
      if (!seen_.count(k)) throw InvalidInput("config: unknown key " + name_ + "." + k);
  }

 private:
  const json* node_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

const char* metric_name(Metric m) { return m == Metric::Cosine ? "cosine" : "euclidean"; }

}  // namespace

void PipelineConfig::apply_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  proposals.train.seed = s;
  synth.seed = s;
}

void PipelineConfig::validate() const {
  if (fold_bins < 2) throw InvalidInput("config: fold_bins must be >= 2");
  if (imaging.threshold_factor <= 0.0 || imaging.threshold_factor >= 1.0)
    throw InvalidInput("config: imaging.threshold_factor must lie in (0, 1)");
  if (imaging.smoothing_window < 1 || imaging.smoothing_window % 2 == 0)
    throw InvalidInput("config: imaging.smoothing_window must be odd and >= 1");
  if (proposals.max_run < 1) throw InvalidInput("config: proposals.max_run must be >= 1");
  if (proposals.features.column_segments < 1 || proposals.features.row_segments < 1)
    throw InvalidInput("config: proposal strip counts must be >= 1");
  if (!(proposals.train.reg > 0.0)) throw InvalidInput("config: proposals.reg must be > 0");
  phoc.validate();
  arch.validate();
  if (arch.output_dim != static_cast<int>(phoc_dimension(phoc)))
    throw InvalidInput("config: model output_dim does not match the PHOC dimension");
  train.validate();
  synth.validate();
}

PipelineConfig parse_config(const std::string& text, bool is_toml) {
  json root;
  if (is_toml) {
    try {
      const auto table = toml::parse(text);
      std::ostringstream ss;
      ss << toml::json_formatter{table};
      root = json::parse(ss.str());
    } catch (const toml::parse_error& e) {
      std::ostringstream msg;
      msg << "config: TOML error at line " << e.source().begin.line << ": " << e.description();
      throw InvalidInput(msg.str());
    }
  } else {
    try {
      root = json::parse(text);
    } catch (const json::exception& e) {
      throw InvalidInput(std::string("config: ") + e.what());
    }
  }
  if (!root.is_object()) throw InvalidInput("config: top level must be a table");

  PipelineConfig cfg;
  Section top(root, "", true);
  std::uint64_t seed = cfg.seed;
  top.get("seed", seed);
  cfg.apply_seed(seed);
  top.get("fold_bins", cfg.fold_bins);

  for (const char* name : {"imaging", "proposals", "phoc", "model", "train", "retrieval", "synth"})
    top.raw(name);
  top.finish();

  Section im(root, "imaging");
  im.get("threshold_factor", cfg.imaging.threshold_factor);
  im.get("core_density", cfg.imaging.core_density);
  im.get("smoothing_window", cfg.imaging.smoothing_window);
  im.get("separator_min_frac", cfg.imaging.separator_min_frac);
  im.get("line_overlap_frac", cfg.imaging.line_overlap_frac);
  im.finish();

  Section pr(root, "proposals");
  pr.get("max_run", cfg.proposals.max_run);
  pr.get("column_segments", cfg.proposals.features.column_segments);
  pr.get("row_segments", cfg.proposals.features.row_segments);
  pr.get("threshold", cfg.proposals.threshold);
  pr.get("reg", cfg.proposals.train.reg);
  pr.get("epochs", cfg.proposals.train.epochs);
  pr.get("learning_rate", cfg.proposals.train.learning_rate);
  pr.get("batch_size", cfg.proposals.train.batch_size);
  pr.get("balanced", cfg.proposals.train.balanced);
  pr.finish();

  if (root.contains("phoc")) cfg.phoc = PhocConfig::from_json(root.at("phoc").dump());

  if (root.contains("model")) {
    const auto& m = root.at("model");
    auto arch_json = json::parse(Architecture::desk_default().to_json());
    for (const auto& [k, v] : m.items()) {
      if (!arch_json.contains(k)) throw InvalidInput("config: unknown key model." + k);
      arch_json[k] = v;
    }
    cfg.arch = Architecture::from_json(arch_json.dump());
  }
  cfg.arch.output_dim = static_cast<int>(phoc_dimension(cfg.phoc));

  Section tr(root, "train");
  auto& t = cfg.train;
  tr.get("lr", t.lr0);
  tr.get("lr_step", t.lr_step);
  tr.get("lr_gamma", t.lr_gamma);
  tr.get("momentum", t.momentum);
  tr.get("weight_decay", t.weight_decay);
  tr.get("clip_norm", t.clip_norm);
  tr.get("iterations", t.iterations);
  tr.get("batch", t.batch_rois);
  tr.get("pos_frac", t.positive_fraction);
  tr.get("iou_pos", t.iou_pos);
  tr.get("iou_bg", t.iou_bg);
  tr.get("tile_w", t.tile_w);
  tr.get("tile_h", t.tile_h);
  tr.get("tile_overlap", t.tile_overlap);
  tr.get("include_gt_boxes", t.include_gt_boxes);
  tr.get("warmup_iterations", t.warmup_iterations);
  tr.finish();

  Section rt(root, "retrieval");
  rt.get("iou_thr", cfg.retrieval.eval.iou_thr);
  rt.get("exclude_self", cfg.retrieval.eval.exclude_self);
  rt.get("max_ranks", cfg.retrieval.eval.max_ranks);
  rt.get("fallback_crop", cfg.retrieval.fallback_crop);
  std::string metric = metric_name(cfg.retrieval.eval.metric);
  rt.get("metric", metric);
  if (metric == "cosine")
    cfg.retrieval.eval.metric = Metric::Cosine;
  else if (metric == "euclidean")
    cfg.retrieval.eval.metric = Metric::Euclidean;
  else
    throw InvalidInput("config: retrieval.metric must be 'cosine' or 'euclidean'");
  rt.finish();

  Section sy(root, "synth");
  auto& s = cfg.synth;
  sy.get("lexicon", s.lexicon);
  sy.get("pages", s.pages);
  sy.get("lines_per_page", s.lines_per_page);
  sy.get("words_per_line", s.words_per_line);
  sy.get("scale_min", s.scale_min);
  sy.get("scale_max", s.scale_max);
  sy.get("noise", s.noise);
  sy.get("jitter", s.jitter);
  sy.get("gap_min", s.gap_min);
  sy.get("gap_max", s.gap_max);
  sy.get("line_gap", s.line_gap);
  sy.get("margin", s.margin);
  sy.get("ink", s.ink);
  sy.get("paper", s.paper);
  sy.finish();

  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.extension() == ".toml");
}

std::string PipelineConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["fold_bins"] = fold_bins;
  j["imaging"] = {{"threshold_factor", imaging.threshold_factor},
                  {"core_density", imaging.core_density},
                  {"smoothing_window", imaging.smoothing_window},
                  {"separator_min_frac", imaging.separator_min_frac},
                  {"line_overlap_frac", imaging.line_overlap_frac}};
  j["proposals"] = {{"max_run", proposals.max_run},
                    {"column_segments", proposals.features.column_segments},
                    {"row_segments", proposals.features.row_segments},
                    {"threshold", proposals.threshold},
                    {"reg", proposals.train.reg},
                    {"epochs", proposals.train.epochs},
                    {"learning_rate", proposals.train.learning_rate},
                    {"batch_size", proposals.train.batch_size},
                    {"balanced", proposals.train.balanced}};
  j["phoc"] = ordered_json::parse(phoc.to_json());
  j["model"] = ordered_json::parse(arch.to_json());
  j["train"] = {{"lr", train.lr0},
                {"lr_step", train.lr_step},
                {"lr_gamma", train.lr_gamma},
                {"momentum", train.momentum},
                {"weight_decay", train.weight_decay},
                {"clip_norm", train.clip_norm},
                {"iterations", train.iterations},
                {"batch", train.batch_rois},
                {"pos_frac", train.positive_fraction},
                {"iou_pos", train.iou_pos},
                {"iou_bg", train.iou_bg},
                {"tile_w", train.tile_w},
                {"tile_h", train.tile_h},
                {"tile_overlap", train.tile_overlap},
                {"include_gt_boxes", train.include_gt_boxes},
                {"warmup_iterations", train.warmup_iterations}};
  j["retrieval"] = {{"iou_thr", retrieval.eval.iou_thr},
                    {"exclude_self", retrieval.eval.exclude_self},
                    {"max_ranks", retrieval.eval.max_ranks},
                    {"fallback_crop", retrieval.fallback_crop},
                    {"metric", metric_name(retrieval.eval.metric)}};
  j["synth"] = {{"lexicon", synth.lexicon},       {"pages", synth.pages},
                {"lines_per_page", synth.lines_per_page},
                {"words_per_line", synth.words_per_line},
                {"scale_min", synth.scale_min},   {"scale_max", synth.scale_max},
                {"noise", synth.noise},           {"jitter", synth.jitter},
                {"gap_min", synth.gap_min},       {"gap_max", synth.gap_max},
                {"line_gap", synth.line_gap},     {"margin", synth.margin},
                {"ink", synth.ink},               {"paper", synth.paper}};
  return j.dump(2);
}

}  // namespace rphoc
