#include "rphoc/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "rphoc/error.hpp"

namespace rphoc {

std::vector<double> FilterFeatures::flatten() const {
  std::vector<double> v;
  v.reserve(column_densities.size() + row_densities.size() + 2);
  v.insert(v.end(), column_densities.begin(), column_densities.end());
  v.insert(v.end(), row_densities.begin(), row_densities.end());
  v.push_back(norm_height);
  v.push_back(norm_width);
  return v;
}

double LinearFilter::score(const FilterFeatures& f) const {
  const auto x = f.flatten();
  if (x.size() != weights.size()) throw InvalidInput("filter: feature/weight length mismatch");
  return std::inner_product(x.begin(), x.end(), weights.begin(), bias);
}

std::string LinearFilter::to_json() const {
  nlohmann::ordered_json j;
  j["column_segments"] = column_segments;
  j["row_segments"] = row_segments;
  j["avg_height"] = avg_height;
  j["avg_width"] = avg_width;
  j["bias"] = bias;
  j["weights"] = weights;
  return j.dump(2);
}

LinearFilter LinearFilter::from_json(const std::string& text) {
  LinearFilter f;
  try {
    const auto j = nlohmann::json::parse(text);
    f.column_segments = j.at("column_segments").get<int>();
    f.row_segments = j.at("row_segments").get<int>();
    f.avg_height = j.at("avg_height").get<double>();
    f.avg_width = j.at("avg_width").get<double>();
    f.bias = j.at("bias").get<double>();
    f.weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("filter model: ") + e.what());
  }
  if (f.weights.size() != static_cast<size_t>(f.column_segments + f.row_segments + 2))
    throw InvalidInput("filter model: weight length does not match P + Q + 2");
  return f;
}

std::vector<int> sort_line_members(const LineBand& band,
                                   std::span<const ConnectedComponent> ccs) {
  std::vector<int> ids = band.members;
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    const auto& ba = ccs[a].bbox;
    const auto& bb = ccs[b].bbox;
    return std::tie(ba.x, ba.y, a) < std::tie(bb.x, bb.y, b);
  });
  return ids;
}

std::vector<CandidateRegion> enumerate_candidates(std::span<const LineBand> bands,
                                                  std::span<const ConnectedComponent> ccs,
                                                  int max_run) {
  if (max_run < 1) throw InvalidInput("enumerate_candidates: max_run must be >= 1");
  std::vector<CandidateRegion> out;
  std::set<std::tuple<int, int, int, int>> seen;
  for (const auto& band : bands) {
    if (band.members.empty()) continue;
    const auto order = sort_line_members(band, ccs);
    const int m = static_cast<int>(order.size());
    for (int i = 0; i < m; ++i) {
      BBox box = ccs[order[i]].bbox;
      for (int j = i; j < m && j - i + 1 <= max_run; ++j) {
        if (j > i) box = bbox_union(box, ccs[order[j]].bbox);
        if (!seen.emplace(box.x, box.y, box.w, box.h).second) continue;
        out.push_back({box, band.id, i, j, std::nullopt});
      }
    }
  }
  return out;
}

double iou(const BBox& a, const BBox& b) {
  const long long iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const long long ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0 || ih <= 0) return 0.0;
  const long long inter = iw * ih;
  return static_cast<double>(inter) / static_cast<double>(a.area() + b.area() - inter);
}

InkIntegral::InkIntegral(const BinaryImage& bin)
    : width_(bin.width()), height_(bin.height()),
      sums_(static_cast<size_t>(width_ + 1) * (height_ + 1), 0) {
  for (int y = 0; y < height_; ++y) {
    long long row = 0;
    for (int x = 0; x < width_; ++x) {
      row += bin.at(x, y) ? 1 : 0;
      sums_[static_cast<size_t>(y + 1) * (width_ + 1) + x + 1] =
          sums_[static_cast<size_t>(y) * (width_ + 1) + x + 1] + row;
    }
  }
}

long long InkIntegral::count(int x0, int y0, int x1, int y1) const {
  const auto at = [&](int x, int y) { return sums_[static_cast<size_t>(y) * (width_ + 1) + x]; };
  return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
}

FilterFeatures candidate_features(const BBox& region, const InkIntegral& ink,
                                  const FilterConfig& cfg) {
  if (cfg.column_segments < 1 || cfg.row_segments < 1)
    throw InvalidInput("candidate_features: P and Q must be >= 1");
  if (!(cfg.avg_height > 0.0 && cfg.avg_width > 0.0))
    throw InvalidInput("candidate_features: normalisation statistics must be positive");
  if (region.x < 0 || region.y < 0 || region.w < 1 || region.h < 1 ||
      region.right() > ink.width() || region.bottom() > ink.height())
    throw InvalidInput("candidate_features: region outside image");

  FilterFeatures f;
  const int P = cfg.column_segments, Q = cfg.row_segments;
  f.column_densities.resize(P);
  for (int k = 0; k < P; ++k) {
    const int x0 = region.x + static_cast<int>(static_cast<long long>(k) * region.w / P);
    const int x1 = region.x + static_cast<int>(static_cast<long long>(k + 1) * region.w / P);
    const long long area = static_cast<long long>(x1 - x0) * region.h;
    f.column_densities[k] =
        area > 0 ? static_cast<double>(ink.count(x0, region.y, x1, region.bottom())) / area : 0.0;
  }
  f.row_densities.resize(Q);
  for (int k = 0; k < Q; ++k) {
    const int y0 = region.y + static_cast<int>(static_cast<long long>(k) * region.h / Q);
    const int y1 = region.y + static_cast<int>(static_cast<long long>(k + 1) * region.h / Q);
    const long long area = static_cast<long long>(y1 - y0) * region.w;
    f.row_densities[k] =
        area > 0 ? static_cast<double>(ink.count(region.x, y0, region.right(), y1)) / area : 0.0;
  }
  f.norm_height = region.h / cfg.avg_height;
  f.norm_width = region.w / cfg.avg_width;
  return f;
}

FilterFeatures candidate_features(const BBox& region, const BinaryImage& bin,
                                  const FilterConfig& cfg) {
  return candidate_features(region, InkIntegral(bin), cfg);
}

int filter_label(double max_iou) {
  if (max_iou >= 0.5) return 1;
  if (max_iou < 0.2) return -1;
  return 0;
}

LinearFilter train_filter(std::span<const LabeledFeatures> samples, const FilterConfig& feature_cfg,
                          const FilterTrainConfig& cfg) {
  if (!(cfg.reg > 0.0)) throw InvalidInput("train_filter: reg must be positive");
  if (cfg.epochs < 1) throw InvalidInput("train_filter: epochs must be >= 1");
  const size_t n = samples.size();
  size_t n_pos = 0;
  for (const auto& s : samples) {
    if (s.label != 1 && s.label != -1) throw InvalidInput("train_filter: labels must be +1 or -1");
    n_pos += s.label == 1;
  }
  if (n_pos == 0 || n_pos == n)
    throw DegenerateTraining("train_filter: both word and non-word samples are required");
  const size_t n_neg = n - n_pos;

  std::vector<std::vector<double>> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = samples[i].features.flatten();
  const size_t dim = static_cast<size_t>(feature_cfg.column_segments + feature_cfg.row_segments + 2);
  for (const auto& xi : x)
    if (xi.size() != dim) throw InvalidInput("train_filter: feature length mismatch");

  const double w_pos = cfg.balanced ? static_cast<double>(n) / (2.0 * n_pos) : 1.0;
  const double w_neg = cfg.balanced ? static_cast<double>(n) / (2.0 * n_neg) : 1.0;

  LinearFilter model;
  model.column_segments = feature_cfg.column_segments;
  model.row_segments = feature_cfg.row_segments;
  model.avg_height = feature_cfg.avg_height;
  model.avg_width = feature_cfg.avg_width;
  model.weights.assign(dim, 0.0);

  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = cfg.batch_size <= 0 ? n : static_cast<size_t>(cfg.batch_size);
  std::vector<double> grad(dim);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.learning_rate / std::sqrt(1.0 + epoch);
    for (size_t start = 0; start < n; start += batch) {
      const size_t end = std::min(n, start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      double grad_b = 0.0;
      for (size_t t = start; t < end; ++t) {
        const size_t i = order[t];
        const double y = samples[i].label;
        const double margin =
            y * std::inner_product(x[i].begin(), x[i].end(), model.weights.begin(), model.bias);
        if (margin >= 1.0) continue;
        const double c = y > 0 ? w_pos : w_neg;
        for (size_t d = 0; d < dim; ++d) grad[d] -= c * y * x[i][d];
        grad_b -= c * y;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (size_t d = 0; d < dim; ++d)
        model.weights[d] -= lr * (grad[d] * inv + cfg.reg * model.weights[d]);
      model.bias -= lr * grad_b * inv;
    }
  }
  return model;
}

double hinge_loss(const LinearFilter& model, std::span<const LabeledFeatures> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += std::max(0.0, 1.0 - s.label * model.score(s.features));
  return total / static_cast<double>(samples.size());
}

std::vector<CandidateRegion> filter_candidates(std::span<const CandidateRegion> cands,
                                               const LinearFilter& model, const InkIntegral& ink,
                                               double threshold) {
  std::vector<CandidateRegion> kept;
  const auto fcfg = model.feature_config();
  for (const auto& c : cands) {
    const double s = model.score(candidate_features(c.bbox, ink, fcfg));
    if (s >= threshold) {
      kept.push_back(c);
      kept.back().score = s;
    }
  }
  return kept;
}

}  // namespace rphoc
