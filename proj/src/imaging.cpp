#include "rphoc/imaging.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "rphoc/error.hpp"

namespace rphoc {

BBox bbox_union(const BBox& a, const BBox& b) {
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  const int x1 = std::max(a.right(), b.right());
  const int y1 = std::max(a.bottom(), b.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw InvalidInput("image dimensions must be positive");
  pixels_.assign(static_cast<size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) throw InvalidInput("image dimensions must be positive");
  if (pixels_.size() != static_cast<size_t>(width) * height)
    throw InvalidInput("pixel buffer does not match image dimensions");
}

GrayImage GrayImage::crop(const BBox& box) const {
  if (box.x < 0 || box.y < 0 || box.w < 1 || box.h < 1 || box.right() > width_ ||
      box.bottom() > height_)
    throw InvalidInput("crop box outside image");
  std::vector<std::uint8_t> out(static_cast<size_t>(box.w) * box.h);
  for (int y = 0; y < box.h; ++y) {
    const auto* src = &pixels_[static_cast<size_t>(box.y + y) * width_ + box.x];
    std::copy(src, src + box.w, out.begin() + static_cast<long>(y) * box.w);
  }
  return GrayImage(box.w, box.h, std::move(out));
}

BinaryImage::BinaryImage(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw InvalidInput("image dimensions must be positive");
  mask_.assign(static_cast<size_t>(width) * height, 0);
}

long long BinaryImage::count() const {
  return std::count(mask_.begin(), mask_.end(), std::uint8_t{1});
}

GrayImage BinaryImage::render() const {
  std::vector<std::uint8_t> px(mask_.size());
  std::transform(mask_.begin(), mask_.end(), px.begin(),
                 [](std::uint8_t m) { return m ? std::uint8_t{0} : std::uint8_t{255}; });
  return GrayImage(width_, height_, std::move(px));
}

BinaryImage binarize(const GrayImage& img, double threshold_factor) {
  if (img.empty()) throw InvalidInput("binarize: empty image");
  if (!(threshold_factor > 0.0 && threshold_factor < 1.0))
    throw InvalidInput("binarize: threshold factor must lie in (0, 1)");
  const auto px = img.pixels();
  const double sum = std::accumulate(px.begin(), px.end(), 0.0);
  const double threshold = threshold_factor * (sum / static_cast<double>(px.size()));
  BinaryImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (img.at(x, y) <= threshold) out.set(x, y, true);
  return out;
}

ComponentSet connected_components(const BinaryImage& bin) {
  ComponentSet set;
  set.width = bin.width();
  set.height = bin.height();
  set.labels.assign(static_cast<size_t>(set.width) * set.height, -1);
  if (set.width == 0) return set;

  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < set.height; ++y) {
    for (int x = 0; x < set.width; ++x) {
      if (!bin.at(x, y) || set.label(x, y) >= 0) continue;
      const int id = static_cast<int>(set.components.size());
      int x0 = x, x1 = x, y0 = y, y1 = y;
      long long count = 0;
      stack.clear();
      stack.emplace_back(x, y);
      set.labels[static_cast<size_t>(y) * set.width + x] = id;
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++count;
        x0 = std::min(x0, cx);
        x1 = std::max(x1, cx);
        y0 = std::min(y0, cy);
        y1 = std::max(y1, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= set.width || ny >= set.height) continue;
            auto& lbl = set.labels[static_cast<size_t>(ny) * set.width + nx];
            if (lbl >= 0 || !bin.at(nx, ny)) continue;
            lbl = id;
            stack.emplace_back(nx, ny);
          }
        }
      }
      ConnectedComponent cc;
      cc.id = id;
      cc.bbox = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
      cc.pixel_count = count;
      cc.core_box = cc.bbox;
      set.components.push_back(cc);
    }
  }
  return set;
}

namespace {

// Summed-area table of one component's pixels inside its bbox.
class ComponentIntegral {
 public:
  ComponentIntegral(const ConnectedComponent& cc, const ComponentSet& set)
      : origin_x_(cc.bbox.x), origin_y_(cc.bbox.y), w_(cc.bbox.w), h_(cc.bbox.h),
        sums_(static_cast<size_t>(w_ + 1) * (h_ + 1), 0) {
    for (int y = 0; y < h_; ++y) {
      long long row = 0;
      for (int x = 0; x < w_; ++x) {
        row += set.label(origin_x_ + x, origin_y_ + y) == cc.id ? 1 : 0;
        sum(x + 1, y + 1) = sum(x + 1, y) + row;
      }
    }
  }

  // Pixel count of the component inside [x0, x1) x [y0, y1), page coordinates.
  long long count(int x0, int y0, int x1, int y1) const {
    x0 -= origin_x_, x1 -= origin_x_, y0 -= origin_y_, y1 -= origin_y_;
    return sum(x1, y1) - sum(x0, y1) - sum(x1, y0) + sum(x0, y0);
  }

 private:
  long long& sum(int x, int y) { return sums_[static_cast<size_t>(y) * (w_ + 1) + x]; }
  long long sum(int x, int y) const { return sums_[static_cast<size_t>(y) * (w_ + 1) + x]; }

  int origin_x_, origin_y_, w_, h_;
  std::vector<long long> sums_;
};

}  // namespace

BBox core_box(const ConnectedComponent& cc, const ComponentSet& set, double density) {
  if (!(density > 0.0 && density <= 1.0))
    throw InvalidInput("core_box: density must lie in (0, 1]");
  const ComponentIntegral integral(cc, set);
  const double target = density * static_cast<double>(cc.pixel_count);

  int x0 = cc.bbox.x + (cc.bbox.w - 1) / 2;
  int y0 = cc.bbox.y + (cc.bbox.h - 1) / 2;
  int x1 = x0 + 1, y1 = y0 + 1;
  long long inside = integral.count(x0, y0, x1, y1);

  while (static_cast<double>(inside) < target) {
    // Candidate gains in tie-break order: down, up, right, left.
    std::array<long long, 4> gain{-1, -1, -1, -1};
    if (y1 < cc.bbox.bottom()) gain[0] = integral.count(x0, y1, x1, y1 + 1);
    if (y0 > cc.bbox.y) gain[1] = integral.count(x0, y0 - 1, x1, y0);
    if (x1 < cc.bbox.right()) gain[2] = integral.count(x1, y0, x1 + 1, y1);
    if (x0 > cc.bbox.x) gain[3] = integral.count(x0 - 1, y0, x0, y1);
    const auto best = std::max_element(gain.begin(), gain.end()) - gain.begin();
    if (gain[best] < 0) break;  // box already equals the bbox
    switch (best) {
      case 0: ++y1; break;
      case 1: --y0; break;
      case 2: ++x1; break;
      default: --x0; break;
    }
    inside += gain[best];
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

void compute_core_boxes(ComponentSet& set, double density) {
  for (auto& cc : set.components) cc.core_box = core_box(cc, set, density);
}

ProjectionProfile projection_profile(std::span<const ConnectedComponent> ccs, int height,
                                     int window) {
  if (window < 1 || window % 2 == 0)
    throw InvalidInput("projection_profile: window must be odd and >= 1");
  if (height < 0) throw InvalidInput("projection_profile: negative height");
  std::vector<double> raw(static_cast<size_t>(height), 0.0);
  for (const auto& cc : ccs) {
    const int top = std::max(0, cc.core_box.y);
    const int bottom = std::min(height, cc.core_box.bottom());
    for (int r = top; r < bottom; ++r) raw[r] += cc.core_box.w;
  }
  std::vector<double> prefix(raw.size() + 1, 0.0);
  std::partial_sum(raw.begin(), raw.end(), prefix.begin() + 1);

  ProjectionProfile profile;
  profile.smoothing_window = window;
  profile.values.resize(raw.size());
  const int half = window / 2;
  for (int r = 0; r < height; ++r) {
    const int lo = std::max(0, r - half);
    const int hi = std::min(height - 1, r + half);
    profile.values[r] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
  }
  return profile;
}

std::vector<LineBand> line_hypotheses(const ProjectionProfile& profile, double min_frac) {
  if (!(min_frac >= 0.0 && min_frac < 1.0))
    throw InvalidInput("line_hypotheses: min_frac must lie in [0, 1)");
  const auto& v = profile.values;
  const int n = static_cast<int>(v.size());

  double positive_sum = 0.0;
  int positive_rows = 0;
  for (double x : v)
    if (x > 0.0) positive_sum += x, ++positive_rows;
  if (positive_rows == 0) return {};
  const double gate = min_frac * positive_sum / positive_rows;

  // Separators: interior plateaus strictly below both neighbours and under the gate.
  std::vector<int> separators;
  for (int start = 0; start < n;) {
    int end = start;
    while (end + 1 < n && v[end + 1] == v[start]) ++end;
    const bool interior = start > 0 && end < n - 1;
    if (interior && v[start - 1] > v[start] && v[end + 1] > v[start] && v[start] < gate)
      separators.push_back((start + end) / 2);
    start = end + 1;
  }

  std::vector<LineBand> bands;
  int prev = -1;
  separators.push_back(n);
  for (int sep : separators) {
    const int top = prev + 1, bottom = sep - 1;
    prev = sep;
    if (top > bottom) continue;
    const bool any_ink = std::any_of(v.begin() + top, v.begin() + bottom + 1,
                                     [](double x) { return x > 0.0; });
    if (!any_ink) continue;
    LineBand band;
    band.id = static_cast<int>(bands.size());
    band.y_top = top;
    band.y_bottom = bottom;
    bands.push_back(band);
  }
  return bands;
}

void assign_to_lines(std::span<const ConnectedComponent> ccs, std::vector<LineBand>& bands,
                     double overlap_frac) {
  if (!(overlap_frac > 0.0 && overlap_frac <= 1.0))
    throw InvalidInput("assign_to_lines: overlap_frac must lie in (0, 1]");
  if (bands.empty()) return;
  for (auto& band : bands) band.members.clear();

  for (const auto& cc : ccs) {
    const int top = cc.core_box.y;
    const int bottom = cc.core_box.bottom() - 1;
    const double needed = overlap_frac * cc.core_box.h;
    bool placed = false;
    int best = -1;
    long long best_inter = -1, best_gap = 0;
    for (size_t b = 0; b < bands.size(); ++b) {
      const long long inter =
          std::max(0, std::min(bottom, bands[b].y_bottom) - std::max(top, bands[b].y_top) + 1);
      if (static_cast<double>(inter) >= needed) {
        bands[b].members.push_back(cc.id);
        placed = true;
      }
      // Fallback choice: largest intersection, then nearest band, then upper band.
      const long long gap = std::max({0, bands[b].y_top - bottom, top - bands[b].y_bottom});
      if (inter > best_inter || (inter == best_inter && gap < best_gap)) {
        best = static_cast<int>(b);
        best_inter = inter;
        best_gap = gap;
      }
    }
    if (!placed) bands[best].members.push_back(cc.id);
  }
}

PageLayout analyze_page(const GrayImage& page, const ImagingConfig& cfg) {
  PageLayout layout;
  layout.binary = binarize(page, cfg.threshold_factor);
  layout.components = connected_components(layout.binary);
  compute_core_boxes(layout.components, cfg.core_density);
  const auto profile =
      projection_profile(layout.components.components, page.height(), cfg.smoothing_window);
  layout.bands = line_hypotheses(profile, cfg.separator_min_frac);
  assign_to_lines(layout.components.components, layout.bands, cfg.line_overlap_frac);
  return layout;
}

}  // namespace rphoc
