#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rphoc {

// Axis-aligned box in pixel units, (x, y) is the top-left corner.
struct BBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  int right() const { return x + w; }   // exclusive
  int bottom() const { return y + h; }  // exclusive
  long long area() const { return static_cast<long long>(w) * h; }
  bool contains(const BBox& o) const {
    return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom();
  }
  bool operator==(const BBox&) const = default;
  auto operator<=>(const BBox&) const = default;
};

BBox bbox_union(const BBox& a, const BBox& b);

// 8-bit page raster, 0 = black ink, 255 = white paper.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 255);
  GrayImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }
  std::uint8_t at(int x, int y) const { return pixels_[static_cast<size_t>(y) * width_ + x]; }
  std::uint8_t& at(int x, int y) { return pixels_[static_cast<size_t>(y) * width_ + x]; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  GrayImage crop(const BBox& box) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Foreground mask, true = ink.
class BinaryImage {
 public:
  BinaryImage() = default;
  BinaryImage(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool at(int x, int y) const { return mask_[static_cast<size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { mask_[static_cast<size_t>(y) * width_ + x] = v ? 1 : 0; }
  long long count() const;
  std::span<const std::uint8_t> mask() const { return mask_; }

  // 0/255 rendering with ink drawn black.
  GrayImage render() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> mask_;
};

struct ConnectedComponent {
  int id = 0;
  BBox bbox;
  long long pixel_count = 0;
  BBox core_box;
};

// Components plus the per-pixel label map (-1 = background) they were read from.
struct ComponentSet {
  int width = 0;
  int height = 0;
  std::vector<ConnectedComponent> components;
  std::vector<int> labels;

  int label(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }
};

struct ProjectionProfile {
  std::vector<double> values;
  int smoothing_window = 1;
};

struct LineBand {
  int id = 0;
  int y_top = 0;
  int y_bottom = 0;  // inclusive
  std::vector<int> members;
};

struct ImagingConfig {
  double threshold_factor = 0.75;
  double core_density = 0.9;
  int smoothing_window = 15;
  double separator_min_frac = 0.5;
  double line_overlap_frac = 0.5;
};

// Pixels with intensity <= factor * mean(intensities) become foreground.
BinaryImage binarize(const GrayImage& img, double threshold_factor = 0.75);

// 8-connected labelling; ids follow raster order of each component's first pixel.
ComponentSet connected_components(const BinaryImage& bin);

// Greedy growth from the bbox center until the box holds `density` of the
// component's pixels. Each step extends one side by one pixel, picking the side
// that adds the most pixels (ties: down, up, right, left).
BBox core_box(const ConnectedComponent& cc, const ComponentSet& set, double density = 0.9);

// Fills core_box for every component in `set`.
void compute_core_boxes(ComponentSet& set, double density = 0.9);

ProjectionProfile projection_profile(std::span<const ConnectedComponent> ccs, int height,
                                     int window = 15);

std::vector<LineBand> line_hypotheses(const ProjectionProfile& profile, double min_frac = 0.5);

void assign_to_lines(std::span<const ConnectedComponent> ccs, std::vector<LineBand>& bands,
                     double overlap_frac = 0.5);

// binarize -> components -> core boxes -> profile -> bands -> assignment.
struct PageLayout {
  BinaryImage binary;
  ComponentSet components;
  std::vector<LineBand> bands;
};
PageLayout analyze_page(const GrayImage& page, const ImagingConfig& cfg = {});

}  // namespace rphoc
