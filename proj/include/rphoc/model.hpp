#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rphoc/imaging.hpp"
#include "rphoc/layers.hpp"
#include "rphoc/tensor.hpp"

namespace rphoc {

struct TrunkLayer {
  enum class Kind { Conv, Relu, Pool };
  Kind kind = Kind::Conv;
  int out_channels = 0;  // Conv only
  int kernel = 3;        // Conv only
};

// Layer layout of the R-PHOC network: conv trunk, ROI pooling, fully connected
// head ending in one sigmoid per PHOC attribute.
struct Architecture {
  int in_channels = 1;
  std::vector<TrunkLayer> trunk;
  int roi_grid_h = 3;
  int roi_grid_w = 8;
  std::vector<int> head_hidden = {512};
  int output_dim = 604;
  // Subtracted from intensities after scaling to [0, 1].
  double input_mean = 0.0;

  // conv3x3x32, relu, conv3x3x32, relu, pool, conv3x3x64, relu, conv3x3x64, relu, pool
  static Architecture desk_default(int output_dim = 604);

  int stride() const;
  int trunk_channels() const;
  int pooled_features() const { return trunk_channels() * roi_grid_h * roi_grid_w; }
  // Smallest input edge that survives every pooling stage.
  int min_input_size() const { return stride(); }
  void validate() const;

  std::string to_json() const;
  static Architecture from_json(const std::string& text);
};

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

// Canonical (double precision) parameter set; networks of either precision are
// built from it and exported back into it.
struct ModelParams {
  Architecture arch;
  std::string phoc_hash;
  std::vector<ParamTensor> tensors;
  long iteration = 0;

  std::size_t parameter_count() const;
};

// Declaration-order shapes for `arch`; values zero.
ModelParams make_param_layout(const Architecture& arch);

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero. The last head
// layer gets zero weights when `zero_output_layer` so every initial output is 0.5.
ModelParams init_params(const Architecture& arch, std::uint64_t seed, bool zero_output_layer = true);

// Test hook: corrupts one backward rule so gradient checking can be shown to fail.
enum class BackwardFault { None, ConvKernelSignFlip };

template <class T>
class Network {
 public:
  explicit Network(const ModelParams& params);

  const Architecture& arch() const { return arch_; }
  const std::string& phoc_hash() const { return phoc_hash_; }
  ModelParams export_params() const;

  std::vector<AlignedVector<T>>& values() { return values_; }
  const std::vector<AlignedVector<T>>& values() const { return values_; }
  std::vector<AlignedVector<T>>& grads() { return grads_; }
  void zero_grads();

  // (1, H, W) tensor of intensities scaled to [0, 1] minus arch.input_mean.
  Tensor<T> prepare_input(const GrayImage& tile) const;

  Tensor<T> trunk(const Tensor<T>& input) const;
  // (N, output_dim) logits for ROIs pooled from a trunk feature map.
  Tensor<T> head_logits(const Tensor<T>& features, std::span<const BBox> rois) const;

  // One trunk pass shared by every ROI; returns (N, output_dim) probabilities.
  Tensor<T> forward(const Tensor<T>& input, std::span<const BBox> rois) const;
  Tensor<T> forward(const GrayImage& tile, std::span<const BBox> rois) const;

  // Forward + loss + backward; gradients accumulate into grads(). Returns the
  // loss summed over ROIs.
  layers::LossResult forward_backward(const Tensor<T>& input, std::span<const BBox> rois,
                                      const Tensor<T>& targets);

  void set_fault(BackwardFault f) { fault_ = f; }

  // Loss of `forward` plus a hash of every ReLU mask and max-pool / ROI-pool
  // argmax it went through; equal hashes mean the same linear piece.
  std::pair<double, std::uint64_t> loss_and_signature(const Tensor<T>& input, std::span<const BBox> rois,
                                                      const Tensor<T>& targets) const;

 private:
  Architecture arch_;
  std::string phoc_hash_;
  long iteration_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<int>> shapes_;
  std::vector<AlignedVector<T>> values_;
  std::vector<AlignedVector<T>> grads_;
  // Index of the first parameter tensor of every trunk conv / head linear layer.
  std::vector<int> trunk_param_index_;
  std::vector<int> head_param_index_;
  BackwardFault fault_ = BackwardFault::None;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace rphoc
