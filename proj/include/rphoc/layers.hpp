#pragma once

#include <span>
#include <vector>

#include "rphoc/imaging.hpp"
#include "rphoc/tensor.hpp"

namespace rphoc::layers {

// Cross-correlation of a (C, H, W) map with `kernels` of shape (Cout, C, k, k),
// zero padding `pad` on every side, stride 1.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, std::span<const T> kernels, std::span<const T> bias,
                 int out_channels, int kernel, int pad);

// Gradients are accumulated (+=) into d_kernels and d_bias; d_input is overwritten
// when non-null.
template <class T>
void conv2d_backward(const Tensor<T>& input, std::span<const T> kernels, int out_channels,
                     int kernel, int pad, const Tensor<T>& d_output, Tensor<T>* d_input,
                     std::span<T> d_kernels, std::span<T> d_bias);

template <class T>
Tensor<T> relu(const Tensor<T>& x);

// Gradient is zero where the forward input was <= 0.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& d_output);

// 2x2 window, stride 2; an odd trailing row/column is dropped. `argmax` receives
// the flat input index chosen for every output element (first maximum on ties).
template <class T>
Tensor<T> maxpool2x2(const Tensor<T>& input, std::vector<int>& argmax);

template <class T>
Tensor<T> maxpool2x2_backward(const std::vector<int>& input_shape, const std::vector<int>& argmax,
                              const Tensor<T>& d_output);

// Region of a feature map, in feature-map cells.
struct FeatureWindow {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;
};

// Maps an input-pixel box onto a (height x width) map with total stride `stride`:
// x' = floor(x/s), w' = max(1, ceil((x+w)/s) - x'), clipped to the map.
FeatureWindow map_roi(const BBox& roi, int stride, int map_height, int map_width);

// Output shape (N, C * grid_h * grid_w); row n is rois[n] pooled channel-major.
// Bin (i, j) spans rows [floor(i*h'/H), ceil((i+1)*h'/H)) of the window and the
// analogous columns.
template <class T>
Tensor<T> roi_pool(const Tensor<T>& features, std::span<const BBox> rois, int grid_h, int grid_w,
                   int stride, std::vector<int>& argmax);

template <class T>
Tensor<T> roi_pool_backward(const std::vector<int>& feature_shape, const std::vector<int>& argmax,
                            const Tensor<T>& d_output);

// (N, F) x W(G, F)^T + b -> (N, G)
template <class T>
Tensor<T> linear(const Tensor<T>& x, std::span<const T> weights, std::span<const T> bias,
                 int out_features);

template <class T>
void linear_backward(const Tensor<T>& x, std::span<const T> weights, int out_features,
                     const Tensor<T>& d_output, Tensor<T>* d_input, std::span<T> d_weights,
                     std::span<T> d_bias);

template <class T>
T sigmoid(T x);

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);

constexpr double kLossEpsilon = 1e-7;

// Sigmoid cross entropy averaged over the n attributes of one ROI, with the
// prediction clamped to [eps, 1 - eps].
template <class T>
double phoc_loss(std::span<const T> predicted, std::span<const T> target);

struct LossResult {
  double loss = 0.0;  // summed over ROIs
  std::vector<double> per_roi;
};

// Batch loss over (N, n) probabilities; writes d loss / d logits = (p - t) / n.
template <class T>
LossResult phoc_loss_batch(const Tensor<T>& probabilities, const Tensor<T>& targets,
                           Tensor<T>* d_logits);

}  // namespace rphoc::layers
