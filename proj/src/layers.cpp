#include "rphoc/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace rphoc::layers {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements; conv layers walk the output in row blocks.
constexpr long long kColumnBudget = 1 << 20;

int rows_per_block(int channels, int kernel, int width, int height) {
  const long long per_row = static_cast<long long>(channels) * kernel * kernel * width;
  return static_cast<int>(std::clamp<long long>(kColumnBudget / std::max(1LL, per_row), 1, height));
}

// Unrolls output rows [r0, r1) into a (C*k*k, (r1-r0)*W) patch matrix.
template <class T>
void im2col(const Tensor<T>& input, int kernel, int pad, int r0, int r1, AlignedVector<T>& cols) {
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int rows = r1 - r0;
  const size_t ncols = static_cast<size_t>(rows) * W;
  cols.resize(static_cast<size_t>(C) * kernel * kernel * ncols);
  T* out = cols.data();
  for (int c = 0; c < C; ++c) {
    const T* plane = input.ptr() + static_cast<size_t>(c) * H * W;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx, out += ncols) {
        for (int r = 0; r < rows; ++r) {
          const int iy = r0 + r + ky - pad;
          T* dst = out + static_cast<size_t>(r) * W;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + W, T(0));
            continue;
          }
          const T* src = plane + static_cast<size_t>(iy) * W;
          const int shift = kx - pad;
          const int lo = std::max(0, -shift), hi = std::min(W, W - shift);
          std::fill(dst, dst + std::max(0, lo), T(0));
          if (hi > lo) std::copy(src + lo + shift, src + hi + shift, dst + lo);
          std::fill(dst + std::max(lo, hi), dst + W, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im_add(const AlignedVector<T>& cols, int kernel, int pad, int r0, int r1, Tensor<T>& d_input) {
  const int C = d_input.dim(0), H = d_input.dim(1), W = d_input.dim(2);
  const int rows = r1 - r0;
  const size_t ncols = static_cast<size_t>(rows) * W;
  const T* in = cols.data();
  for (int c = 0; c < C; ++c) {
    T* plane = d_input.ptr() + static_cast<size_t>(c) * H * W;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx, in += ncols) {
        for (int r = 0; r < rows; ++r) {
          const int iy = r0 + r + ky - pad;
          if (iy < 0 || iy >= H) continue;
          const T* src = in + static_cast<size_t>(r) * W;
          T* dst = plane + static_cast<size_t>(iy) * W;
          const int shift = kx - pad;
          const int lo = std::max(0, -shift), hi = std::min(W, W - shift);
          for (int x = lo; x < hi; ++x) dst[x + shift] += src[x];
        }
      }
    }
  }
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, std::span<const T> kernels, std::span<const T> bias,
                 int out_channels, int kernel, int pad) {
  check_rank(input, 3, "conv2d");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const long long K = static_cast<long long>(C) * kernel * kernel;
  if (kernel < 1 || pad < 0 || static_cast<long long>(kernels.size()) != K * out_channels ||
      static_cast<int>(bias.size()) != out_channels)
    throw InvalidShape("conv2d: kernel/bias shape does not match input channels");
  const int Ho = H + 2 * pad - kernel + 1, Wo = W + 2 * pad - kernel + 1;
  if (Ho < 1 || Wo < 1) throw InvalidShape("conv2d: kernel larger than padded input");
  if (Ho != H || Wo != W) throw InvalidShape("conv2d: only size-preserving padding is supported");

  Tensor<T> out({out_channels, H, W});
  const ConstMapMat<T> wmat(kernels.data(), out_channels, K);
  const int block = rows_per_block(C, kernel, W, H);
  AlignedVector<T> cols;
  for (int r0 = 0; r0 < H; r0 += block) {
    const int r1 = std::min(H, r0 + block);
    im2col(input, kernel, pad, r0, r1, cols);
    const long long n = static_cast<long long>(r1 - r0) * W;
    const ConstMapMat<T> cmat(cols.data(), K, n);
    StridedMap<T> omat(out.ptr() + static_cast<size_t>(r0) * W, out_channels, n,
                       Eigen::OuterStride<>(static_cast<long long>(H) * W));
    omat.noalias() = wmat * cmat;
  }
  for (int o = 0; o < out_channels; ++o) {
    T* plane = out.ptr() + static_cast<size_t>(o) * H * W;
    std::for_each(plane, plane + static_cast<size_t>(H) * W, [b = bias[o]](T& v) { v += b; });
  }
  return out;
}

template <class T>
void conv2d_backward(const Tensor<T>& input, std::span<const T> kernels, int out_channels,
                     int kernel, int pad, const Tensor<T>& d_output, Tensor<T>* d_input,
                     std::span<T> d_kernels, std::span<T> d_bias) {
  check_rank(input, 3, "conv2d_backward");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const long long K = static_cast<long long>(C) * kernel * kernel;
  if (d_output.shape != std::vector<int>{out_channels, H, W} ||
      static_cast<long long>(d_kernels.size()) != K * out_channels ||
      static_cast<int>(d_bias.size()) != out_channels)
    throw InvalidShape("conv2d_backward: gradient shapes do not match");

  if (d_input) *d_input = Tensor<T>(input.shape);
  const ConstMapMat<T> wmat(kernels.data(), out_channels, K);
  MapMat<T> dw(d_kernels.data(), out_channels, K);
  const int block = rows_per_block(C, kernel, W, H);
  AlignedVector<T> cols, dcols;
  for (int r0 = 0; r0 < H; r0 += block) {
    const int r1 = std::min(H, r0 + block);
    const long long n = static_cast<long long>(r1 - r0) * W;
    im2col(input, kernel, pad, r0, r1, cols);
    const ConstMapMat<T> cmat(cols.data(), K, n);
    const ConstStridedMap<T> dy(d_output.ptr() + static_cast<size_t>(r0) * W, out_channels, n,
                                Eigen::OuterStride<>(static_cast<long long>(H) * W));
    dw.noalias() += dy * cmat.transpose();
    if (d_input) {
      dcols.resize(static_cast<size_t>(K * n));
      MapMat<T> dc(dcols.data(), K, n);
      dc.noalias() = wmat.transpose() * dy;
      col2im_add(dcols, kernel, pad, r0, r1, *d_input);
    }
  }
  for (int o = 0; o < out_channels; ++o) {
    const T* plane = d_output.ptr() + static_cast<size_t>(o) * H * W;
    T acc = 0;
    for (size_t i = 0; i < static_cast<size_t>(H) * W; ++i) acc += plane[i];
    d_bias[o] += acc;
  }
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& d_output) {
  if (input.shape != d_output.shape) throw InvalidShape("relu_backward: shape mismatch");
  Tensor<T> d = d_output;
  for (size_t i = 0; i < d.data.size(); ++i)
    if (!(input.data[i] > T(0))) d.data[i] = T(0);
  return d;
}

template <class T>
Tensor<T> maxpool2x2(const Tensor<T>& input, std::vector<int>& argmax) {
  check_rank(input, 3, "maxpool2x2");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  if (H < 2 || W < 2) throw InvalidShape("maxpool2x2: spatial dims must be >= 2");
  const int Ho = H / 2, Wo = W / 2;
  Tensor<T> out({C, Ho, Wo});
  argmax.assign(out.size(), 0);
  size_t o = 0;
  for (int c = 0; c < C; ++c) {
    const size_t plane = static_cast<size_t>(c) * H * W;
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Wo; ++x, ++o) {
        size_t best = plane + static_cast<size_t>(2 * y) * W + 2 * x;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const size_t idx = plane + static_cast<size_t>(2 * y + dy) * W + 2 * x + dx;
            if (input.data[idx] > input.data[best]) best = idx;
          }
        out.data[o] = input.data[best];
        argmax[o] = static_cast<int>(best);
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> maxpool2x2_backward(const std::vector<int>& input_shape, const std::vector<int>& argmax,
                              const Tensor<T>& d_output) {
  if (argmax.size() != d_output.size()) throw InvalidShape("maxpool2x2_backward: size mismatch");
  Tensor<T> d(input_shape);
  for (size_t o = 0; o < argmax.size(); ++o) d.data[argmax[o]] += d_output.data[o];
  return d;
}

FeatureWindow map_roi(const BBox& roi, int stride, int map_height, int map_width) {
  if (stride < 1) throw InvalidRoi("map_roi: stride must be >= 1");
  if (roi.x < 0 || roi.y < 0 || roi.w < 1 || roi.h < 1)
    throw InvalidRoi("ROI has negative origin or empty extent");
  const auto ceil_div = [](long long a, long long b) { return static_cast<int>((a + b - 1) / b); };
  FeatureWindow win;
  win.x = roi.x / stride;
  win.y = roi.y / stride;
  if (win.x >= map_width || win.y >= map_height)
    throw InvalidRoi("ROI lies outside the feature map");
  win.w = std::max(1, ceil_div(static_cast<long long>(roi.x) + roi.w, stride) - win.x);
  win.h = std::max(1, ceil_div(static_cast<long long>(roi.y) + roi.h, stride) - win.y);
  win.w = std::min(win.w, map_width - win.x);
  win.h = std::min(win.h, map_height - win.y);
  return win;
}

template <class T>
Tensor<T> roi_pool(const Tensor<T>& features, std::span<const BBox> rois, int grid_h, int grid_w,
                   int stride, std::vector<int>& argmax) {
  check_rank(features, 3, "roi_pool");
  if (grid_h < 1 || grid_w < 1) throw InvalidShape("roi_pool: grid must be at least 1x1");
  const int C = features.dim(0), H = features.dim(1), W = features.dim(2);
  const int N = static_cast<int>(rois.size());
  const int per_roi = C * grid_h * grid_w;
  Tensor<T> out({N, per_roi});
  argmax.assign(out.size(), 0);
  for (int n = 0; n < N; ++n) {
    FeatureWindow win;
    try {
      win = map_roi(rois[n], stride, H, W);
    } catch (const InvalidRoi& e) {
      throw InvalidRoi(std::string(e.what()) + " (roi " + std::to_string(n) + ")", n);
    }
    size_t o = static_cast<size_t>(n) * per_roi;
    for (int c = 0; c < C; ++c) {
      const size_t plane = static_cast<size_t>(c) * H * W;
      for (int i = 0; i < grid_h; ++i) {
        const int y0 = win.y + (i * win.h) / grid_h;
        const int y1 = win.y + ((i + 1) * win.h + grid_h - 1) / grid_h;
        for (int j = 0; j < grid_w; ++j, ++o) {
          const int x0 = win.x + (j * win.w) / grid_w;
          const int x1 = win.x + ((j + 1) * win.w + grid_w - 1) / grid_w;
          size_t best = plane + static_cast<size_t>(y0) * W + x0;
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
              const size_t idx = plane + static_cast<size_t>(y) * W + x;
              if (features.data[idx] > features.data[best]) best = idx;
            }
          out.data[o] = features.data[best];
          argmax[o] = static_cast<int>(best);
        }
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> roi_pool_backward(const std::vector<int>& feature_shape, const std::vector<int>& argmax,
                            const Tensor<T>& d_output) {
  if (argmax.size() != d_output.size()) throw InvalidShape("roi_pool_backward: size mismatch");
  Tensor<T> d(feature_shape);
  for (size_t o = 0; o < argmax.size(); ++o) d.data[argmax[o]] += d_output.data[o];
  return d;
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, std::span<const T> weights, std::span<const T> bias,
                 int out_features) {
  check_rank(x, 2, "linear");
  const int N = x.dim(0), F = x.dim(1);
  if (static_cast<long long>(weights.size()) != static_cast<long long>(F) * out_features ||
      static_cast<int>(bias.size()) != out_features)
    throw InvalidShape("linear: weight/bias shape does not match input features");
  Tensor<T> out({N, out_features});
  const ConstMapMat<T> xm(x.ptr(), N, F);
  const ConstMapMat<T> wm(weights.data(), out_features, F);
  MapMat<T> om(out.ptr(), N, out_features);
  om.noalias() = xm * wm.transpose();
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.data(), out_features);
  om.rowwise() += bv;
  return out;
}

template <class T>
void linear_backward(const Tensor<T>& x, std::span<const T> weights, int out_features,
                     const Tensor<T>& d_output, Tensor<T>* d_input, std::span<T> d_weights,
                     std::span<T> d_bias) {
  check_rank(x, 2, "linear_backward");
  const int N = x.dim(0), F = x.dim(1);
  if (d_output.shape != std::vector<int>{N, out_features} ||
      static_cast<long long>(d_weights.size()) != static_cast<long long>(F) * out_features ||
      static_cast<int>(d_bias.size()) != out_features)
    throw InvalidShape("linear_backward: gradient shapes do not match");
  const ConstMapMat<T> xm(x.ptr(), N, F);
  const ConstMapMat<T> wm(weights.data(), out_features, F);
  const ConstMapMat<T> dy(d_output.ptr(), N, out_features);
  MapMat<T> dw(d_weights.data(), out_features, F);
  dw.noalias() += dy.transpose() * xm;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(d_bias.data(), out_features);
  db += dy.colwise().sum();
  if (d_input) {
    *d_input = Tensor<T>({N, F});
    MapMat<T> dx(d_input->ptr(), N, F);
    dx.noalias() = dy * wm;
  }
}

template <class T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data) v = sigmoid(v);
  return out;
}

template <class T>
double phoc_loss(std::span<const T> predicted, std::span<const T> target) {
  if (predicted.size() != target.size() || predicted.empty())
    throw InvalidInput("phoc_loss: prediction and target lengths differ");
  double acc = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const double p = std::clamp(static_cast<double>(predicted[i]), kLossEpsilon, 1.0 - kLossEpsilon);
    const double t = target[i];
    acc += t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return -acc / static_cast<double>(predicted.size());
}

template <class T>
LossResult phoc_loss_batch(const Tensor<T>& probabilities, const Tensor<T>& targets,
                           Tensor<T>* d_logits) {
  if (probabilities.shape != targets.shape || probabilities.shape.size() != 2)
    throw InvalidInput("phoc_loss: prediction and target shapes differ");
  const int N = probabilities.dim(0), n = probabilities.dim(1);
  LossResult result;
  result.per_roi.resize(N);
  for (int r = 0; r < N; ++r) {
    result.per_roi[r] = phoc_loss<T>(probabilities.row(r), targets.row(r));
    result.loss += result.per_roi[r];
  }
  if (d_logits) {
    *d_logits = Tensor<T>(probabilities.shape);
    const T inv = T(1) / static_cast<T>(n);
    for (size_t i = 0; i < probabilities.size(); ++i)
      d_logits->data[i] = (probabilities.data[i] - targets.data[i]) * inv;
  }
  return result;
}

#define RPHOC_INSTANTIATE_LAYERS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, std::span<const T>, std::span<const T>, int, int,   \
                            int);                                                                 \
  template void conv2d_backward(const Tensor<T>&, std::span<const T>, int, int, int,              \
                                const Tensor<T>&, Tensor<T>*, std::span<T>, std::span<T>);       \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> maxpool2x2(const Tensor<T>&, std::vector<int>&);                             \
  template Tensor<T> maxpool2x2_backward(const std::vector<int>&, const std::vector<int>&,        \
                                         const Tensor<T>&);                                       \
  template Tensor<T> roi_pool(const Tensor<T>&, std::span<const BBox>, int, int, int,             \
                              std::vector<int>&);                                                 \
  template Tensor<T> roi_pool_backward(const std::vector<int>&, const std::vector<int>&,          \
                                       const Tensor<T>&);                                         \
  template Tensor<T> linear(const Tensor<T>&, std::span<const T>, std::span<const T>, int);       \
  template void linear_backward(const Tensor<T>&, std::span<const T>, int, const Tensor<T>&,      \
                                Tensor<T>*, std::span<T>, std::span<T>);                          \
  template T sigmoid(T);                                                                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                   \
  template double phoc_loss(std::span<const T>, std::span<const T>);                              \
  template LossResult phoc_loss_batch(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);

RPHOC_INSTANTIATE_LAYERS(float)
RPHOC_INSTANTIATE_LAYERS(double)

}  // namespace rphoc::layers
