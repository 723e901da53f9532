#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rphoc/model.hpp"

namespace rphoc {

struct GradCheckBatch {
  Tensor<double> input;  // (C, H, W)
  std::vector<BBox> rois;
  Tensor<double> targets;  // (N, output_dim), binary
};

// Continuous random tile (tie-free with probability one), random ROIs inside
// it and random binary targets.
GradCheckBatch random_grad_check_batch(const Architecture& arch, int height, int width, int rois,
                                       std::uint64_t seed);

struct TensorGradError {
  std::string name;
  int checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  // Entries replaced because every probe step crossed a ReLU / max kink.
  int skipped_kinks = 0;
  std::vector<TensorGradError> tensors;
};

struct GradCheckOptions {
  int samples_per_tensor = 200;  // every entry when a tensor is smaller
  double step = 1e-4;
  std::uint64_t seed = 7;
  BackwardFault fault = BackwardFault::None;
};

// Central finite differences of the summed batch loss against the analytic
// gradients; error = |a - f| / max(1e-8, |a| + |f|). A probe whose +-step
// changes any ReLU mask or pooling argmax is retried with smaller steps, and
// the entry is swapped for another one if no step stays on one linear piece.
GradCheckReport grad_check(const ModelParams& params, const GradCheckBatch& batch,
                           const GradCheckOptions& opts = {});

}  // namespace rphoc
