#include "rphoc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

namespace rphoc {

GradCheckBatch random_grad_check_batch(const Architecture& arch, int height, int width, int rois,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradCheckBatch batch;
  batch.input = Tensor<double>({arch.in_channels, height, width});
  std::uniform_real_distribution<double> value(-0.5, 0.5);
  for (auto& v : batch.input.data) v = value(rng);

  for (int r = 0; r < rois; ++r) {
    std::uniform_int_distribution<int> w(1, width), h(1, height);
    BBox b;
    b.w = w(rng);
    b.h = h(rng);
    b.x = std::uniform_int_distribution<int>(0, width - b.w)(rng);
    b.y = std::uniform_int_distribution<int>(0, height - b.h)(rng);
    batch.rois.push_back(b);
  }
  batch.targets = Tensor<double>({rois, arch.output_dim});
  std::bernoulli_distribution bit(0.3);
  for (auto& v : batch.targets.data) v = bit(rng) ? 1.0 : 0.0;
  return batch;
}

GradCheckReport grad_check(const ModelParams& params, const GradCheckBatch& batch,
                           const GradCheckOptions& opts) {
  Network<double> net(params);
  net.set_fault(opts.fault);
  net.zero_grads();
  net.forward_backward(batch.input, batch.rois, batch.targets);
  const auto analytic = net.grads();

  const auto [base_loss, base_sig] = net.loss_and_signature(batch.input, batch.rois, batch.targets);
  (void)base_loss;

  GradCheckReport report;
  std::mt19937_64 rng(opts.seed);
  auto& values = net.values();
  const auto exported = net.export_params();
  for (size_t p = 0; p < values.size(); ++p) {
    std::vector<size_t> idx(values[p].size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);

    TensorGradError err{exported.tensors[p].name, 0, 0.0};
    for (size_t k : idx) {
      if (err.checked >= opts.samples_per_tensor) break;
      const double saved = values[p][k];
      std::optional<double> numeric;
      double step = opts.step;
      for (int attempt = 0; attempt < 4 && !numeric; ++attempt, step /= 4.0) {
        values[p][k] = saved + step;
        const auto up = net.loss_and_signature(batch.input, batch.rois, batch.targets);
        values[p][k] = saved - step;
        const auto down = net.loss_and_signature(batch.input, batch.rois, batch.targets);
        values[p][k] = saved;
        if (up.second == base_sig && down.second == base_sig)
          numeric = (up.first - down.first) / (2.0 * step);
      }
      if (!numeric) {
        ++report.skipped_kinks;
        continue;
      }
      const double a = analytic[p][k];
      const double rel = std::abs(a - *numeric) / std::max(1e-8, std::abs(a) + std::abs(*numeric));
      err.max_rel_error = std::max(err.max_rel_error, rel);
      ++err.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
    report.tensors.push_back(err);
  }
  return report;
}

}  // namespace rphoc
