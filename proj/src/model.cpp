#include "rphoc/model.hpp"

#include <cmath>
#include <json.hpp>
#include <random>

#include "rphoc/error.hpp"

namespace rphoc {

Architecture Architecture::desk_default(int output_dim) {
  using K = TrunkLayer::Kind;
  Architecture a;
  a.trunk = {{K::Conv, 32, 3}, {K::Relu}, {K::Conv, 32, 3}, {K::Relu}, {K::Pool},
             {K::Conv, 64, 3}, {K::Relu}, {K::Conv, 64, 3}, {K::Relu}, {K::Pool}};
  a.output_dim = output_dim;
  return a;
}

int Architecture::stride() const {
  int s = 1;
  for (const auto& l : trunk)
    if (l.kind == TrunkLayer::Kind::Pool) s *= 2;
  return s;
}

int Architecture::trunk_channels() const {
  int c = in_channels;
  for (const auto& l : trunk)
    if (l.kind == TrunkLayer::Kind::Conv) c = l.out_channels;
  return c;
}

void Architecture::validate() const {
  if (in_channels < 1) throw InvalidShape("architecture: in_channels must be >= 1");
  for (const auto& l : trunk)
    if (l.kind == TrunkLayer::Kind::Conv && (l.out_channels < 1 || l.kernel < 1 || l.kernel % 2 == 0))
      throw InvalidShape("architecture: conv layers need positive channels and an odd kernel");
  if (roi_grid_h < 1 || roi_grid_w < 1) throw InvalidShape("architecture: ROI grid must be >= 1x1");
  for (int h : head_hidden)
    if (h < 1) throw InvalidShape("architecture: head widths must be >= 1");
  if (output_dim < 1) throw InvalidShape("architecture: output_dim must be >= 1");
}

std::string Architecture::to_json() const {
  nlohmann::ordered_json j;
  j["in_channels"] = in_channels;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : trunk) {
    nlohmann::ordered_json e;
    switch (l.kind) {
      case TrunkLayer::Kind::Conv:
        e["type"] = "conv";
        e["out"] = l.out_channels;
        e["kernel"] = l.kernel;
        break;
      case TrunkLayer::Kind::Relu: e["type"] = "relu"; break;
      case TrunkLayer::Kind::Pool: e["type"] = "pool"; break;
    }
    layers.push_back(e);
  }
  j["trunk"] = layers;
  j["roi_grid"] = {roi_grid_h, roi_grid_w};
  j["head_hidden"] = head_hidden;
  j["output_dim"] = output_dim;
  j["input_mean"] = input_mean;
  return j.dump();
}

Architecture Architecture::from_json(const std::string& text) {
  Architecture a;
  try {
    const auto j = nlohmann::json::parse(text);
    a.in_channels = j.value("in_channels", 1);
    if (j.contains("trunk")) {
      for (const auto& e : j.at("trunk")) {
        const auto type = e.at("type").get<std::string>();
        if (type == "conv")
          a.trunk.push_back({TrunkLayer::Kind::Conv, e.at("out").get<int>(), e.value("kernel", 3)});
        else if (type == "relu")
          a.trunk.push_back({TrunkLayer::Kind::Relu});
        else if (type == "pool")
          a.trunk.push_back({TrunkLayer::Kind::Pool});
        else
          throw InvalidShape("architecture: unknown layer type '" + type + "'");
      }
    } else {
      a.trunk = desk_default().trunk;
    }
    if (j.contains("roi_grid")) {
      a.roi_grid_h = j.at("roi_grid").at(0).get<int>();
      a.roi_grid_w = j.at("roi_grid").at(1).get<int>();
    }
    if (j.contains("head_hidden")) a.head_hidden = j.at("head_hidden").get<std::vector<int>>();
    a.output_dim = j.value("output_dim", 604);
    a.input_mean = j.value("input_mean", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("architecture: ") + e.what());
  }
  a.validate();
  return a;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

ModelParams make_param_layout(const Architecture& arch) {
  arch.validate();
  ModelParams p;
  p.arch = arch;
  const auto add = [&](std::string name, std::vector<int> shape) {
    ParamTensor t{std::move(name), std::move(shape), {}};
    t.values.assign(static_cast<size_t>(Tensor<double>::numel(t.shape)), 0.0);
    p.tensors.push_back(std::move(t));
  };
  int channels = arch.in_channels;
  int conv = 0;
  for (const auto& l : arch.trunk) {
    if (l.kind != TrunkLayer::Kind::Conv) continue;
    const auto prefix = "conv" + std::to_string(conv++);
    add(prefix + ".weight", {l.out_channels, channels, l.kernel, l.kernel});
    add(prefix + ".bias", {l.out_channels});
    channels = l.out_channels;
  }
  int features = arch.pooled_features();
  std::vector<int> widths = arch.head_hidden;
  widths.push_back(arch.output_dim);
  for (size_t i = 0; i < widths.size(); ++i) {
    const auto prefix = "fc" + std::to_string(i);
    add(prefix + ".weight", {widths[i], features});
    add(prefix + ".bias", {widths[i]});
    features = widths[i];
  }
  return p;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed, bool zero_output_layer) {
  ModelParams p = make_param_layout(arch);
  std::mt19937_64 rng(seed);
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    auto& t = p.tensors[i];
    if (t.shape.size() == 1) continue;  // bias
    const bool output_layer = i + 2 == p.tensors.size();
    if (output_layer && zero_output_layer) continue;
    double fan_in = 1, fan_out = t.shape[0];
    for (size_t d = 1; d < t.shape.size(); ++d) fan_in *= t.shape[d];
    for (size_t d = 2; d < t.shape.size(); ++d) fan_out *= t.shape[d];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    // Float-representable so single-precision training starts from the exact values.
    for (auto& v : t.values) v = static_cast<float>(dist(rng));
  }
  return p;
}

template <class T>
Network<T>::Network(const ModelParams& params)
    : arch_(params.arch), phoc_hash_(params.phoc_hash), iteration_(params.iteration) {
  const ModelParams layout = make_param_layout(arch_);
  if (layout.tensors.size() != params.tensors.size())
    throw InvalidShape("model: parameter tensor count does not match architecture");
  for (size_t i = 0; i < layout.tensors.size(); ++i) {
    const auto& want = layout.tensors[i];
    const auto& got = params.tensors[i];
    if (want.shape != got.shape || got.values.size() != want.values.size())
      throw InvalidShape("model: parameter '" + want.name + "' has the wrong shape");
    names_.push_back(want.name);
    shapes_.push_back(want.shape);
    values_.emplace_back(got.values.begin(), got.values.end());
    grads_.emplace_back(got.values.size(), T(0));
  }
  int idx = 0;
  for (const auto& l : arch_.trunk) {
    trunk_param_index_.push_back(l.kind == TrunkLayer::Kind::Conv ? idx : -1);
    if (l.kind == TrunkLayer::Kind::Conv) idx += 2;
  }
  for (size_t i = 0; i <= arch_.head_hidden.size(); ++i, idx += 2) head_param_index_.push_back(idx);
}

template <class T>
ModelParams Network<T>::export_params() const {
  ModelParams p;
  p.arch = arch_;
  p.phoc_hash = phoc_hash_;
  p.iteration = iteration_;
  for (size_t i = 0; i < values_.size(); ++i)
    p.tensors.push_back({names_[i], shapes_[i], std::vector<double>(values_[i].begin(), values_[i].end())});
  return p;
}

template <class T>
void Network<T>::zero_grads() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), T(0));
}

template <class T>
Tensor<T> Network<T>::prepare_input(const GrayImage& tile) const {
  Tensor<T> t({1, tile.height(), tile.width()});
  const auto px = tile.pixels();
  const double mean = arch_.input_mean;
  for (size_t i = 0; i < px.size(); ++i) t.data[i] = static_cast<T>(px[i] / 255.0 - mean);
  return t;
}

template <class T>
Tensor<T> Network<T>::trunk(const Tensor<T>& input) const {
  check_rank(input, 3, "trunk");
  if (input.dim(0) != arch_.in_channels) throw InvalidShape("trunk: input channel mismatch");
  Tensor<T> x = input;
  std::vector<int> argmax;
  for (size_t li = 0; li < arch_.trunk.size(); ++li) {
    const auto& l = arch_.trunk[li];
    switch (l.kind) {
      case TrunkLayer::Kind::Conv: {
        const int p = trunk_param_index_[li];
        x = layers::conv2d<T>(x, values_[p], values_[p + 1], l.out_channels, l.kernel, l.kernel / 2);
        break;
      }
      case TrunkLayer::Kind::Relu: x = layers::relu(x); break;
      case TrunkLayer::Kind::Pool: x = layers::maxpool2x2(x, argmax); break;
    }
  }
  return x;
}

template <class T>
Tensor<T> Network<T>::head_logits(const Tensor<T>& features, std::span<const BBox> rois) const {
  std::vector<int> argmax;
  Tensor<T> x = layers::roi_pool(features, rois, arch_.roi_grid_h, arch_.roi_grid_w, arch_.stride(), argmax);
  for (size_t i = 0; i < head_param_index_.size(); ++i) {
    const int p = head_param_index_[i];
    x = layers::linear<T>(x, values_[p], values_[p + 1], shapes_[p][0]);
    if (i + 1 < head_param_index_.size()) x = layers::relu(x);
  }
  return x;
}

template <class T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, std::span<const BBox> rois) const {
  if (rois.empty()) return Tensor<T>({0, arch_.output_dim});
  return layers::sigmoid(head_logits(trunk(input), rois));
}

template <class T>
Tensor<T> Network<T>::forward(const GrayImage& tile, std::span<const BBox> rois) const {
  return forward(prepare_input(tile), rois);
}

template <class T>
layers::LossResult Network<T>::forward_backward(const Tensor<T>& input, std::span<const BBox> rois,
                                                const Tensor<T>& targets) {
  check_rank(input, 3, "forward_backward");
  if (targets.shape != std::vector<int>{static_cast<int>(rois.size()), arch_.output_dim})
    throw InvalidInput("forward_backward: targets must be (N_rois, output_dim)");

  // Trunk, keeping every layer input.
  std::vector<Tensor<T>> trunk_inputs;
  std::vector<std::vector<int>> pool_argmax(arch_.trunk.size());
  Tensor<T> x = input;
  for (size_t li = 0; li < arch_.trunk.size(); ++li) {
    const auto& l = arch_.trunk[li];
    trunk_inputs.push_back(x);
    switch (l.kind) {
      case TrunkLayer::Kind::Conv: {
        const int p = trunk_param_index_[li];
        x = layers::conv2d<T>(x, values_[p], values_[p + 1], l.out_channels, l.kernel, l.kernel / 2);
        break;
      }
      case TrunkLayer::Kind::Relu: x = layers::relu(x); break;
      case TrunkLayer::Kind::Pool: x = layers::maxpool2x2(x, pool_argmax[li]); break;
    }
  }
  const std::vector<int> feature_shape = x.shape;

  std::vector<int> roi_argmax;
  std::vector<Tensor<T>> head_inputs;
  Tensor<T> h = layers::roi_pool(x, rois, arch_.roi_grid_h, arch_.roi_grid_w, arch_.stride(), roi_argmax);
  std::vector<Tensor<T>> pre_relu;
  for (size_t i = 0; i < head_param_index_.size(); ++i) {
    const int p = head_param_index_[i];
    head_inputs.push_back(h);
    h = layers::linear<T>(h, values_[p], values_[p + 1], shapes_[p][0]);
    if (i + 1 < head_param_index_.size()) {
      pre_relu.push_back(h);
      h = layers::relu(h);
    }
  }
  const Tensor<T> probs = layers::sigmoid(h);
  Tensor<T> grad;
  auto loss = layers::phoc_loss_batch(probs, targets, &grad);

  for (size_t i = head_param_index_.size(); i-- > 0;) {
    if (i + 1 < head_param_index_.size()) grad = layers::relu_backward(pre_relu[i], grad);
    const int p = head_param_index_[i];
    Tensor<T> d_in;
    layers::linear_backward<T>(head_inputs[i], values_[p], shapes_[p][0], grad, &d_in, grads_[p],
                               grads_[p + 1]);
    grad = std::move(d_in);
  }
  grad = layers::roi_pool_backward(feature_shape, roi_argmax, grad);

  for (size_t li = arch_.trunk.size(); li-- > 0;) {
    const auto& l = arch_.trunk[li];
    switch (l.kind) {
      case TrunkLayer::Kind::Conv: {
        const int p = trunk_param_index_[li];
        const size_t before = grads_[p].size();
        std::vector<T> dk(before, T(0));
        Tensor<T> d_in;
        layers::conv2d_backward<T>(trunk_inputs[li], values_[p], l.out_channels, l.kernel,
                                   l.kernel / 2, grad, li == 0 ? nullptr : &d_in, dk, grads_[p + 1]);
        const T sign = fault_ == BackwardFault::ConvKernelSignFlip ? T(-1) : T(1);
        for (size_t k = 0; k < before; ++k) grads_[p][k] += sign * dk[k];
        grad = std::move(d_in);
        break;
      }
      case TrunkLayer::Kind::Relu: grad = layers::relu_backward(trunk_inputs[li], grad); break;
      case TrunkLayer::Kind::Pool:
        grad = layers::maxpool2x2_backward(trunk_inputs[li].shape, pool_argmax[li], grad);
        break;
    }
  }
  return loss;
}

namespace {

struct Fnv {
  std::uint64_t h = 14695981039346656037ull;
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i, v >>= 8) {
      h ^= v & 0xff;
      h *= 1099511628211ull;
    }
  }
  template <class T>
  void mask(const Tensor<T>& x) {
    for (const T v : x.data) add(v > T(0));
  }
  void indices(const std::vector<int>& idx) {
    for (int v : idx) add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v)));
  }
};

}  // namespace

template <class T>
std::pair<double, std::uint64_t> Network<T>::loss_and_signature(const Tensor<T>& input,
                                                                std::span<const BBox> rois,
                                                                const Tensor<T>& targets) const {
  Fnv sig;
  Tensor<T> x = input;
  for (size_t li = 0; li < arch_.trunk.size(); ++li) {
    const auto& l = arch_.trunk[li];
    switch (l.kind) {
      case TrunkLayer::Kind::Conv: {
        const int p = trunk_param_index_[li];
        x = layers::conv2d<T>(x, values_[p], values_[p + 1], l.out_channels, l.kernel, l.kernel / 2);
        break;
      }
      case TrunkLayer::Kind::Relu:
        sig.mask(x);
        x = layers::relu(x);
        break;
      case TrunkLayer::Kind::Pool: {
        std::vector<int> argmax;
        x = layers::maxpool2x2(x, argmax);
        sig.indices(argmax);
        break;
      }
    }
  }
  std::vector<int> argmax;
  Tensor<T> h = layers::roi_pool(x, rois, arch_.roi_grid_h, arch_.roi_grid_w, arch_.stride(), argmax);
  sig.indices(argmax);
  for (size_t i = 0; i < head_param_index_.size(); ++i) {
    const int p = head_param_index_[i];
    h = layers::linear<T>(h, values_[p], values_[p + 1], shapes_[p][0]);
    if (i + 1 < head_param_index_.size()) {
      sig.mask(h);
      h = layers::relu(h);
    }
  }
  const auto loss = layers::phoc_loss_batch(layers::sigmoid(h), targets, static_cast<Tensor<T>*>(nullptr));
  return {loss.loss, sig.h};
}

template class Network<float>;
template class Network<double>;

}  // namespace rphoc
