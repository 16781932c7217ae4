#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gramtex/tensor.hpp"

namespace gramtex {

enum class LayerKind { Conv, Relu, MaxPool };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  // conv
  std::size_t kernel = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t pad = 0;
  // conv and maxpool
  std::size_t stride = 1;
  // maxpool
  std::size_t window = 0;

  static LayerSpec conv(std::string name, std::size_t kernel, std::size_t in, std::size_t out,
                        std::size_t pad = 1, std::size_t stride = 1);
  static LayerSpec relu(std::string name);
  static LayerSpec maxpool(std::string name, std::size_t window = 2, std::size_t stride = 2);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ConvParams {
  Tensor weights;  // kH x kW x Cin x Cout
  std::vector<double> bias;
};

/// Feed-forward conv/relu/maxpool stack with per-channel mean subtraction.
/// Immutable after construction except through `parameters()`, which the
/// training loop uses.
class Network {
 public:
  /// `params` holds one entry per conv layer, in layer order.
  Network(std::vector<LayerSpec> layers, std::vector<ConvParams> params, std::vector<double> mean);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<double>& mean() const { return mean_; }
  std::size_t input_channels() const { return mean_.size(); }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws UnknownLayer.
  std::size_t index_of(std::string_view name) const;

  /// Maps a VGG-style name onto this network. Exact names pass through;
  /// otherwise "reluB_K" / "convB_K" resolves to the same-kind layer of block
  /// B with the largest index not exceeding K (or the first in the block).
  std::string resolve(std::string_view name) const;

  /// Index into `parameters()` for a conv layer.
  std::size_t param_index(std::size_t layer) const;
  const ConvParams& conv_params(std::size_t layer) const;
  std::vector<ConvParams>& parameters() { return params_; }
  const std::vector<ConvParams>& parameters() const { return params_; }

  std::size_t output_channels(std::size_t layer) const;
  std::size_t cumulative_stride(std::size_t layer) const;
  std::size_t receptive_field(std::size_t layer) const;
  /// Spatial extent of a layer's output, or nullopt if the input is too small.
  std::optional<std::pair<std::size_t, std::size_t>> output_extent(std::size_t layer,
                                                                   std::size_t h,
                                                                   std::size_t w) const;

 private:
  void validate() const;

  std::vector<LayerSpec> layers_;
  std::vector<ConvParams> params_;
  std::vector<std::size_t> param_of_layer_;
  std::vector<double> mean_;
};

/// Per-call forward state. outputs[0] is the mean-subtracted input and
/// outputs[i + 1] is the output of layer i, up to the deepest requested layer.
struct ForwardCache {
  std::vector<Tensor> outputs;
  std::vector<std::vector<std::size_t>> argmax;  // per maxpool layer
  std::vector<std::size_t> input_dims;
};

class ActivationSet {
 public:
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }
  std::set<std::string> names() const;
  std::size_t size() const { return index_.size(); }
  std::size_t layer_index(std::string_view name) const;

  const ForwardCache& cache() const { return cache_; }

 private:
  friend ActivationSet forward_collect(const Network&, const Tensor&,
                                       const std::set<std::string>&);
  std::map<std::string, std::size_t> index_;
  ForwardCache cache_;
};

ActivationSet forward_collect(const Network& net, const Tensor& image,
                              const std::set<std::string>& layer_names);

using LayerGrads = std::map<std::string, Tensor>;

/// Gradient of sum_l <grads[l], activation_l> with respect to the raw image.
Tensor backward_to_input(const Network& net, const ActivationSet& acts, const LayerGrads& grads);

struct NetworkGrads {
  Tensor input;
  std::vector<ConvParams> params;  // aligned with Network::parameters()
};

/// As backward_to_input, additionally accumulating conv weight/bias gradients.
NetworkGrads backward_full(const Network& net, const ActivationSet& acts, const LayerGrads& grads);

// --- construction and persistence ---------------------------------------------

/// He fan-in initialization: weights ~ N(0, 2 / (kH * kW * Cin)), biases zero.
/// Each layer draws from its own stream keyed by the layer name.
Network init_random(std::vector<LayerSpec> spec, std::vector<double> mean, std::uint64_t seed);

/// Reference desk-scale network: five conv3x3/relu blocks with 8, 16, 32, 64,
/// 64 channels and 2x2 max pooling between blocks (relu1_1 ... relu5_1).
std::vector<LayerSpec> tex_net_small_spec();
std::vector<double> default_mean();
Network tex_net_small(std::uint64_t seed);

/// Binary "GMW1" weight file. Round trips bit-exactly.
void save_weights(const Network& net, const std::filesystem::path& path);
Network load_weights(const std::filesystem::path& path);

}  // namespace gramtex
