#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dnres/kernels.hpp"
#include "dnres/rng.hpp"

namespace dnres {

enum class LayerKind { conv, depthwise_conv, relu, resblock, ds_resblock };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

/// Structural description of one node. For conv/depthwise_conv the channel
/// and kernel fields describe the single convolution; for blocks they give
/// the block width (in == out) and its 3x3 kernel.
struct LayerNode {
  LayerKind kind = LayerKind::relu;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int pad = 0;

  bool operator==(const LayerNode&) const = default;
};

struct ProvenanceEntry {
  int stage = 0;
  std::string event;  // "base", "insert", "evolve"
  std::string node;
  std::string replaced;

  bool operator==(const ProvenanceEntry&) const = default;
};

/// One node with its parameters. Which members are populated depends on kind:
///   conv            conv
///   depthwise_conv  depthwise
///   resblock        conv (first 3x3), conv2 (second 3x3)
///   ds_resblock     depthwise (3x3), conv (1x1 pointwise)
template <class T>
struct Layer {
  LayerNode node;
  ConvParams<T> conv;
  ConvParams<T> conv2;
  DepthwiseConvParams<T> depthwise;
};

/// Activations kept by forward() for backward().
template <class T>
struct LayerCache {
  std::vector<Tensor<T>> saved;
  std::vector<std::size_t> relu_inputs;  // indices into saved
};

template <class T>
using ForwardCache = std::vector<LayerCache<T>>;

/// Allocates zero-filled parameters matching the node.
template <class T>
Layer<T> make_layer(const LayerNode& node);

template <class T>
Tensor<T> layer_forward(const Layer<T>& layer, const Tensor<T>& x, LayerCache<T>* cache);
/// Returns the gradient w.r.t. the layer input and accumulates parameter
/// gradients into grads (one vector per parameter tensor of the layer).
template <class T>
Tensor<T> layer_backward(const Layer<T>& layer, const Tensor<T>& grad_out, const LayerCache<T>& cache,
                         std::span<std::vector<T>> grads);

template <class T>
std::vector<std::span<T>> layer_parameters(Layer<T>& layer);
template <class T>
std::vector<std::span<const T>> layer_parameters(const Layer<T>& layer);
std::vector<std::string> layer_parameter_names(const LayerNode& node);

/// DN-ResNet / DS-DN-ResNet: conv 1->64 9x9, relu, conv 64->32 5x5, relu,
/// blocks..., conv 32->1 5x5. Build and mutation functions below return new
/// networks; a network is never modified in place by them.
template <class T>
class BasicNetwork {
 public:
  BasicNetwork() = default;
  BasicNetwork(std::vector<Layer<T>> layers, int stage_count, std::vector<ProvenanceEntry> provenance);

  const std::vector<Layer<T>>& layers() const noexcept { return layers_; }
  std::vector<Layer<T>>& mutable_layers() noexcept { return layers_; }
  std::vector<LayerNode> topology() const;
  int stage_count() const noexcept { return stage_count_; }
  const std::vector<ProvenanceEntry>& provenance() const noexcept { return provenance_; }

  int block_count() const;
  /// Convolutional layer count with every block counted as two.
  int layer_count() const { return 3 + 2 * block_count(); }
  /// Indices into layers() of the resblock / ds_resblock nodes, head to tail.
  std::vector<std::size_t> block_indices() const;
  /// Total spatial shrink per side of the valid (unpadded) convolutions.
  int border() const;

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x, ForwardCache<T>& cache) const;
  /// Accumulates into grads (see make_gradients) and returns d loss / d input.
  Tensor<T> backward(const Tensor<T>& grad_out, const ForwardCache<T>& cache,
                     std::vector<std::vector<T>>& grads) const;

  std::vector<std::span<T>> parameters();
  std::vector<std::span<const T>> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::vector<std::vector<T>> make_gradients() const;

  template <class U>
  BasicNetwork<U> cast() const;

  bool operator==(const BasicNetwork&) const;

 private:
  std::vector<Layer<T>> layers_;
  int stage_count_ = 0;
  std::vector<ProvenanceEntry> provenance_;
};

using Network = BasicNetwork<float>;
using NetworkD = BasicNetwork<double>;

inline constexpr double kInitStddev = 0.001;
inline constexpr int kBlockWidth = 32;

template <class T>
BasicNetwork<T> build_base(Rng& rng);
/// Appends one ResBlock just before the output conv. Existing weights are
/// copied unchanged; the new block is drawn from N(0, 0.001^2), biases 0.
template <class T>
BasicNetwork<T> insert_resblock(const BasicNetwork<T>& net, Rng& rng);
/// Replaces a ResBlock, addressed from the tail (0 = the block next to the
/// output conv), by a freshly initialised DS-ResBlock.
template <class T>
BasicNetwork<T> evolve_block_to_ds(const BasicNetwork<T>& net, int index_from_tail, Rng& rng);

/// Zeroes every weight and bias of the layer (used for transparency checks
/// and hand-built identity networks).
template <class T>
void zero_parameters(Layer<T>& layer);

enum class ParamCountMode { weights_only, with_bias };
enum class MacConvention {
  full_resolution,  // every layer evaluated at the input area (size-preserving inference)
  valid,            // exact output extents of the unpadded base convolutions
};

std::uint64_t count_params(const std::vector<LayerNode>& topology, ParamCountMode mode);
std::uint64_t count_macs(const std::vector<LayerNode>& topology, std::size_t height, std::size_t width,
                         MacConvention convention = MacConvention::full_resolution);

template <class T>
std::uint64_t count_params(const BasicNetwork<T>& net, ParamCountMode mode) {
  return count_params(net.topology(), mode);
}
template <class T>
std::uint64_t count_macs(const BasicNetwork<T>& net, std::size_t height, std::size_t width,
                         MacConvention convention = MacConvention::full_resolution) {
  return count_macs(net.topology(), height, width, convention);
}

/// Topology skeleton without weights, e.g. for counting hypothetical nets.
std::vector<LayerNode> dn_resnet_topology(int resblocks, int ds_blocks_from_tail = 0);

std::string describe(const std::vector<LayerNode>& topology);

}  // namespace dnres
