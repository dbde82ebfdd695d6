#include "dnres/network.hpp"

#include <sstream>

namespace dnres {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::depthwise_conv: return "depthwise_conv";
    case LayerKind::relu: return "relu";
    case LayerKind::resblock: return "resblock";
    case LayerKind::ds_resblock: return "ds_resblock";
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string& name) {
  for (LayerKind k : {LayerKind::conv, LayerKind::depthwise_conv, LayerKind::relu, LayerKind::resblock,
                      LayerKind::ds_resblock}) {
    if (to_string(k) == name) return k;
  }
  throw FormatError("unknown layer kind '" + name + "'");
}

namespace {

template <class T>
void accumulate(std::vector<T>& dst, std::span<const T> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

template <class T>
void fill_gaussian(std::span<T> values, Rng& rng) {
  for (T& v : values) v = static_cast<T>(rng.normal() * kInitStddev);
}

LayerNode conv_node(std::string name, int in, int out, int k, int pad) {
  return {LayerKind::conv, std::move(name), in, out, k, pad};
}
LayerNode relu_node(std::string name) { return {LayerKind::relu, std::move(name), 0, 0, 0, 0}; }
LayerNode resblock_node(std::string name) {
  return {LayerKind::resblock, std::move(name), kBlockWidth, kBlockWidth, 3, 1};
}
LayerNode ds_resblock_node(std::string name) {
  return {LayerKind::ds_resblock, std::move(name), kBlockWidth, kBlockWidth, 3, 1};
}

// Gaussian weights, zero biases. Weight tensors are drawn in declaration order.
template <class T>
void initialize(Layer<T>& layer, Rng& rng) {
  auto params = layer_parameters(layer);
  for (std::size_t i = 0; i < params.size(); i += 2) fill_gaussian(params[i], rng);
}

void require_base_skeleton(const std::vector<LayerNode>& nodes, const char* op) {
  const bool ok = nodes.size() >= 5 && nodes[0].name == "c1" && nodes[2].name == "c2" &&
                  nodes.back().name == "c_out" && nodes[0].kind == LayerKind::conv &&
                  nodes[2].kind == LayerKind::conv && nodes.back().kind == LayerKind::conv;
  if (!ok) throw TopologyError(std::string(op) + ": network does not have the DN-ResNet skeleton");
}

}  // namespace

template <class T>
Layer<T> make_layer(const LayerNode& node) {
  Layer<T> layer;
  layer.node = node;
  const auto in = static_cast<std::size_t>(node.in_channels);
  const auto out = static_cast<std::size_t>(node.out_channels);
  const auto k = static_cast<std::size_t>(node.kernel);
  switch (node.kind) {
    case LayerKind::conv: layer.conv = ConvParams<T>(out, in, k, node.pad); break;
    case LayerKind::depthwise_conv: layer.depthwise = DepthwiseConvParams<T>(in, k, node.pad); break;
    case LayerKind::resblock:
      layer.conv = ConvParams<T>(out, in, k, node.pad);
      layer.conv2 = ConvParams<T>(out, out, k, node.pad);
      break;
    case LayerKind::ds_resblock:
      layer.depthwise = DepthwiseConvParams<T>(in, k, node.pad);
      layer.conv = ConvParams<T>(out, in, 1, 0);
      break;
    case LayerKind::relu: break;
  }
  return layer;
}


template <class T>
std::vector<std::span<T>> layer_parameters(Layer<T>& layer) {
  switch (layer.node.kind) {
    case LayerKind::conv: return {layer.conv.weights.data(), layer.conv.bias};
    case LayerKind::depthwise_conv: return {layer.depthwise.weights.data(), layer.depthwise.bias};
    case LayerKind::resblock:
      return {layer.conv.weights.data(), layer.conv.bias, layer.conv2.weights.data(), layer.conv2.bias};
    case LayerKind::ds_resblock:
      return {layer.depthwise.weights.data(), layer.depthwise.bias, layer.conv.weights.data(), layer.conv.bias};
    case LayerKind::relu: return {};
  }
  return {};
}

template <class T>
std::vector<std::span<const T>> layer_parameters(const Layer<T>& layer) {
  auto mutable_spans = layer_parameters(const_cast<Layer<T>&>(layer));
  return std::vector<std::span<const T>>(mutable_spans.begin(), mutable_spans.end());
}

std::vector<std::string> layer_parameter_names(const LayerNode& node) {
  const std::string& n = node.name;
  switch (node.kind) {
    case LayerKind::conv:
    case LayerKind::depthwise_conv: return {n + ".weight", n + ".bias"};
    case LayerKind::resblock: return {n + ".conv1.weight", n + ".conv1.bias", n + ".conv2.weight", n + ".conv2.bias"};
    case LayerKind::ds_resblock:
      return {n + ".depthwise.weight", n + ".depthwise.bias", n + ".pointwise.weight", n + ".pointwise.bias"};
    case LayerKind::relu: return {};
  }
  return {};
}

template <class T>
Tensor<T> layer_forward(const Layer<T>& layer, const Tensor<T>& x, LayerCache<T>* cache) {
  if (cache) {
    cache->saved.clear();
    cache->relu_inputs.clear();
  }
  switch (layer.node.kind) {
    case LayerKind::conv:
      if (cache) cache->saved = {x};
      return conv2d_forward(x, layer.conv);
    case LayerKind::depthwise_conv:
      if (cache) cache->saved = {x};
      return depthwise_conv2d_forward(x, layer.depthwise);
    case LayerKind::relu:
      if (cache) {
        cache->saved = {x};
        cache->relu_inputs = {0};
      }
      return relu_forward(x);
    case LayerKind::resblock: {
      Tensor<T> a = conv2d_forward(x, layer.conv);
      Tensor<T> r = relu_forward(a);
      Tensor<T> out = conv2d_forward(r, layer.conv2);
      add_inplace(out, x);
      if (cache) {
        cache->saved = {x, std::move(a), std::move(r)};
        cache->relu_inputs = {1};
      }
      return out;
    }
    case LayerKind::ds_resblock: {
      Tensor<T> d = depthwise_conv2d_forward(x, layer.depthwise);
      Tensor<T> rd = relu_forward(d);
      Tensor<T> p = conv2d_forward(rd, layer.conv);
      Tensor<T> out = relu_forward(p);
      add_inplace(out, x);
      if (cache) {
        cache->saved = {x, std::move(d), std::move(rd), std::move(p)};
        cache->relu_inputs = {1, 3};
      }
      return out;
    }
  }
  throw TopologyError("layer_forward: unknown layer kind");
}

template <class T>
Tensor<T> layer_backward(const Layer<T>& layer, const Tensor<T>& grad_out, const LayerCache<T>& cache,
                         std::span<std::vector<T>> grads) {
  const auto& s = cache.saved;
  switch (layer.node.kind) {
    case LayerKind::conv: {
      auto g = conv2d_backward(grad_out, s.at(0), layer.conv);
      accumulate<T>(grads[0], g.weights.data());
      accumulate<T>(grads[1], g.bias);
      return std::move(g.input);
    }
    case LayerKind::depthwise_conv: {
      auto g = depthwise_conv2d_backward(grad_out, s.at(0), layer.depthwise);
      accumulate<T>(grads[0], g.weights.data());
      accumulate<T>(grads[1], g.bias);
      return std::move(g.input);
    }
    case LayerKind::relu: return relu_backward(grad_out, s.at(0));
    case LayerKind::resblock: {
      auto g2 = conv2d_backward(grad_out, s.at(2), layer.conv2);
      accumulate<T>(grads[2], g2.weights.data());
      accumulate<T>(grads[3], g2.bias);
      Tensor<T> ga = relu_backward(g2.input, s.at(1));
      auto g1 = conv2d_backward(ga, s.at(0), layer.conv);
      accumulate<T>(grads[0], g1.weights.data());
      accumulate<T>(grads[1], g1.bias);
      add_inplace(g1.input, grad_out);
      return std::move(g1.input);
    }
    case LayerKind::ds_resblock: {
      Tensor<T> gp = relu_backward(grad_out, s.at(3));
      auto gpw = conv2d_backward(gp, s.at(2), layer.conv);
      accumulate<T>(grads[2], gpw.weights.data());
      accumulate<T>(grads[3], gpw.bias);
      Tensor<T> gd = relu_backward(gpw.input, s.at(1));
      auto gdw = depthwise_conv2d_backward(gd, s.at(0), layer.depthwise);
      accumulate<T>(grads[0], gdw.weights.data());
      accumulate<T>(grads[1], gdw.bias);
      add_inplace(gdw.input, grad_out);
      return std::move(gdw.input);
    }
  }
  throw TopologyError("layer_backward: unknown layer kind");
}

template <class T>
void zero_parameters(Layer<T>& layer) {
  for (auto span : layer_parameters(layer)) std::fill(span.begin(), span.end(), T{0});
}

template <class T>
BasicNetwork<T>::BasicNetwork(std::vector<Layer<T>> layers, int stage_count, std::vector<ProvenanceEntry> provenance)
    : layers_(std::move(layers)), stage_count_(stage_count), provenance_(std::move(provenance)) {}

template <class T>
std::vector<LayerNode> BasicNetwork<T>::topology() const {
  std::vector<LayerNode> nodes;
  nodes.reserve(layers_.size());
  for (const auto& l : layers_) nodes.push_back(l.node);
  return nodes;
}

template <class T>
int BasicNetwork<T>::block_count() const {
  return static_cast<int>(block_indices().size());
}

template <class T>
std::vector<std::size_t> BasicNetwork<T>::block_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto k = layers_[i].node.kind;
    if (k == LayerKind::resblock || k == LayerKind::ds_resblock) out.push_back(i);
  }
  return out;
}

template <class T>
int BasicNetwork<T>::border() const {
  int b = 0;
  for (const auto& l : layers_) {
    if (l.node.kind == LayerKind::conv || l.node.kind == LayerKind::depthwise_conv) {
      b += (l.node.kernel - 1) / 2 - l.node.pad;
    }
  }
  return b;
}

template <class T>
Tensor<T> BasicNetwork<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (const auto& l : layers_) h = layer_forward<T>(l, h, nullptr);
  return h;
}

template <class T>
Tensor<T> BasicNetwork<T>::forward(const Tensor<T>& x, ForwardCache<T>& cache) const {
  cache.resize(layers_.size());
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = layer_forward<T>(layers_[i], h, &cache[i]);
  return h;
}

template <class T>
Tensor<T> BasicNetwork<T>::backward(const Tensor<T>& grad_out, const ForwardCache<T>& cache,
                                    std::vector<std::vector<T>>& grads) const {
  if (cache.size() != layers_.size()) throw ShapeError("network backward", "cache layers", layers_.size(), cache.size());
  // Parameter offset of each layer in the flat gradient list.
  std::vector<std::size_t> offset(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offset[i + 1] = offset[i] + layer_parameter_names(layers_[i].node).size();
  }
  if (grads.size() != offset.back()) throw ShapeError("network backward", "gradient tensors", offset.back(), grads.size());
  Tensor<T> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::span<std::vector<T>> layer_grads(grads.data() + offset[i], offset[i + 1] - offset[i]);
    g = layer_backward<T>(layers_[i], g, cache[i], layer_grads);
  }
  return g;
}

template <class T>
std::vector<std::span<T>> BasicNetwork<T>::parameters() {
  std::vector<std::span<T>> out;
  for (auto& l : layers_) {
    auto p = layer_parameters(l);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <class T>
std::vector<std::span<const T>> BasicNetwork<T>::parameters() const {
  std::vector<std::span<const T>> out;
  for (const auto& l : layers_) {
    auto p = layer_parameters(l);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <class T>
std::vector<std::string> BasicNetwork<T>::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) {
    auto names = layer_parameter_names(l.node);
    out.insert(out.end(), names.begin(), names.end());
  }
  return out;
}

template <class T>
std::vector<std::vector<T>> BasicNetwork<T>::make_gradients() const {
  std::vector<std::vector<T>> out;
  for (auto p : parameters()) out.emplace_back(p.size(), T{0});
  return out;
}

template <class T>
template <class U>
BasicNetwork<U> BasicNetwork<T>::cast() const {
  std::vector<Layer<U>> layers;
  layers.reserve(layers_.size());
  for (const auto& l : layers_) {
    Layer<U> out = make_layer<U>(l.node);
    auto src = layer_parameters(l);
    auto dst = layer_parameters(out);
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (std::size_t j = 0; j < src[i].size(); ++j) dst[i][j] = static_cast<U>(src[i][j]);
    }
    layers.push_back(std::move(out));
  }
  return BasicNetwork<U>(std::move(layers), stage_count_, provenance_);
}

template <class T>
bool BasicNetwork<T>::operator==(const BasicNetwork& other) const {
  if (stage_count_ != other.stage_count_ || provenance_ != other.provenance_) return false;
  if (topology() != other.topology()) return false;
  auto a = parameters();
  auto b = other.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::equal(a[i].begin(), a[i].end(), b[i].begin(), b[i].end())) return false;
  }
  return true;
}

template <class T>
BasicNetwork<T> build_base(Rng& rng) {
  std::vector<Layer<T>> layers;
  layers.push_back(make_layer<T>(conv_node("c1", 1, 64, 9, 0)));
  layers.push_back(make_layer<T>(relu_node("c1.relu")));
  layers.push_back(make_layer<T>(conv_node("c2", 64, kBlockWidth, 5, 0)));
  layers.push_back(make_layer<T>(relu_node("c2.relu")));
  layers.push_back(make_layer<T>(conv_node("c_out", kBlockWidth, 1, 5, 0)));
  for (auto& l : layers) initialize(l, rng);
  std::vector<ProvenanceEntry> prov = {{0, "base", "c1", ""}, {0, "base", "c2", ""}, {0, "base", "c_out", ""}};
  return BasicNetwork<T>(std::move(layers), 0, std::move(prov));
}

template <class T>
BasicNetwork<T> insert_resblock(const BasicNetwork<T>& net, Rng& rng) {
  require_base_skeleton(net.topology(), "insert_resblock");
  const int stage = net.stage_count() + 1;
  Layer<T> block = make_layer<T>(resblock_node("rb" + std::to_string(stage)));
  initialize(block, rng);
  std::vector<Layer<T>> layers = net.layers();
  layers.insert(layers.end() - 1, std::move(block));
  auto prov = net.provenance();
  prov.push_back({stage, "insert", "rb" + std::to_string(stage), ""});
  return BasicNetwork<T>(std::move(layers), stage, std::move(prov));
}

template <class T>
BasicNetwork<T> evolve_block_to_ds(const BasicNetwork<T>& net, int index_from_tail, Rng& rng) {
  require_base_skeleton(net.topology(), "evolve_block_to_ds");
  const auto blocks = net.block_indices();
  if (index_from_tail < 0 || static_cast<std::size_t>(index_from_tail) >= blocks.size()) {
    throw TopologyError("evolve_block_to_ds: block index " + std::to_string(index_from_tail) +
                        " from tail is out of range (network has " + std::to_string(blocks.size()) + " blocks)");
  }
  const std::size_t at = blocks[blocks.size() - 1 - static_cast<std::size_t>(index_from_tail)];
  const Layer<T>& old = net.layers()[at];
  if (old.node.kind != LayerKind::resblock) {
    throw TopologyError("evolve_block_to_ds: '" + old.node.name + "' is a " + to_string(old.node.kind) +
                        ", not a resblock");
  }
  Layer<T> ds = make_layer<T>(ds_resblock_node("ds" + old.node.name));
  initialize(ds, rng);
  std::vector<Layer<T>> layers = net.layers();
  layers[at] = std::move(ds);
  auto prov = net.provenance();
  int evolve_stage = 1;
  for (const auto& e : prov) evolve_stage += e.event == "evolve" ? 1 : 0;
  prov.push_back({evolve_stage, "evolve", "ds" + old.node.name, old.node.name});
  return BasicNetwork<T>(std::move(layers), net.stage_count(), std::move(prov));
}

std::uint64_t count_params(const std::vector<LayerNode>& topology, ParamCountMode mode) {
  const bool bias = mode == ParamCountMode::with_bias;
  std::uint64_t total = 0;
  for (const auto& n : topology) {
    const std::uint64_t in = static_cast<std::uint64_t>(n.in_channels);
    const std::uint64_t out = static_cast<std::uint64_t>(n.out_channels);
    const std::uint64_t kk = static_cast<std::uint64_t>(n.kernel) * static_cast<std::uint64_t>(n.kernel);
    switch (n.kind) {
      case LayerKind::conv: total += in * out * kk + (bias ? out : 0); break;
      case LayerKind::depthwise_conv: total += in * kk + (bias ? in : 0); break;
      case LayerKind::resblock: total += 2 * (in * out * kk) + (bias ? 2 * out : 0); break;
      case LayerKind::ds_resblock: total += in * kk + in * out + (bias ? in + out : 0); break;
      case LayerKind::relu: break;
    }
  }
  return total;
}

std::uint64_t count_macs(const std::vector<LayerNode>& topology, std::size_t height, std::size_t width,
                         MacConvention convention) {
  std::uint64_t total = 0;
  std::size_t h = height;
  std::size_t w = width;
  for (const auto& n : topology) {
    const std::uint64_t in = static_cast<std::uint64_t>(n.in_channels);
    const std::uint64_t out = static_cast<std::uint64_t>(n.out_channels);
    const std::uint64_t kk = static_cast<std::uint64_t>(n.kernel) * static_cast<std::uint64_t>(n.kernel);
    if (convention == MacConvention::valid && n.kind != LayerKind::relu) {
      h = conv_output_extent(h, static_cast<std::size_t>(n.kernel), n.pad);
      w = conv_output_extent(w, static_cast<std::size_t>(n.kernel), n.pad);
    }
    const std::uint64_t area = static_cast<std::uint64_t>(h) * static_cast<std::uint64_t>(w);
    switch (n.kind) {
      case LayerKind::conv: total += area * kk * in * out; break;
      case LayerKind::depthwise_conv: total += area * kk * in; break;
      case LayerKind::resblock: total += 2 * area * kk * in * out; break;
      case LayerKind::ds_resblock: total += area * kk * in + area * in * out; break;
      case LayerKind::relu: break;
    }
  }
  return total;
}

std::vector<LayerNode> dn_resnet_topology(int resblocks, int ds_blocks_from_tail) {
  std::vector<LayerNode> nodes = {conv_node("c1", 1, 64, 9, 0), relu_node("c1.relu"),
                                  conv_node("c2", 64, kBlockWidth, 5, 0), relu_node("c2.relu")};
  for (int i = 1; i <= resblocks; ++i) {
    const bool ds = i > resblocks - ds_blocks_from_tail;
    const std::string name = "rb" + std::to_string(i);
    nodes.push_back(ds ? ds_resblock_node("ds" + name) : resblock_node(name));
  }
  nodes.push_back(conv_node("c_out", kBlockWidth, 1, 5, 0));
  return nodes;
}

std::string describe(const std::vector<LayerNode>& topology) {
  std::ostringstream os;
  for (const auto& n : topology) {
    os << n.name << "\t" << to_string(n.kind);
    switch (n.kind) {
      case LayerKind::conv:
        os << " " << n.in_channels << "->" << n.out_channels << " " << n.kernel << "x" << n.kernel << " pad"
           << n.pad;
        break;
      case LayerKind::depthwise_conv:
        os << " " << n.in_channels << "ch " << n.kernel << "x" << n.kernel << " pad" << n.pad;
        break;
      case LayerKind::resblock: os << " [3x3 conv, relu, 3x3 conv, +skip] " << n.in_channels << "ch"; break;
      case LayerKind::ds_resblock:
        os << " [3x3 depthwise, relu, 1x1 pointwise, relu, +skip] " << n.in_channels << "ch";
        break;
      case LayerKind::relu: break;
    }
    os << "\n";
  }
  return os.str();
}

#define DNRES_INSTANTIATE_NETWORK(T)                                                                  \
  template class BasicNetwork<T>;                                                                    \
  template std::vector<std::span<T>> layer_parameters(Layer<T>&);                                    \
  template std::vector<std::span<const T>> layer_parameters(const Layer<T>&);                        \
  template Tensor<T> layer_forward(const Layer<T>&, const Tensor<T>&, LayerCache<T>*);               \
  template Tensor<T> layer_backward(const Layer<T>&, const Tensor<T>&, const LayerCache<T>&,         \
                                    std::span<std::vector<T>>);                                      \
  template void zero_parameters(Layer<T>&);                                                          \
  template Layer<T> make_layer(const LayerNode&);                                                    \
  template BasicNetwork<T> build_base(Rng&);                                                         \
  template BasicNetwork<T> insert_resblock(const BasicNetwork<T>&, Rng&);                            \
  template BasicNetwork<T> evolve_block_to_ds(const BasicNetwork<T>&, int, Rng&);

DNRES_INSTANTIATE_NETWORK(float)
DNRES_INSTANTIATE_NETWORK(double)

template BasicNetwork<double> BasicNetwork<float>::cast<double>() const;
template BasicNetwork<float> BasicNetwork<double>::cast<float>() const;
template BasicNetwork<float> BasicNetwork<float>::cast<float>() const;
template BasicNetwork<double> BasicNetwork<double>::cast<double>() const;

#undef DNRES_INSTANTIATE_NETWORK

}  // namespace dnres
