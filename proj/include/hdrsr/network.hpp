#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "hdrsr/error.hpp"
#include "hdrsr/layers.hpp"
#include "hdrsr/tensor.hpp"

namespace hdrsr {

enum class LayerKind {
  input,
  conv3x3,
  conv3x3_stride2,
  tconv4x4_stride2,
  relu,
  leaky_relu,
  tanh,
  sigmoid,
  concat,
  pixel_shuffle,
  global_avg_pool,
  dense,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "input";
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::conv3x3_stride2: return "conv3x3_stride2";
    case LayerKind::tconv4x4_stride2: return "tconv4x4_stride2";
    case LayerKind::relu: return "relu";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::concat: return "concat";
    case LayerKind::pixel_shuffle: return "pixel_shuffle";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::input;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
};

/// A named weight with its logical dimensions (rank 1 for biases, 2 for dense
/// matrices, 4 for kernels). Values are always stored in a 4-d Tensor.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::uint32_t> dims;
  Tensor<T> value;
};

template <typename T>
class ParameterStore {
 public:
  std::size_t add(std::string name, std::vector<std::uint32_t> dims, Shape shape) {
    if (index_.count(name) != 0) throw ConfigError("duplicate parameter name " + name);
    index_.emplace(name, items_.size());
    items_.push_back(Parameter<T>{std::move(name), std::move(dims), Tensor<T>(shape)});
    return items_.size() - 1;
  }

  std::size_t size() const noexcept { return items_.size(); }
  Parameter<T>& operator[](std::size_t i) { return items_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return items_[i]; }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
  }
  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  std::size_t element_count() const {
    std::size_t total = 0;
    for (const auto& p : items_) total += p.value.size();
    return total;
  }

 private:
  std::vector<Parameter<T>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients aligned index-for-index with a ParameterStore.
template <typename T>
class GradientStore {
 public:
  GradientStore() = default;
  explicit GradientStore(const ParameterStore<T>& params) {
    grads_.reserve(params.size());
    for (const auto& p : params) grads_.emplace_back(p.value.shape());
  }

  std::size_t size() const noexcept { return grads_.size(); }
  Tensor<T>& operator[](std::size_t i) { return grads_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return grads_[i]; }

  void zero() {
    for (auto& g : grads_) g.fill(T(0));
  }

 private:
  std::vector<Tensor<T>> grads_;
};

/// Outputs of every node of one forward pass; consumed by Network::backward.
template <typename T>
struct ForwardCache {
  std::vector<Tensor<T>> outputs;
  const Tensor<T>& output() const { return outputs.back(); }
};

/// Directed acyclic layer graph built in topological order. Node 0 is the
/// input; named skip taps are plain node ids that later concat nodes consume.
template <typename T>
class Network {
 public:
  using NodeId = std::size_t;

  struct Node {
    LayerSpec spec;
    std::string name;
    NodeId a = 0;
    NodeId b = 0;
    long weight = -1;
    long bias = -1;
    T slope = T(0);
    std::size_t factor = 0;
  };

  explicit Network(std::size_t input_channels) {
    nodes_.push_back(Node{LayerSpec{LayerKind::input, input_channels, input_channels}, "input"});
  }

  NodeId input() const noexcept { return 0; }
  std::size_t channels(NodeId id) const { return nodes_.at(id).spec.out_channels; }

  NodeId conv3x3(NodeId from, const std::string& name, std::size_t cout, std::size_t stride = 1) {
    if (stride != 1 && stride != 2) throw ConfigError("conv stride must be 1 or 2");
    const std::size_t cin = channels(from);
    const auto w = params_.add(name + ".weight", {3, 3, u32(cin), u32(cout)}, Shape{3, 3, cin, cout});
    const auto b = params_.add(name + ".bias", {u32(cout)}, Shape{1, 1, 1, cout});
    return push(Node{LayerSpec{stride == 1 ? LayerKind::conv3x3 : LayerKind::conv3x3_stride2, cin, cout}, name,
                     from, 0, static_cast<long>(w), static_cast<long>(b)});
  }

  NodeId tconv4x4(NodeId from, const std::string& name, std::size_t cout) {
    const std::size_t cin = channels(from);
    const auto w = params_.add(name + ".weight", {4, 4, u32(cin), u32(cout)}, Shape{4, 4, cin, cout});
    const auto b = params_.add(name + ".bias", {u32(cout)}, Shape{1, 1, 1, cout});
    return push(Node{LayerSpec{LayerKind::tconv4x4_stride2, cin, cout}, name, from, 0, static_cast<long>(w),
                     static_cast<long>(b)});
  }

  NodeId dense(NodeId from, const std::string& name, std::size_t in_features, std::size_t cout) {
    const auto w = params_.add(name + ".weight", {u32(in_features), u32(cout)}, Shape{1, 1, in_features, cout});
    const auto b = params_.add(name + ".bias", {u32(cout)}, Shape{1, 1, 1, cout});
    return push(Node{LayerSpec{LayerKind::dense, in_features, cout}, name, from, 0, static_cast<long>(w),
                     static_cast<long>(b)});
  }

  NodeId relu(NodeId from) { return pointwise(from, LayerKind::relu); }
  NodeId tanh(NodeId from) { return pointwise(from, LayerKind::tanh); }
  NodeId sigmoid(NodeId from) { return pointwise(from, LayerKind::sigmoid); }
  NodeId leaky_relu(NodeId from, T slope) {
    const NodeId id = pointwise(from, LayerKind::leaky_relu);
    nodes_[id].slope = slope;
    return id;
  }

  NodeId concat(NodeId a, NodeId b) {
    const std::size_t c = channels(a) + channels(b);
    return push(Node{LayerSpec{LayerKind::concat, c, c}, "concat", a, b});
  }

  NodeId pixel_shuffle(NodeId from, std::size_t r) {
    const std::size_t cin = channels(from);
    if (cin % (r * r) != 0) throw ConfigError("pixel_shuffle: channels not divisible by r^2");
    Node n{LayerSpec{LayerKind::pixel_shuffle, cin, cin / (r * r)}, "pixel_shuffle", from};
    n.factor = r;
    return push(std::move(n));
  }

  NodeId global_avg_pool(NodeId from) {
    const std::size_t c = channels(from);
    return push(Node{LayerSpec{LayerKind::global_avg_pool, c, c}, "global_avg_pool", from});
  }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  ParameterStore<T>& params() noexcept { return params_; }
  const ParameterStore<T>& params() const noexcept { return params_; }
  std::size_t parameter_count() const { return params_.element_count(); }
  std::size_t output_channels() const { return nodes_.back().spec.out_channels; }

  GradientStore<T> make_gradients() const { return GradientStore<T>(params_); }

  /// Same graph and weights in another element type.
  template <typename U>
  Network<U> cast() const {
    Network<U> out(nodes_[0].spec.out_channels);
    out.nodes_.clear();
    for (const auto& n : nodes_) {
      out.nodes_.push_back(typename Network<U>::Node{n.spec, n.name, n.a, n.b, n.weight, n.bias,
                                                     static_cast<U>(n.slope), n.factor});
    }
    for (const auto& p : params_) {
      const auto id = out.params_.add(p.name, p.dims, p.value.shape());
      out.params_[id].value = tensor_cast<U>(p.value);
    }
    out.check_finite_ = check_finite_;
    return out;
  }

  /// When enabled every node output is checked for NaN/Inf.
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

  /// He-normal (fan-in) weights, zero biases.
  void init_he(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& node : nodes_) {
      if (node.weight < 0) continue;
      auto& w = params_[static_cast<std::size_t>(node.weight)].value;
      std::size_t fan_in = 0;
      switch (node.spec.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv3x3_stride2: fan_in = 9 * node.spec.in_channels; break;
        // each output pixel of a 4x4 stride-2 transposed conv sees 2x2 taps
        case LayerKind::tconv4x4_stride2: fan_in = 4 * node.spec.in_channels; break;
        default: fan_in = node.spec.in_channels; break;
      }
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (auto& v : w.storage()) v = static_cast<T>(dist(rng));
      params_[static_cast<std::size_t>(node.bias)].value.fill(T(0));
    }
  }

  ForwardCache<T> forward(const Tensor<T>& x) const {
    if (x.shape().c != nodes_[0].spec.out_channels) {
      throw ShapeError("network input has " + std::to_string(x.shape().c) + " channels, expected " +
                       std::to_string(nodes_[0].spec.out_channels));
    }
    ForwardCache<T> cache;
    cache.outputs.reserve(nodes_.size());
    cache.outputs.push_back(x);
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      cache.outputs.push_back(forward_node(nodes_[i], cache.outputs));
      if (check_finite_ && !cache.outputs.back().all_finite()) {
        throw NumericalError(std::string("non-finite output from ") + layer_kind_name(nodes_[i].spec.kind) +
                             " node '" + nodes_[i].name + "'");
      }
    }
    return cache;
  }

  Tensor<T> infer(const Tensor<T>& x) const { return std::move(forward(x).outputs.back()); }

  /// Back-propagates `grad_output`, adding parameter gradients into `grads`.
  /// Returns the gradient with respect to the network input.
  Tensor<T> backward(const ForwardCache<T>& cache, const Tensor<T>& grad_output, GradientStore<T>& grads) const {
    if (cache.outputs.size() != nodes_.size()) throw StateError("backward without a matching forward cache");
    if (grads.size() != params_.size()) throw StateError("gradient store does not match parameters");
    if (grad_output.shape() != cache.outputs.back().shape()) throw ShapeError("backward: upstream gradient shape");
    std::vector<Tensor<T>> upstream(nodes_.size());
    upstream.back() = grad_output;
    auto add_to = [&](NodeId id, Tensor<T>&& g) {
      if (upstream[id].empty()) {
        upstream[id] = std::move(g);
      } else {
        accumulate(upstream[id], g);
      }
    };
    for (std::size_t i = nodes_.size(); i-- > 1;) {
      if (upstream[i].empty()) continue;
      const Node& node = nodes_[i];
      const Tensor<T>& go = upstream[i];
      const Tensor<T>& in = cache.outputs[node.a];
      switch (node.spec.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv3x3_stride2:
        case LayerKind::tconv4x4_stride2:
        case LayerKind::dense: {
          const auto& w = params_[static_cast<std::size_t>(node.weight)].value;
          ConvGrads<T> g = node.spec.kind == LayerKind::dense ? dense_backward(in, w, go)
                           : node.spec.kind == LayerKind::tconv4x4_stride2
                               ? tconv2d_backward(in, w, go, 2, 1)
                               : conv2d_backward(in, w, go, stride_of(node), 1);
          accumulate(grads[static_cast<std::size_t>(node.weight)], g.weight);
          auto& gb = grads[static_cast<std::size_t>(node.bias)];
          for (std::size_t k = 0; k < g.bias.size(); ++k) gb[k] += g.bias[k];
          add_to(node.a, std::move(g.input));
          break;
        }
        case LayerKind::relu: add_to(node.a, relu_backward(in, go)); break;
        case LayerKind::leaky_relu: add_to(node.a, leaky_relu_backward(in, go, node.slope)); break;
        case LayerKind::tanh: add_to(node.a, tanh_backward(cache.outputs[i], go)); break;
        case LayerKind::sigmoid: add_to(node.a, sigmoid_backward(cache.outputs[i], go)); break;
        case LayerKind::concat: {
          auto [ga, gb] = split_channels(go, cache.outputs[node.a].shape().c);
          add_to(node.a, std::move(ga));
          add_to(node.b, std::move(gb));
          break;
        }
        case LayerKind::pixel_shuffle: add_to(node.a, pixel_unshuffle(go, node.factor)); break;
        case LayerKind::global_avg_pool: add_to(node.a, global_avg_pool_backward(in.shape(), go)); break;
        case LayerKind::input: break;
      }
    }
    if (upstream[0].empty()) return Tensor<T>(cache.outputs[0].shape());
    return std::move(upstream[0]);
  }

 private:
  static std::uint32_t u32(std::size_t v) { return static_cast<std::uint32_t>(v); }
  static std::size_t stride_of(const Node& n) { return n.spec.kind == LayerKind::conv3x3_stride2 ? 2 : 1; }

  NodeId push(Node n) {
    if (n.a >= nodes_.size() || n.b >= nodes_.size()) throw ConfigError("layer references a later node");
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  NodeId pointwise(NodeId from, LayerKind kind) {
    const std::size_t c = channels(from);
    return push(Node{LayerSpec{kind, c, c}, layer_kind_name(kind), from});
  }

  Tensor<T> forward_node(const Node& node, const std::vector<Tensor<T>>& outs) const {
    const Tensor<T>& in = outs[node.a];
    auto bias = [&]() -> std::span<const T> { return params_[static_cast<std::size_t>(node.bias)].value.values(); };
    auto weight = [&]() -> const Tensor<T>& { return params_[static_cast<std::size_t>(node.weight)].value; };
    switch (node.spec.kind) {
      case LayerKind::conv3x3:
      case LayerKind::conv3x3_stride2: return conv2d_forward(in, weight(), bias(), stride_of(node), 1);
      case LayerKind::tconv4x4_stride2: return tconv2d_forward(in, weight(), bias(), 2, 1);
      case LayerKind::dense: return dense_forward(in, weight(), bias());
      case LayerKind::relu: return relu_forward(in);
      case LayerKind::leaky_relu: return leaky_relu_forward(in, node.slope);
      case LayerKind::tanh: return tanh_forward(in);
      case LayerKind::sigmoid: return sigmoid_forward(in);
      case LayerKind::concat: return concat_channels(in, outs[node.b]);
      case LayerKind::pixel_shuffle: return hdrsr::pixel_shuffle(in, node.factor);
      case LayerKind::global_avg_pool: return global_avg_pool_forward(in);
      case LayerKind::input: break;
    }
    throw StateError("unexpected input node");
  }

  template <typename>
  friend class Network;

  std::vector<Node> nodes_;
  ParameterStore<T> params_;
  bool check_finite_ = false;
};

}  // namespace hdrsr
