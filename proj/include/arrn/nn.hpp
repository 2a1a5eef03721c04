#pragma once

// Fixed-resolution layers used inside Laplacian residuals, with reverse-mode
// gradients. Forward passes are const; anything needed by the backward pass is
// recorded in a tape owned by the caller.

#include <cstddef>
#include <random>
#include <variant>
#include <vector>

#include "arrn/tensor.hpp"

namespace arrn {

template <typename T>
struct LayerTape {
  std::vector<FeatureMap<T>> saved;
  std::vector<T> aux;
};

template <typename T>
class PointwiseConv {
 public:
  PointwiseConv(std::size_t in, std::size_t out);

  FeatureMap<T> forward(const FeatureMap<T>& x, Mode mode, LayerTape<T>* tape, MacCounter* macs) const;
  FeatureMap<T> backward(const LayerTape<T>& tape, const FeatureMap<T>& grad);

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  std::uint64_t macs(std::size_t batch, const GridSpec& grid) const {
    return static_cast<std::uint64_t>(batch) * grid.samples() * in_ * out_;
  }

  Parameter<T> weight;  // out x in
  Parameter<T> bias;    // out

 private:
  std::size_t in_, out_;
};

enum class Padding { Replicate, Zero };

/// 3-tap (1-D) or 3x3 (2-D) per-channel convolution, stride 1.
template <typename T>
class DepthwiseConv {
 public:
  DepthwiseConv(std::size_t features, int dims, Padding padding = Padding::Replicate);

  FeatureMap<T> forward(const FeatureMap<T>& x, Mode mode, LayerTape<T>* tape, MacCounter* macs) const;
  FeatureMap<T> backward(const LayerTape<T>& tape, const FeatureMap<T>& grad);

  std::size_t taps() const { return dims_ == 1 ? 3 : 9; }
  std::uint64_t macs(std::size_t batch, const GridSpec& grid) const {
    return static_cast<std::uint64_t>(batch) * grid.samples() * features_ * taps();
  }
  Padding padding() const { return padding_; }

  Parameter<T> weight;  // features x taps
  Parameter<T> bias;    // features

 private:
  std::size_t features_;
  int dims_;
  Padding padding_;
};

template <typename T>
class BatchNorm {
 public:
  explicit BatchNorm(std::size_t features);

  /// Train mode normalizes with batch statistics and records them in the tape;
  /// fold them into the running estimates with commit().
  FeatureMap<T> forward(const FeatureMap<T>& x, Mode mode, LayerTape<T>* tape, MacCounter* macs) const;
  FeatureMap<T> backward(const LayerTape<T>& tape, const FeatureMap<T>& grad);
  void commit(const LayerTape<T>& tape);

  std::uint64_t macs(std::size_t batch, const GridSpec& grid) const {
    return static_cast<std::uint64_t>(batch) * grid.samples() * features_;
  }

  Parameter<T> gamma;
  Parameter<T> beta;
  Buffer<T> running_mean;
  Buffer<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

 private:
  std::size_t features_;
};

template <typename T>
class Silu {
 public:
  FeatureMap<T> forward(const FeatureMap<T>& x, Mode mode, LayerTape<T>* tape, MacCounter* macs) const;
  FeatureMap<T> backward(const LayerTape<T>& tape, const FeatureMap<T>& grad);
  std::uint64_t macs(std::size_t, const GridSpec&) const { return 0; }
};

template <typename T>
T silu(T x);
template <typename T>
T silu_derivative(T x);

template <typename T>
using Layer = std::variant<PointwiseConv<T>, DepthwiseConv<T>, BatchNorm<T>, Silu<T>>;

/// Shape of an inner block: pointwise expand, `depth` x (depthwise, pointwise), pointwise contract.
struct InnerBlockSpec {
  std::size_t features = 8;
  std::size_t expansion = 2;
  std::size_t depth = 1;
};

template <typename T>
struct BlockTape {
  std::vector<LayerTape<T>> layers;
};

/// Sequential fixed-resolution block. Output grid and features equal the input's.
template <typename T>
class Block {
 public:
  Block() = default;
  explicit Block(std::vector<Layer<T>> layers) : layers_(std::move(layers)) {}

  /// Expand (pointwise + BN + SiLU), depth x [depthwise + BN + SiLU, pointwise + BN + SiLU],
  /// contract (pointwise + BN). Weights fan-in uniform from `rng`, biases zero.
  static Block inner(const InnerBlockSpec& spec, int dims, std::mt19937_64& rng);

  FeatureMap<T> forward(const FeatureMap<T>& x, Mode mode, BlockTape<T>* tape = nullptr,
                        MacCounter* macs = nullptr) const;
  FeatureMap<T> backward(const BlockTape<T>& tape, const FeatureMap<T>& grad);
  void commit(const BlockTape<T>& tape);

  std::uint64_t macs(std::size_t batch, const GridSpec& grid) const;
  std::vector<Parameter<T>*> parameters();
  std::vector<Buffer<T>*> buffers();
  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<Layer<T>> layers_;
};

struct ConstancyReport {
  bool pass = false;
  double max_spatial_std = 0.0;
};

/// Runs the block on an all-zero map in eval mode and checks every
/// (batch, channel) plane of the output is spatially constant.
template <typename T>
ConstancyReport zero_constancy_check(const Block<T>& block, std::size_t features, const GridSpec& grid,
                                     double tol, std::size_t batch = 2);

/// Global average pooling, elementwise dropout (train only), affine map to logits.
template <typename T>
struct Head {
  Parameter<T> weight;  // classes x features
  Parameter<T> bias;    // classes
  double dropout = 0.2;

  Head() = default;
  Head(std::size_t features, std::size_t classes, std::mt19937_64& rng);
  std::size_t classes() const { return bias.size(); }
  std::size_t features() const { return weight.shape.at(1); }
};

/// Logits, batch x classes.
template <typename T>
struct Logits {
  std::size_t batch = 0;
  std::size_t classes = 0;
  std::vector<T> values;
  T at(std::size_t b, std::size_t k) const { return values[b * classes + k]; }
};

template <typename T>
struct HeadTape {
  FeatureMap<T> input;       // shape only
  std::vector<T> pooled;     // batch x features
  std::vector<T> mask;       // dropout scale per pooled element (empty in eval)
};

template <typename T>
Logits<T> global_pool_and_head(const FeatureMap<T>& x, const Head<T>& head, Mode mode,
                               std::mt19937_64* rng, HeadTape<T>* tape = nullptr,
                               MacCounter* macs = nullptr);
template <typename T>
FeatureMap<T> head_backward(const HeadTape<T>& tape, Head<T>& head, const Logits<T>& grad);

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
template <typename T>
double cross_entropy(const Logits<T>& logits, std::span<const int> labels, Logits<T>* grad = nullptr);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void fan_in_uniform(Parameter<T>& p, std::size_t fan_in, std::mt19937_64& rng);

/// 53-bit uniform double in [0, 1) from a 64-bit engine; platform independent.
double uniform01(std::mt19937_64& rng);
/// Box-Muller standard normal.
double standard_normal(std::mt19937_64& rng);

}  // namespace arrn
