#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arrn/errors.hpp"
#include "arrn/signal.hpp"

namespace arrn {

/// Batched multichannel map: batch-major, then feature-major, then row-major spatial.
template <typename T>
struct FeatureMap {
  std::size_t batch = 0;
  std::size_t features = 0;
  GridSpec grid;
  std::vector<T> values;

  FeatureMap() = default;
  FeatureMap(std::size_t batch_, std::size_t features_, GridSpec grid_)
      : batch(batch_), features(features_), grid(grid_), values(batch_ * features_ * grid_.samples()) {}

  std::size_t plane_size() const { return grid.samples(); }
  std::span<T> plane(std::size_t b, std::size_t c) {
    return std::span<T>(values).subspan((b * features + c) * grid.samples(), grid.samples());
  }
  std::span<const T> plane(std::size_t b, std::size_t c) const {
    return std::span<const T>(values).subspan((b * features + c) * grid.samples(), grid.samples());
  }
  bool same_shape(const FeatureMap& other) const {
    return batch == other.batch && features == other.features && grid == other.grid;
  }
};

/// Trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string name_, std::vector<std::size_t> shape_)
      : name(std::move(name_)), shape(std::move(shape_)) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    value.assign(n, T(0));
    grad.assign(n, T(0));
  }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Non-trainable persistent state (batch-norm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  std::vector<T> value;
};

enum class Mode { Train, Eval };

/// Multiply-accumulate counter filled in by the kernels as they execute.
struct MacCounter {
  std::uint64_t total = 0;
  void add(std::uint64_t n) { total += n; }
};

/// Converts a double-precision signal batch into a feature map.
template <typename T>
FeatureMap<T> to_feature_map(std::span<const DiscreteSignal> signals);
template <typename T>
FeatureMap<T> to_feature_map(const DiscreteSignal& signal);
/// Extracts item `b` as a double-precision signal.
template <typename T>
DiscreteSignal to_signal(const FeatureMap<T>& map, std::size_t b);

}  // namespace arrn
