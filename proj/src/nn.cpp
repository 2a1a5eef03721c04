#include "arrn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace arrn {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void fan_in_uniform(Parameter<T>& p, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : p.value) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
}

// ---------------------------------------------------------------------------
// Conversions

template <typename T>
FeatureMap<T> to_feature_map(std::span<const DiscreteSignal> signals) {
  if (signals.empty()) throw ShapeError("empty signal batch");
  const auto& first = signals.front();
  FeatureMap<T> out(signals.size(), first.features(), first.grid());
  for (std::size_t b = 0; b < signals.size(); ++b) {
    if (!(signals[b].grid() == first.grid()) || signals[b].features() != first.features()) {
      throw ShapeError("signals in a batch must share grid and feature count");
    }
    auto src = signals[b].values();
    std::transform(src.begin(), src.end(), out.values.begin() + static_cast<long>(b * src.size()),
                   [](double v) { return static_cast<T>(v); });
  }
  return out;
}

template <typename T>
FeatureMap<T> to_feature_map(const DiscreteSignal& signal) {
  return to_feature_map<T>(std::span<const DiscreteSignal>(&signal, 1));
}

template <typename T>
DiscreteSignal to_signal(const FeatureMap<T>& map, std::size_t b) {
  const auto n = map.features * map.plane_size();
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<double>(map.values[b * n + i]);
  return DiscreteSignal(map.grid, map.features, std::move(values));
}

namespace {

template <typename T>
void require_features(const FeatureMap<T>& x, std::size_t features, const char* what) {
  if (x.features != features) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(features) + " features, got " +
                     std::to_string(x.features));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// PointwiseConv

template <typename T>
PointwiseConv<T>::PointwiseConv(std::size_t in, std::size_t out)
    : weight("weight", {out, in}), bias("bias", {out}), in_(in), out_(out) {}

template <typename T>
FeatureMap<T> PointwiseConv<T>::forward(const FeatureMap<T>& x, Mode, LayerTape<T>* tape,
                                        MacCounter* macs) const {
  require_features(x, in_, "pointwise conv");
  FeatureMap<T> y(x.batch, out_, x.grid);
  const auto p = x.plane_size();
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t o = 0; o < out_; ++o) {
      auto dst = y.plane(b, o);
      std::fill(dst.begin(), dst.end(), bias.value[o]);
      const T* w = &weight.value[o * in_];
      for (std::size_t i = 0; i < in_; ++i) {
        const T wi = w[i];
        const T* src = x.plane(b, i).data();
        for (std::size_t k = 0; k < p; ++k) dst[k] += wi * src[k];
      }
      if (macs) macs->add(static_cast<std::uint64_t>(in_) * p);
    }
  }
  if (tape) tape->saved = {x};
  return y;
}

template <typename T>
FeatureMap<T> PointwiseConv<T>::backward(const LayerTape<T>& tape, const FeatureMap<T>& grad) {
  const auto& x = tape.saved.at(0);
  if (grad.batch != x.batch || grad.features != out_ || !(grad.grid == x.grid)) {
    throw ShapeError("pointwise conv backward: gradient shape mismatch");
  }
  FeatureMap<T> gx(x.batch, in_, x.grid);
  const auto p = x.plane_size();
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t o = 0; o < out_; ++o) {
      const T* g = grad.plane(b, o).data();
      T gsum = 0;
      for (std::size_t k = 0; k < p; ++k) gsum += g[k];
      bias.grad[o] += gsum;
      for (std::size_t i = 0; i < in_; ++i) {
        const T* src = x.plane(b, i).data();
        T* dst = gx.plane(b, i).data();
        const T wi = weight.value[o * in_ + i];
        T acc = 0;
        for (std::size_t k = 0; k < p; ++k) {
          acc += g[k] * src[k];
          dst[k] += wi * g[k];
        }
        weight.grad[o * in_ + i] += acc;
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// DepthwiseConv

template <typename T>
DepthwiseConv<T>::DepthwiseConv(std::size_t features, int dims, Padding padding)
    : weight("weight", {features, dims == 1 ? std::size_t{3} : std::size_t{9}}),
      bias("bias", {features}),
      features_(features),
      dims_(dims),
      padding_(padding) {
  if (dims != 1 && dims != 2) throw ShapeError("depthwise conv supports 1 or 2 dims");
}

namespace {

// Source index for offset d at position i along an axis of length n; -1 means padding zero.
inline long neighbour(long i, long d, long n, Padding padding) {
  long j = i + d;
  if (j >= 0 && j < n) return j;
  if (padding == Padding::Zero) return -1;
  return std::clamp(j, 0L, n - 1);
}

}  // namespace

template <typename T>
FeatureMap<T> DepthwiseConv<T>::forward(const FeatureMap<T>& x, Mode, LayerTape<T>* tape,
                                        MacCounter* macs) const {
  require_features(x, features_, "depthwise conv");
  if (x.grid.dims() != dims_) throw ShapeError("depthwise conv: grid dims mismatch");
  FeatureMap<T> y(x.batch, features_, x.grid);
  const long rows = static_cast<long>(x.grid.rows());
  const long cols = static_cast<long>(x.grid.cols());
  const long row_reach = dims_ == 2 ? 1 : 0;
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t c = 0; c < features_; ++c) {
      const T* src = x.plane(b, c).data();
      T* dst = y.plane(b, c).data();
      const T* w = &weight.value[c * taps()];
      for (long r = 0; r < rows; ++r) {
        for (long q = 0; q < cols; ++q) {
          T acc = bias.value[c];
          std::size_t t = 0;
          for (long dr = -row_reach; dr <= row_reach; ++dr) {
            const long sr = neighbour(r, dr, rows, padding_);
            for (long dq = -1; dq <= 1; ++dq, ++t) {
              const long sq = neighbour(q, dq, cols, padding_);
              if (sr < 0 || sq < 0) continue;
              acc += w[t] * src[sr * cols + sq];
            }
          }
          dst[r * cols + q] = acc;
        }
      }
      if (macs) macs->add(static_cast<std::uint64_t>(rows * cols) * taps());
    }
  }
  if (tape) tape->saved = {x};
  return y;
}

template <typename T>
FeatureMap<T> DepthwiseConv<T>::backward(const LayerTape<T>& tape, const FeatureMap<T>& grad) {
  const auto& x = tape.saved.at(0);
  if (!grad.same_shape(x)) throw ShapeError("depthwise conv backward: gradient shape mismatch");
  FeatureMap<T> gx(x.batch, features_, x.grid);
  const long rows = static_cast<long>(x.grid.rows());
  const long cols = static_cast<long>(x.grid.cols());
  const long row_reach = dims_ == 2 ? 1 : 0;
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t c = 0; c < features_; ++c) {
      const T* src = x.plane(b, c).data();
      const T* g = grad.plane(b, c).data();
      T* dst = gx.plane(b, c).data();
      const T* w = &weight.value[c * taps()];
      T* gw = &weight.grad[c * taps()];
      for (long r = 0; r < rows; ++r) {
        for (long q = 0; q < cols; ++q) {
          const T gv = g[r * cols + q];
          bias.grad[c] += gv;
          std::size_t t = 0;
          for (long dr = -row_reach; dr <= row_reach; ++dr) {
            const long sr = neighbour(r, dr, rows, padding_);
            for (long dq = -1; dq <= 1; ++dq, ++t) {
              const long sq = neighbour(q, dq, cols, padding_);
              if (sr < 0 || sq < 0) continue;
              gw[t] += gv * src[sr * cols + sq];
              dst[sr * cols + sq] += w[t] * gv;
            }
          }
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t features)
    : gamma("gamma", {features}),
      beta("beta", {features}),
      running_mean{"running_mean", std::vector<T>(features, T(0))},
      running_var{"running_var", std::vector<T>(features, T(1))},
      features_(features) {
  std::fill(gamma.value.begin(), gamma.value.end(), T(1));
}

// Tape layout: saved[0] = normalized input; aux = [inv_std (F), batch mean (F), batch var (F), mode].
template <typename T>
FeatureMap<T> BatchNorm<T>::forward(const FeatureMap<T>& x, Mode mode, LayerTape<T>* tape,
                                    MacCounter* macs) const {
  require_features(x, features_, "batch norm");
  FeatureMap<T> y(x.batch, features_, x.grid);
  FeatureMap<T> xhat;
  if (tape) xhat = FeatureMap<T>(x.batch, features_, x.grid);
  const auto p = x.plane_size();
  const double count = static_cast<double>(x.batch * p);
  std::vector<T> inv_std(features_), means(features_), vars(features_);
  for (std::size_t c = 0; c < features_; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (std::size_t b = 0; b < x.batch; ++b) {
        for (T v : x.plane(b, c)) sum += static_cast<double>(v);
      }
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < x.batch; ++b) {
        for (T v : x.plane(b, c)) {
          const double d = static_cast<double>(v) - mean;
          sq += d * d;
        }
      }
      var = sq / count;
    } else {
      mean = static_cast<double>(running_mean.value[c]);
      var = static_cast<double>(running_var.value[c]);
    }
    means[c] = static_cast<T>(mean);
    vars[c] = static_cast<T>(var);
    const T istd = static_cast<T>(1.0 / std::sqrt(var + eps));
    inv_std[c] = istd;
    const T m = static_cast<T>(mean);
    const T scale = gamma.value[c] * istd;
    const T shift = beta.value[c];
    for (std::size_t b = 0; b < x.batch; ++b) {
      const T* src = x.plane(b, c).data();
      T* dst = y.plane(b, c).data();
      T* nh = tape ? xhat.plane(b, c).data() : nullptr;
      for (std::size_t k = 0; k < p; ++k) {
        const T centered = src[k] - m;
        dst[k] = scale * centered + shift;
        if (nh) nh[k] = centered * istd;
      }
    }
    if (macs) macs->add(static_cast<std::uint64_t>(x.batch) * p);
  }
  if (tape) {
    tape->saved = {std::move(xhat)};
    tape->aux = inv_std;
    tape->aux.insert(tape->aux.end(), means.begin(), means.end());
    tape->aux.insert(tape->aux.end(), vars.begin(), vars.end());
    tape->aux.push_back(mode == Mode::Train ? T(1) : T(0));
  }
  return y;
}

template <typename T>
FeatureMap<T> BatchNorm<T>::backward(const LayerTape<T>& tape, const FeatureMap<T>& grad) {
  const auto& xhat = tape.saved.at(0);
  if (!grad.same_shape(xhat)) throw ShapeError("batch norm backward: gradient shape mismatch");
  const bool train = tape.aux.back() != T(0);
  FeatureMap<T> gx(xhat.batch, features_, xhat.grid);
  const auto p = xhat.plane_size();
  const T count = static_cast<T>(xhat.batch * p);
  for (std::size_t c = 0; c < features_; ++c) {
    const T istd = tape.aux[c];
    T sum_g = 0, sum_g_xhat = 0;
    for (std::size_t b = 0; b < xhat.batch; ++b) {
      const T* g = grad.plane(b, c).data();
      const T* nh = xhat.plane(b, c).data();
      for (std::size_t k = 0; k < p; ++k) {
        sum_g += g[k];
        sum_g_xhat += g[k] * nh[k];
      }
    }
    gamma.grad[c] += sum_g_xhat;
    beta.grad[c] += sum_g;
    const T gm = gamma.value[c];
    for (std::size_t b = 0; b < xhat.batch; ++b) {
      const T* g = grad.plane(b, c).data();
      const T* nh = xhat.plane(b, c).data();
      T* dst = gx.plane(b, c).data();
      if (train) {
        for (std::size_t k = 0; k < p; ++k) {
          dst[k] = gm * istd * (g[k] - sum_g / count - nh[k] * sum_g_xhat / count);
        }
      } else {
        for (std::size_t k = 0; k < p; ++k) dst[k] = gm * istd * g[k];
      }
    }
  }
  return gx;
}

template <typename T>
void BatchNorm<T>::commit(const LayerTape<T>& tape) {
  if (tape.aux.empty() || tape.aux.back() == T(0)) return;
  const auto& xhat = tape.saved.at(0);
  const double n = static_cast<double>(xhat.batch * xhat.plane_size());
  const double unbias = n > 1 ? n / (n - 1) : 1.0;
  for (std::size_t c = 0; c < features_; ++c) {
    const double mean = static_cast<double>(tape.aux[features_ + c]);
    const double var = static_cast<double>(tape.aux[2 * features_ + c]) * unbias;
    running_mean.value[c] =
        static_cast<T>((1 - momentum) * static_cast<double>(running_mean.value[c]) + momentum * mean);
    running_var.value[c] =
        static_cast<T>((1 - momentum) * static_cast<double>(running_var.value[c]) + momentum * var);
  }
}

// ---------------------------------------------------------------------------
// SiLU

template <typename T>
T silu(T x) {
  return x / (T(1) + std::exp(-x));
}

template <typename T>
T silu_derivative(T x) {
  const T s = T(1) / (T(1) + std::exp(-x));
  return s * (T(1) + x * (T(1) - s));
}

template <typename T>
FeatureMap<T> Silu<T>::forward(const FeatureMap<T>& x, Mode, LayerTape<T>* tape, MacCounter*) const {
  FeatureMap<T> y(x.batch, x.features, x.grid);
  std::transform(x.values.begin(), x.values.end(), y.values.begin(), [](T v) { return silu(v); });
  if (tape) tape->saved = {x};
  return y;
}

template <typename T>
FeatureMap<T> Silu<T>::backward(const LayerTape<T>& tape, const FeatureMap<T>& grad) {
  const auto& x = tape.saved.at(0);
  if (!grad.same_shape(x)) throw ShapeError("silu backward: gradient shape mismatch");
  FeatureMap<T> gx(x.batch, x.features, x.grid);
  for (std::size_t i = 0; i < x.values.size(); ++i) gx.values[i] = grad.values[i] * silu_derivative(x.values[i]);
  return gx;
}

// ---------------------------------------------------------------------------
// Block

template <typename T>
Block<T> Block<T>::inner(const InnerBlockSpec& spec, int dims, std::mt19937_64& rng) {
  const auto f = spec.features;
  const auto wide = spec.features * spec.expansion;
  std::vector<Layer<T>> layers;
  auto pointwise = [&](std::size_t in, std::size_t out) {
    PointwiseConv<T> conv(in, out);
    fan_in_uniform(conv.weight, in, rng);
    layers.emplace_back(std::move(conv));
  };
  pointwise(f, wide);
  layers.emplace_back(BatchNorm<T>(wide));
  layers.emplace_back(Silu<T>{});
  for (std::size_t d = 0; d < spec.depth; ++d) {
    DepthwiseConv<T> dw(wide, dims);
    fan_in_uniform(dw.weight, dw.taps(), rng);
    layers.emplace_back(std::move(dw));
    layers.emplace_back(BatchNorm<T>(wide));
    layers.emplace_back(Silu<T>{});
    pointwise(wide, wide);
    layers.emplace_back(BatchNorm<T>(wide));
    layers.emplace_back(Silu<T>{});
  }
  pointwise(wide, f);
  layers.emplace_back(BatchNorm<T>(f));
  return Block(std::move(layers));
}

template <typename T>
FeatureMap<T> Block<T>::forward(const FeatureMap<T>& x, Mode mode, BlockTape<T>* tape,
                                MacCounter* macs) const {
  if (tape) tape->layers.assign(layers_.size(), {});
  FeatureMap<T> current = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerTape<T>* lt = tape ? &tape->layers[i] : nullptr;
    current = std::visit([&](const auto& layer) { return layer.forward(current, mode, lt, macs); },
                         layers_[i]);
  }
  return current;
}

template <typename T>
FeatureMap<T> Block<T>::backward(const BlockTape<T>& tape, const FeatureMap<T>& grad) {
  if (tape.layers.size() != layers_.size()) throw ShapeError("block backward: tape does not match block");
  FeatureMap<T> g = grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = std::visit([&](auto& layer) { return layer.backward(tape.layers[i], g); }, layers_[i]);
  }
  return g;
}

template <typename T>
void Block<T>::commit(const BlockTape<T>& tape) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* bn = std::get_if<BatchNorm<T>>(&layers_[i])) bn->commit(tape.layers.at(i));
  }
}

template <typename T>
std::uint64_t Block<T>::macs(std::size_t batch, const GridSpec& grid) const {
  std::uint64_t total = 0;
  for (const auto& layer : layers_) {
    total += std::visit([&](const auto& l) { return l.macs(batch, grid); }, layer);
  }
  return total;
}

template <typename T>
std::vector<Parameter<T>*> Block<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& layer : layers_) {
    std::visit(
        [&](auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, PointwiseConv<T>> || std::is_same_v<L, DepthwiseConv<T>>) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
          } else if constexpr (std::is_same_v<L, BatchNorm<T>>) {
            out.push_back(&l.gamma);
            out.push_back(&l.beta);
          }
        },
        layer);
  }
  return out;
}

template <typename T>
std::vector<Buffer<T>*> Block<T>::buffers() {
  std::vector<Buffer<T>*> out;
  for (auto& layer : layers_) {
    if (auto* bn = std::get_if<BatchNorm<T>>(&layer)) {
      out.push_back(&bn->running_mean);
      out.push_back(&bn->running_var);
    }
  }
  return out;
}

template <typename T>
ConstancyReport zero_constancy_check(const Block<T>& block, std::size_t features, const GridSpec& grid,
                                     double tol, std::size_t batch) {
  FeatureMap<T> zero(batch, features, grid);
  auto y = block.forward(zero, Mode::Eval);
  double worst = 0.0;
  for (std::size_t b = 0; b < y.batch; ++b) {
    for (std::size_t c = 0; c < y.features; ++c) {
      auto plane = y.plane(b, c);
      double mean = 0.0;
      for (T v : plane) mean += static_cast<double>(v);
      mean /= static_cast<double>(plane.size());
      double sq = 0.0;
      for (T v : plane) sq += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
      worst = std::max(worst, std::sqrt(sq / static_cast<double>(plane.size())));
    }
  }
  return {worst <= tol, worst};
}

// ---------------------------------------------------------------------------
// Head

template <typename T>
Head<T>::Head(std::size_t features, std::size_t classes, std::mt19937_64& rng)
    : weight("head.weight", {classes, features}), bias("head.bias", {classes}) {
  fan_in_uniform(weight, features, rng);
}

template <typename T>
Logits<T> global_pool_and_head(const FeatureMap<T>& x, const Head<T>& head, Mode mode,
                               std::mt19937_64* rng, HeadTape<T>* tape, MacCounter* macs) {
  const auto f = head.features();
  require_features(x, f, "head");
  const auto k = head.classes();
  std::vector<T> pooled(x.batch * f);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t c = 0; c < f; ++c) {
      T sum = 0;
      for (T v : x.plane(b, c)) sum += v;
      pooled[b * f + c] = sum / static_cast<T>(x.plane_size());
    }
  }
  std::vector<T> mask;
  if (mode == Mode::Train && head.dropout > 0.0) {
    if (!rng) throw UsageError("head dropout in train mode needs a random generator");
    const T keep_scale = static_cast<T>(1.0 / (1.0 - head.dropout));
    mask.resize(pooled.size());
    for (auto& m : mask) m = uniform01(*rng) < head.dropout ? T(0) : keep_scale;
  }
  Logits<T> out{x.batch, k, std::vector<T>(x.batch * k)};
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t o = 0; o < k; ++o) {
      T acc = head.bias.value[o];
      for (std::size_t c = 0; c < f; ++c) {
        const T v = mask.empty() ? pooled[b * f + c] : pooled[b * f + c] * mask[b * f + c];
        acc += head.weight.value[o * f + c] * v;
      }
      out.values[b * k + o] = acc;
    }
  }
  if (macs) macs->add(static_cast<std::uint64_t>(x.batch) * k * f);
  if (tape) {
    tape->input = FeatureMap<T>(x.batch, f, x.grid);
    tape->input.values.clear();
    tape->pooled = std::move(pooled);
    tape->mask = std::move(mask);
  }
  return out;
}

template <typename T>
FeatureMap<T> head_backward(const HeadTape<T>& tape, Head<T>& head, const Logits<T>& grad) {
  const auto f = head.features();
  const auto k = head.classes();
  const auto batch = tape.input.batch;
  if (grad.batch != batch || grad.classes != k) throw ShapeError("head backward: gradient shape mismatch");
  FeatureMap<T> gx(batch, f, tape.input.grid);
  const T inv_p = T(1) / static_cast<T>(gx.plane_size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < f; ++c) {
      const T scale = tape.mask.empty() ? T(1) : tape.mask[b * f + c];
      const T x_used = tape.pooled[b * f + c] * scale;
      T g_pooled = 0;
      for (std::size_t o = 0; o < k; ++o) {
        const T g = grad.values[b * k + o];
        head.weight.grad[o * f + c] += g * x_used;
        g_pooled += g * head.weight.value[o * f + c];
      }
      g_pooled *= scale * inv_p;
      auto dst = gx.plane(b, c);
      std::fill(dst.begin(), dst.end(), g_pooled);
    }
  }
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < k; ++o) head.bias.grad[o] += grad.values[b * k + o];
  }
  return gx;
}

template <typename T>
double cross_entropy(const Logits<T>& logits, std::span<const int> labels, Logits<T>* grad) {
  if (labels.size() != logits.batch) throw ShapeError("label count does not match batch");
  if (grad) *grad = Logits<T>{logits.batch, logits.classes, std::vector<T>(logits.values.size())};
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(logits.batch);
  for (std::size_t b = 0; b < logits.batch; ++b) {
    const auto label = static_cast<std::size_t>(labels[b]);
    if (labels[b] < 0 || label >= logits.classes) throw ShapeError("label out of range");
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.classes; ++k) peak = std::max(peak, static_cast<double>(logits.at(b, k)));
    double z = 0.0;
    for (std::size_t k = 0; k < logits.classes; ++k) z += std::exp(static_cast<double>(logits.at(b, k)) - peak);
    const double log_z = peak + std::log(z);
    total += log_z - static_cast<double>(logits.at(b, label));
    if (grad) {
      for (std::size_t k = 0; k < logits.classes; ++k) {
        const double prob = std::exp(static_cast<double>(logits.at(b, k)) - log_z);
        grad->values[b * logits.classes + k] =
            static_cast<T>((prob - (k == label ? 1.0 : 0.0)) * inv_batch);
      }
    }
  }
  return total * inv_batch;
}

#define ARRN_INSTANTIATE_NN(T)                                                                      \
  template void fan_in_uniform<T>(Parameter<T>&, std::size_t, std::mt19937_64&);                   \
  template FeatureMap<T> to_feature_map<T>(std::span<const DiscreteSignal>);                        \
  template FeatureMap<T> to_feature_map<T>(const DiscreteSignal&);                                  \
  template DiscreteSignal to_signal<T>(const FeatureMap<T>&, std::size_t);                          \
  template class PointwiseConv<T>;                                                                  \
  template class DepthwiseConv<T>;                                                                  \
  template class BatchNorm<T>;                                                                      \
  template class Silu<T>;                                                                           \
  template T silu<T>(T);                                                                            \
  template T silu_derivative<T>(T);                                                                 \
  template class Block<T>;                                                                          \
  template ConstancyReport zero_constancy_check<T>(const Block<T>&, std::size_t, const GridSpec&,  \
                                                   double, std::size_t);                            \
  template struct Head<T>;                                                                          \
  template Logits<T> global_pool_and_head<T>(const FeatureMap<T>&, const Head<T>&, Mode,            \
                                             std::mt19937_64*, HeadTape<T>*, MacCounter*);          \
  template FeatureMap<T> head_backward<T>(const HeadTape<T>&, Head<T>&, const Logits<T>&);          \
  template double cross_entropy<T>(const Logits<T>&, std::span<const int>, Logits<T>*);

ARRN_INSTANTIATE_NN(float)
ARRN_INSTANTIATE_NN(double)

}  // namespace arrn
