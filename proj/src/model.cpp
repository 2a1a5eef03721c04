#include "arrn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "arrn/errors.hpp"

namespace arrn {

// ---------------------------------------------------------------------------
// SeparableOp

namespace {

std::vector<double> identity_matrix(std::size_t n) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
  return m;
}

template <typename T>
std::vector<T> cast_all(const std::vector<double>& v) {
  return std::vector<T>(v.begin(), v.end());
}

}  // namespace

template <typename T>
SeparableOp<T>::SeparableOp(GridSpec in, GridSpec out, const std::vector<double>& row_matrix,
                            const std::vector<double>& col_matrix)
    : in_(in), out_(out), rows_(cast_all<T>(row_matrix)), cols_(cast_all<T>(col_matrix)) {
  if (rows_.size() != out.rows() * in.rows() || cols_.size() != out.cols() * in.cols()) {
    throw ShapeError("separable operator matrix sizes do not match grids");
  }
}

template <typename T>
SeparableOp<T> SeparableOp<T>::lowpass(const SmoothingKernel& kernel, const GridSpec& grid, const GridSpec& band) {
  if (!coarser_or_equal(band, grid)) throw ShapeError("lowpass band " + band.to_string() + " not coarser than " + grid.to_string());
  auto axis = [&](std::size_t n, std::size_t b) {
    return n == 1 ? identity_matrix(1) : axis_ops::lowpass_matrix(kernel, n, b);
  };
  return SeparableOp(grid, grid, axis(grid.rows(), band.rows()), axis(grid.cols(), band.cols()));
}

template <typename T>
SeparableOp<T> SeparableOp<T>::downsample(const SmoothingKernel& kernel, const GridSpec& fine, const GridSpec& coarse) {
  if (!coarser_or_equal(coarse, fine)) throw ShapeError("cannot downsample " + fine.to_string() + " to " + coarse.to_string());
  auto axis = [&](std::size_t n, std::size_t c) {
    return n == 1 ? identity_matrix(1) : axis_ops::downsample_matrix(kernel, n, c);
  };
  return SeparableOp(fine, coarse, axis(fine.rows(), coarse.rows()), axis(fine.cols(), coarse.cols()));
}

template <typename T>
std::uint64_t SeparableOp<T>::macs() const {
  const std::uint64_t r = in_.rows(), c = in_.cols(), r2 = out_.rows(), c2 = out_.cols();
  std::uint64_t total = 0;
  if (c > 1 || c2 > 1) total += r * c2 * c;
  if (r > 1 || r2 > 1) total += r2 * r * c2;
  return total;
}

template <typename T>
FeatureMap<T> SeparableOp<T>::apply(const FeatureMap<T>& x, MacCounter* macs) const {
  if (!(x.grid == in_)) throw ShapeError("operator expects grid " + in_.to_string() + ", got " + x.grid.to_string());
  const std::size_t r = in_.rows(), c = in_.cols(), r2 = out_.rows(), c2 = out_.cols();
  const bool col_pass = c > 1 || c2 > 1;
  const bool row_pass = r > 1 || r2 > 1;
  FeatureMap<T> y(x.batch, x.features, out_);
  std::vector<T> tmp(r * c2);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t f = 0; f < x.features; ++f) {
      const T* src = x.plane(b, f).data();
      T* dst = y.plane(b, f).data();
      if (col_pass) {
        for (std::size_t i = 0; i < r; ++i) {
          const T* line = src + i * c;
          for (std::size_t k = 0; k < c2; ++k) {
            const T* m = &cols_[k * c];
            T acc = 0;
            for (std::size_t j = 0; j < c; ++j) acc += m[j] * line[j];
            tmp[i * c2 + k] = acc;
          }
        }
      } else {
        std::copy(src, src + r * c, tmp.begin());
      }
      if (row_pass) {
        for (std::size_t i = 0; i < r2; ++i) {
          T* out_line = dst + i * c2;
          std::fill(out_line, out_line + c2, T(0));
          for (std::size_t j = 0; j < r; ++j) {
            const T w = rows_[i * r + j];
            const T* in_line = &tmp[j * c2];
            for (std::size_t k = 0; k < c2; ++k) out_line[k] += w * in_line[k];
          }
        }
      } else {
        std::copy(tmp.begin(), tmp.end(), dst);
      }
      if (macs) macs->add(this->macs());
    }
  }
  return y;
}

template <typename T>
FeatureMap<T> SeparableOp<T>::apply_transpose(const FeatureMap<T>& g) const {
  if (!(g.grid == out_)) throw ShapeError("adjoint expects grid " + out_.to_string());
  const std::size_t r = in_.rows(), c = in_.cols(), r2 = out_.rows(), c2 = out_.cols();
  FeatureMap<T> y(g.batch, g.features, in_);
  std::vector<T> tmp(r * c2);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t f = 0; f < g.features; ++f) {
      const T* src = g.plane(b, f).data();
      T* dst = y.plane(b, f).data();
      std::fill(tmp.begin(), tmp.end(), T(0));
      for (std::size_t i = 0; i < r2; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
          const T w = rows_[i * r + j];
          for (std::size_t k = 0; k < c2; ++k) tmp[j * c2 + k] += w * src[i * c2 + k];
        }
      }
      for (std::size_t i = 0; i < r; ++i) {
        T* out_line = dst + i * c;
        for (std::size_t k = 0; k < c2; ++k) {
          const T gv = tmp[i * c2 + k];
          const T* m = &cols_[k * c];
          for (std::size_t j = 0; j < c; ++j) out_line[j] += m[j] * gv;
        }
      }
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Dropout

DropoutConfig DropoutConfig::uniform(std::size_t residuals, double p) {
  DropoutConfig c{std::vector<double>(residuals, p)};
  c.validate();
  return c;
}

void DropoutConfig::validate() const {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("dropout probability outside [0, 1]");
  }
}

bool DropoutConfig::any() const {
  return std::any_of(p.begin(), p.end(), [](double v) { return v > 0.0; });
}

DropoutMask DropoutMask::all_on(std::size_t residuals) {
  return from_indep(std::vector<int>(residuals, 1));
}

DropoutMask DropoutMask::from_indep(std::vector<int> indep) {
  DropoutMask m;
  m.indep = std::move(indep);
  m.chain.resize(m.indep.size());
  int prev = 0;
  for (std::size_t i = 0; i < m.indep.size(); ++i) {
    prev = (m.indep[i] != 0 || prev != 0) ? 1 : 0;
    m.chain[i] = prev;
  }
  return m;
}

DropoutMask DropoutMask::drop_first(std::size_t residuals, std::size_t k) {
  std::vector<int> indep(residuals, 1);
  for (std::size_t i = 0; i < std::min(k, residuals); ++i) indep[i] = 0;
  return from_indep(std::move(indep));
}

DropoutMask sample_mask(std::mt19937_64& rng, const DropoutConfig& config) {
  config.validate();
  std::vector<int> indep(config.p.size());
  for (std::size_t i = 0; i < indep.size(); ++i) indep[i] = uniform01(rng) >= config.p[i] ? 1 : 0;
  return DropoutMask::from_indep(std::move(indep));
}

// ---------------------------------------------------------------------------
// Entry level

std::string policy_name(EntryPolicy policy) {
  return policy == EntryPolicy::PreferFiner ? "prefer-finer" : "prefer-coarser";
}

EntryPolicy parse_policy(const std::string& text) {
  if (text == "prefer-finer") return EntryPolicy::PreferFiner;
  if (text == "prefer-coarser") return EntryPolicy::PreferCoarser;
  throw UsageError("unknown entry policy '" + text + "'");
}

EntryChoice entry_level(const ResolutionLadder& ladder, const GridSpec& input, EntryPolicy policy) {
  if (input.dims() != ladder.dims()) throw ShapeError("input dims do not match the ladder");
  auto all_axes = [&](const GridSpec& g, auto cmp) {
    for (int a = 0; a < g.dims(); ++a) {
      if (!cmp(g.extent(a), input.extent(a))) return false;
    }
    return true;
  };
  if (!all_axes(ladder.level(0), std::greater_equal<>{})) {
    throw ShapeError("input " + input.to_string() + " is larger than the finest level " + ladder.level(0).to_string());
  }
  std::size_t level = 0;
  if (policy == EntryPolicy::PreferFiner) {
    for (std::size_t n = 0; n < ladder.size(); ++n) {
      if (all_axes(ladder.level(n), std::greater_equal<>{})) level = n;
    }
  } else {
    level = ladder.last();
    for (std::size_t n = 0; n < ladder.size(); ++n) {
      if (all_axes(ladder.level(n), std::less_equal<>{})) {
        level = n;
        break;
      }
    }
  }
  return {level, !(ladder.level(level) == input)};
}

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec desk_model_spec() {
  ModelSpec spec;
  spec.ladder = ResolutionLadder::parse("64,32,16");
  spec.features = {8, 16, 32};
  spec.classes = 4;
  return spec;
}

void ModelSpec::validate() const {
  if (ladder.size() < 2) throw UsageError("model needs a ladder with at least 2 levels");
  if (features.size() != ladder.size()) throw ShapeError("one feature count per ladder level required");
  if (in_features == 0 || classes == 0 || expansion == 0 || head_expansion == 0) {
    throw UsageError("feature, class and expansion counts must be positive");
  }
  for (auto f : features) {
    if (f == 0) throw UsageError("feature counts must be positive");
  }
  if (!dropout.p.empty() && dropout.p.size() != residual_count()) {
    throw ShapeError("dropout config needs one probability per residual");
  }
  dropout.validate();
  if (!(head_dropout >= 0.0 && head_dropout < 1.0)) throw UsageError("head dropout outside [0, 1)");
  arrn::validate(kernel);
}

// ---------------------------------------------------------------------------
// Projection helpers

template <typename T>
FeatureMap<T> project(const FeatureMap<T>& x, const std::vector<T>& matrix, std::size_t out, MacCounter* macs) {
  const auto in = x.features;
  if (matrix.size() != out * in) throw ShapeError("projection matrix does not match feature count");
  FeatureMap<T> y(x.batch, out, x.grid);
  const auto p = x.plane_size();
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      T* dst = y.plane(b, o).data();
      for (std::size_t i = 0; i < in; ++i) {
        const T w = matrix[o * in + i];
        const T* src = x.plane(b, i).data();
        for (std::size_t k = 0; k < p; ++k) dst[k] += w * src[k];
      }
    }
  }
  if (macs) macs->add(static_cast<std::uint64_t>(x.batch) * p * in * out);
  return y;
}

namespace {

// grad wrt input of y = M x, accumulating dM += g x^T.
template <typename T>
FeatureMap<T> project_backward(const FeatureMap<T>& x, Parameter<T>& m, const FeatureMap<T>& g, bool need_input) {
  const auto in = x.features;
  const auto out = g.features;
  const auto p = x.plane_size();
  FeatureMap<T> gx;
  if (need_input) gx = FeatureMap<T>(x.batch, in, x.grid);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      const T* gp = g.plane(b, o).data();
      for (std::size_t i = 0; i < in; ++i) {
        const T* src = x.plane(b, i).data();
        const T w = m.value[o * in + i];
        T acc = 0;
        if (need_input) {
          T* dst = gx.plane(b, i).data();
          for (std::size_t k = 0; k < p; ++k) {
            acc += gp[k] * src[k];
            dst[k] += w * gp[k];
          }
        } else {
          for (std::size_t k = 0; k < p; ++k) acc += gp[k] * src[k];
        }
        m.grad[o * in + i] += acc;
      }
    }
  }
  return gx;
}

template <typename T>
void mean_reject_inplace(FeatureMap<T>& x) {
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t c = 0; c < x.features; ++c) {
      auto plane = x.plane(b, c);
      T sum = 0;
      for (T v : plane) sum += v;
      const T mean = sum / static_cast<T>(plane.size());
      for (auto& v : plane) v -= mean;
    }
  }
}

template <typename T>
void for_each_batch_norm(Block<T>& block, auto fn) {
  for (auto& layer : block.layers()) {
    if (auto* bn = std::get_if<BatchNorm<T>>(&layer)) fn(*bn);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// LaplacianResidual

template <typename T>
LaplacianResidual<T>::LaplacianResidual(std::size_t level, const GridSpec& in_grid, const GridSpec& out_grid,
                                        std::size_t in_features, std::size_t out_features,
                                        const SmoothingKernel& kernel, const InnerBlockSpec& block_spec,
                                        std::mt19937_64& rng)
    : projection("projection", {out_features, in_features}),
      level_(level),
      in_grid_(in_grid),
      out_grid_(out_grid),
      in_features_(in_features),
      out_features_(out_features),
      lowpass_(SeparableOp<T>::lowpass(kernel, in_grid, out_grid)),
      down_(SeparableOp<T>::downsample(kernel, in_grid, out_grid)) {
  if (block_spec.features != in_features) throw ShapeError("block features must match residual input features");
  block = Block<T>::inner(block_spec, in_grid.dims(), rng);
  // Zero-initialized final scale: every residual starts as the projected downsample.
  if (auto* bn = std::get_if<BatchNorm<T>>(&block.layers().back())) std::fill(bn->gamma.value.begin(), bn->gamma.value.end(), T(0));
  fan_in_uniform(projection, in_features, rng);
}

template <typename T>
FeatureMap<T> LaplacianResidual<T>::forward(const FeatureMap<T>& r, int gate, Mode mode, ResidualTape<T>* tape,
                                            MacCounter* macs) const {
  if (!(r.grid == in_grid_) || r.features != in_features_) {
    throw ShapeError("residual " + std::to_string(level_) + " expects " + std::to_string(in_features_) + " x " +
                     in_grid_.to_string() + ", got " + std::to_string(r.features) + " x " + r.grid.to_string());
  }
  FeatureMap<T> down;
  if (gate != 0) {
    auto diff = lowpass_.apply(r, macs);
    for (std::size_t i = 0; i < diff.values.size(); ++i) diff.values[i] = r.values[i] - diff.values[i];
    auto b = block.forward(diff, mode, tape ? &tape->block : nullptr, macs);
    mean_reject_inplace(b);
    for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] += r.values[i];
    down = down_.apply(b, macs);
  } else {
    down = down_.apply(r, macs);
  }
  auto out = project(down, projection.value, out_features_, macs);
  if (tape) {
    tape->gate = gate;
    tape->summed_down = std::move(down);
  }
  return out;
}

template <typename T>
FeatureMap<T> LaplacianResidual<T>::backward(const ResidualTape<T>& tape, const FeatureMap<T>& grad) {
  auto gz = project_backward(tape.summed_down, projection, grad, true);
  auto gu = down_.apply_transpose(gz);
  if (tape.gate == 0) return gu;
  auto gb = gu;
  mean_reject_inplace(gb);
  auto gdiff = block.backward(tape.block, gb);
  auto glow = lowpass_.apply_transpose(gdiff);
  for (std::size_t i = 0; i < gu.values.size(); ++i) gu.values[i] += gdiff.values[i] - glow.values[i];
  return gu;
}

template <typename T>
void LaplacianResidual<T>::commit(const ResidualTape<T>& tape) {
  if (tape.gate != 0) block.commit(tape.block);
}

template <typename T>
std::uint64_t LaplacianResidual<T>::macs(std::size_t batch) const {
  return static_cast<std::uint64_t>(batch) * in_features_ * (lowpass_.macs() + down_.macs()) +
         block.macs(batch, in_grid_) +
         static_cast<std::uint64_t>(batch) * out_grid_.samples() * in_features_ * out_features_;
}

// ---------------------------------------------------------------------------
// ArrnModel

template <typename T>
ArrnModel<T>::ArrnModel(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  if (spec_.dropout.p.empty()) spec_.dropout = DropoutConfig::uniform(spec_.residual_count(), 0.0);
  spec_.validate();
  std::mt19937_64 rng(seed);
  input_projection_ = Parameter<T>("input_projection", {spec_.features[0], spec_.in_features});
  fan_in_uniform(input_projection_, spec_.in_features, rng);
  const auto& ladder = spec_.ladder;
  for (std::size_t i = 0; i < spec_.residual_count(); ++i) {
    InnerBlockSpec bs{spec_.features[i], spec_.expansion, spec_.depth};
    residuals_.emplace_back(i, ladder.level(i), ladder.level(i + 1), spec_.features[i], spec_.features[i + 1],
                            spec_.kernel, bs, rng);
  }
  const auto top = spec_.features.back();
  head_block_ = Block<T>::inner({top, spec_.head_expansion, spec_.depth}, ladder.dims(), rng);
  head_ = Head<T>(top, spec_.classes, rng);
  head_.dropout = spec_.head_dropout;

  auto label_block = [](Block<T>& block, const std::string& prefix) {
    std::size_t k = 0;
    for (auto* p : block.parameters()) p->name = prefix + "." + std::to_string(k++) + "." + p->name;
    k = 0;
    for (auto* b : block.buffers()) b->name = prefix + "." + std::to_string(k++) + "." + b->name;
  };
  for (auto& res : residuals_) {
    const auto prefix = "res" + std::to_string(res.level());
    label_block(res.block, prefix + ".block");
    res.projection.name = prefix + ".projection";
  }
  label_block(head_block_, "head_block");
}

template <typename T>
ArrnModel<T>::ArrnModel(const ArrnModel& other)
    : spec_(other.spec_),
      input_projection_(other.input_projection_),
      residuals_(other.residuals_),
      head_block_(other.head_block_),
      head_(other.head_) {}

template <typename T>
ArrnModel<T>& ArrnModel<T>::operator=(const ArrnModel& other) {
  if (this != &other) {
    spec_ = other.spec_;
    input_projection_ = other.input_projection_;
    residuals_ = other.residuals_;
    head_block_ = other.head_block_;
    head_ = other.head_;
    invalidate();
  }
  return *this;
}

template <typename T>
void ArrnModel<T>::set_dropout(const DropoutConfig& config) {
  config.validate();
  if (config.p.size() != residuals_.size()) throw ShapeError("dropout config needs one probability per residual");
  spec_.dropout = config;
}

template <typename T>
void ArrnModel<T>::invalidate() {
  std::lock_guard lock(cache_mutex_);
  composed_.clear();
}

template <typename T>
std::vector<T> ArrnModel<T>::composed_projection(std::size_t u) const {
  if (u >= spec_.ladder.size()) throw ShapeError("entry level outside the ladder");
  std::lock_guard lock(cache_mutex_);
  if (composed_.empty()) {
    composed_.resize(spec_.ladder.size());
    const auto in = spec_.in_features;
    std::vector<double> acc(input_projection_.value.begin(), input_projection_.value.end());
    composed_[0].assign(acc.begin(), acc.end());
    for (std::size_t n = 1; n < spec_.ladder.size(); ++n) {
      const auto& a = residuals_[n - 1].projection.value;
      const auto rows = spec_.features[n];
      const auto mid = spec_.features[n - 1];
      std::vector<double> next(rows * in, 0.0);
      for (std::size_t o = 0; o < rows; ++o) {
        for (std::size_t k = 0; k < mid; ++k) {
          const double w = static_cast<double>(a[o * mid + k]);
          for (std::size_t i = 0; i < in; ++i) next[o * in + i] += w * acc[k * in + i];
        }
      }
      acc = std::move(next);
      composed_[n].assign(acc.begin(), acc.end());
    }
  }
  return composed_[u];
}

template <typename T>
Logits<T> ArrnModel<T>::run(std::size_t entry, const FeatureMap<T>& x, const DropoutMask& mask, Mode mode,
                            std::mt19937_64* rng, ModelTape<T>* tape, MacCounter* macs) const {
  const auto& grid = spec_.ladder.level(entry);
  if (!(x.grid == grid)) throw ShapeError("input grid " + x.grid.to_string() + " is not ladder level " + grid.to_string());
  if (x.features != spec_.in_features) throw ShapeError("input feature count does not match the model");
  if (mask.chain.size() != residuals_.size()) throw ShapeError("dropout mask length does not match residual count");
  if (tape) {
    tape->entry = entry;
    tape->input = x;
    tape->residuals.assign(residuals_.size(), {});
  }
  auto r = entry == 0 ? project(x, input_projection_.value, spec_.features[0], macs)
                      : project(x, composed_projection(entry), spec_.features[entry], macs);
  for (std::size_t i = entry; i < residuals_.size(); ++i) {
    r = residuals_[i].forward(r, mask.chain[i], mode, tape ? &tape->residuals[i] : nullptr, macs);
  }
  auto h = head_block_.forward(r, mode, tape ? &tape->head_block : nullptr, macs);
  return global_pool_and_head(h, head_, mode, rng, tape ? &tape->head : nullptr, macs);
}

template <typename T>
Logits<T> ArrnModel<T>::forward_full(const FeatureMap<T>& x, const DropoutMask& mask, Mode mode,
                                     std::mt19937_64* rng, ModelTape<T>* tape, MacCounter* macs) const {
  return run(0, x, mask, mode, rng, tape, macs);
}

template <typename T>
Logits<T> ArrnModel<T>::forward_full(const FeatureMap<T>& x) const {
  return run(0, x, DropoutMask::all_on(residuals_.size()), Mode::Eval, nullptr, nullptr, nullptr);
}

template <typename T>
Logits<T> ArrnModel<T>::forward_adapted(const FeatureMap<T>& x, Mode mode, MacCounter* macs) const {
  const int u = spec_.ladder.find(x.grid);
  if (u < 0) throw ShapeError("input grid " + x.grid.to_string() + " is not a ladder level");
  return run(static_cast<std::size_t>(u), x, DropoutMask::all_on(residuals_.size()), mode, nullptr, nullptr, macs);
}

template <typename T>
void ArrnModel<T>::backward(ModelTape<T>& tape, const Logits<T>& grad) {
  if (tape.entry != 0) throw UsageError("backward requires a full-path tape");
  auto g = head_backward(tape.head, head_, grad);
  g = head_block_.backward(tape.head_block, g);
  for (std::size_t i = residuals_.size(); i-- > 0;) g = residuals_[i].backward(tape.residuals[i], g);
  project_backward(tape.input, input_projection_, g, false);
}

template <typename T>
void ArrnModel<T>::commit(const ModelTape<T>& tape) {
  for (std::size_t i = tape.entry; i < residuals_.size(); ++i) residuals_[i].commit(tape.residuals[i]);
  head_block_.commit(tape.head_block);
}

template <typename T>
std::uint64_t ArrnModel<T>::count_macs(std::size_t u, std::size_t batch) const {
  if (u >= spec_.ladder.size()) throw ShapeError("entry level outside the ladder");
  const auto& ladder = spec_.ladder;
  std::uint64_t total = static_cast<std::uint64_t>(batch) * ladder.level(u).samples() * spec_.in_features *
                        spec_.features[u];
  for (std::size_t i = u; i < residuals_.size(); ++i) total += residuals_[i].macs(batch);
  total += head_block_.macs(batch, ladder.level(ladder.last()));
  total += static_cast<std::uint64_t>(batch) * head_.classes() * head_.features();
  return total;
}

template <typename T>
std::vector<Parameter<T>*> ArrnModel<T>::parameters() {
  std::vector<Parameter<T>*> out{&input_projection_};
  for (auto& res : residuals_) {
    for (auto* p : res.block.parameters()) out.push_back(p);
    out.push_back(&res.projection);
  }
  for (auto* p : head_block_.parameters()) out.push_back(p);
  out.push_back(&head_.weight);
  out.push_back(&head_.bias);
  return out;
}

template <typename T>
std::vector<Buffer<T>*> ArrnModel<T>::buffers() {
  std::vector<Buffer<T>*> out;
  for (auto& res : residuals_) {
    for (auto* b : res.block.buffers()) out.push_back(b);
  }
  for (auto* b : head_block_.buffers()) out.push_back(b);
  return out;
}

template <typename T>
void ArrnModel<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
void ArrnModel<T>::randomize_normalization(std::mt19937_64& rng) {
  auto perturb = [&](BatchNorm<T>& bn) {
    for (auto& v : bn.gamma.value) v = static_cast<T>(0.5 + uniform01(rng));
    for (auto& v : bn.beta.value) v = static_cast<T>(uniform01(rng) - 0.5);
    for (auto& v : bn.running_mean.value) v = static_cast<T>(0.5 * standard_normal(rng));
    for (auto& v : bn.running_var.value) v = static_cast<T>(0.5 + 1.5 * uniform01(rng));
  };
  for (auto& res : residuals_) for_each_batch_norm(res.block, perturb);
  for_each_batch_norm(head_block_, perturb);
}

// ---------------------------------------------------------------------------
// Equivalence

template <typename T>
EquivalenceReport equivalence_report(const ArrnModel<T>& model, std::span<const DiscreteSignal> inputs) {
  if (inputs.empty()) return {};
  const auto& ladder = model.ladder();
  std::vector<DiscreteSignal> lifted;
  lifted.reserve(inputs.size());
  for (const auto& s : inputs) lifted.push_back(upsample(s, ladder.level(0)));
  auto adapted = model.forward_adapted(to_feature_map<T>(inputs));
  auto full = model.forward_full(to_feature_map<T>(std::span<const DiscreteSignal>(lifted)));
  EquivalenceReport rep;
  double scale = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < full.values.size(); ++i) {
    const double d = std::abs(static_cast<double>(full.values[i]) - static_cast<double>(adapted.values[i]));
    rep.max_abs = std::max(rep.max_abs, d);
    sum += d;
    scale = std::max(scale, std::abs(static_cast<double>(full.values[i])));
  }
  rep.mean_abs = sum / static_cast<double>(full.values.size());
  rep.max_rel = scale > 0.0 ? rep.max_abs / scale : rep.max_abs;
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[] = "ARNN1\n";

template <typename T>
constexpr Dtype dtype_of() {
  return std::is_same_v<T, float> ? Dtype::F32 : Dtype::F64;
}

std::string join(const std::vector<std::size_t>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + std::to_string(v[i]);
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, sep);) parts.push_back(item);
  return parts;
}

std::size_t to_count(const std::string& text) {
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(text, &used);
  } catch (const std::logic_error&) {
    throw FormatError("malformed number '" + text + "' in checkpoint manifest");
  }
  if (used != text.size()) throw FormatError("malformed number '" + text + "' in checkpoint manifest");
  return v;
}

double to_real(const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::logic_error&) {
    throw FormatError("malformed number '" + text + "' in checkpoint manifest");
  }
  if (used != text.size()) throw FormatError("malformed number '" + text + "' in checkpoint manifest");
  return v;
}

struct Manifest {
  std::map<std::string, std::string> fields;
  std::vector<std::pair<std::string, std::size_t>> tensors;  // name, element count

  const std::string& get(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw FormatError("checkpoint manifest lacks '" + key + "'");
    return it->second;
  }
};

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  for (const auto& line : split(text, '\n')) {
    if (line.empty()) continue;
    if (line.rfind("tensor ", 0) == 0) {
      auto parts = split(line, ' ');
      if (parts.size() != 3) throw FormatError("malformed tensor line in checkpoint manifest");
      m.tensors.emplace_back(parts[1], to_count(parts[2]));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed checkpoint manifest line '" + line + "'");
    m.fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

ModelSpec spec_from_manifest(const Manifest& m) {
  try {
    ModelSpec spec;
    spec.ladder = ResolutionLadder::parse(m.get("ladder"));
    spec.in_features = to_count(m.get("in_features"));
    for (const auto& f : split(m.get("features"), ',')) spec.features.push_back(to_count(f));
    spec.classes = to_count(m.get("classes"));
    spec.kernel = parse_kernel(m.get("kernel"));
    spec.expansion = to_count(m.get("expansion"));
    spec.depth = to_count(m.get("depth"));
    spec.head_expansion = to_count(m.get("head_expansion"));
    spec.head_dropout = to_real(m.get("head_dropout"));
    for (const auto& p : split(m.get("dropout"), ',')) spec.dropout.p.push_back(to_real(p));
    spec.validate();
    return spec;
  } catch (const FormatError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw FormatError(std::string("invalid model description in checkpoint: ") + e.what());
  }
}

template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>> tensor_list(ArrnModel<T>& model) {
  std::vector<std::pair<std::string, std::vector<T>*>> out;
  for (auto* p : model.parameters()) out.emplace_back(p->name, &p->value);
  for (auto* b : model.buffers()) out.emplace_back(b->name, &b->value);
  return out;
}

}  // namespace

std::string spec_manifest(const ModelSpec& spec) {
  std::ostringstream out;
  out.precision(17);
  out << "ladder=" << spec.ladder.to_string() << '\n'
      << "in_features=" << spec.in_features << '\n'
      << "features=" << join(spec.features, ',') << '\n'
      << "classes=" << spec.classes << '\n'
      << "kernel=" << kernel_name(spec.kernel) << '\n'
      << "expansion=" << spec.expansion << '\n'
      << "depth=" << spec.depth << '\n'
      << "head_expansion=" << spec.head_expansion << '\n'
      << "head_dropout=" << spec.head_dropout << '\n'
      << "dropout=" << join_doubles(spec.dropout.p) << '\n';
  return out.str();
}

template <typename T>
void write_checkpoint(std::ostream& out, const ArrnModel<T>& model) {
  auto& m = const_cast<ArrnModel<T>&>(model);
  std::string manifest = spec_manifest(model.spec());
  manifest += "dtype=" + dtype_name(dtype_of<T>()) + "\n";
  const auto tensors = tensor_list(m);
  for (const auto& [name, values] : tensors) manifest += "tensor " + name + " " + std::to_string(values->size()) + "\n";
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  le::put_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& [name, values] : tensors) {
    for (T v : *values) {
      if constexpr (std::is_same_v<T, float>) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        le::put_u32(out, bits);
      } else {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        le::put_u32(out, static_cast<std::uint32_t>(bits));
        le::put_u32(out, static_cast<std::uint32_t>(bits >> 32));
      }
    }
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ArrnModel<T>& model) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, model);
  write_file_atomic(path, out.str());
}

namespace {

Manifest read_manifest(std::istream& in) {
  char magic[sizeof(kCheckpointMagic) - 1];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError("not an ARNN1 checkpoint (bad magic)");
  }
  const auto len = le::get_u32(in);
  if (len > (1u << 24)) throw FormatError("checkpoint manifest too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw FormatError("truncated checkpoint manifest");
  return parse_manifest(text);
}

}  // namespace

template <typename T>
ArrnModel<T> read_checkpoint(std::istream& in) {
  const auto manifest = read_manifest(in);
  Dtype dtype{};
  try {
    dtype = parse_dtype(manifest.get("dtype"));
  } catch (const UsageError& e) {
    throw FormatError(e.what());
  }
  if (dtype != dtype_of<T>()) {
    throw FormatError("checkpoint holds " + dtype_name(dtype) + " values, expected " + dtype_name(dtype_of<T>()));
  }
  ArrnModel<T> model(spec_from_manifest(manifest), 0);
  auto tensors = tensor_list(model);
  if (tensors.size() != manifest.tensors.size()) throw FormatError("checkpoint tensor list does not match the model");
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& [name, values] = tensors[t];
    if (manifest.tensors[t].first != name || manifest.tensors[t].second != values->size()) {
      throw FormatError("checkpoint tensor '" + manifest.tensors[t].first + "' does not match the model");
    }
    for (auto& v : *values) {
      try {
        if constexpr (std::is_same_v<T, float>) {
          const std::uint32_t bits = le::get_u32(in);
          std::memcpy(&v, &bits, 4);
        } else {
          const std::uint64_t lo = le::get_u32(in);
          const std::uint64_t hi = le::get_u32(in);
          const std::uint64_t bits = lo | (hi << 32);
          std::memcpy(&v, &bits, 8);
        }
      } catch (const FormatError&) {
        throw FormatError("truncated checkpoint payload");
      }
      if (!std::isfinite(v)) throw FormatError("non-finite value in checkpoint tensor '" + name + "'");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint payload");
  model.invalidate();
  return model;
}

template <typename T>
ArrnModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint<T>(in);
}

Dtype checkpoint_dtype(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  try {
    return parse_dtype(read_manifest(in).get("dtype"));
  } catch (const UsageError& e) {
    throw FormatError(e.what());
  }
}

#define ARRN_INSTANTIATE_MODEL(T)                                                                       \
  template class SeparableOp<T>;                                                                        \
  template class LaplacianResidual<T>;                                                                  \
  template class ArrnModel<T>;                                                                          \
  template FeatureMap<T> project<T>(const FeatureMap<T>&, const std::vector<T>&, std::size_t, MacCounter*); \
  template EquivalenceReport equivalence_report<T>(const ArrnModel<T>&, std::span<const DiscreteSignal>); \
  template void save_checkpoint<T>(const std::filesystem::path&, const ArrnModel<T>&);                 \
  template void write_checkpoint<T>(std::ostream&, const ArrnModel<T>&);                                \
  template ArrnModel<T> load_checkpoint<T>(const std::filesystem::path&);                               \
  template ArrnModel<T> read_checkpoint<T>(std::istream&);

ARRN_INSTANTIATE_MODEL(float)
ARRN_INSTANTIATE_MODEL(double)

}  // namespace arrn
