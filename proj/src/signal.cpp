#include "arrn/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <utility>

#include "arrn/errors.hpp"

namespace arrn {

// ---------------------------------------------------------------------------
// GridSpec

GridSpec::GridSpec(std::vector<std::size_t> extents) {
  if (extents.empty() || extents.size() > 2) {
    throw ShapeError("grid must have 1 or 2 axes, got " + std::to_string(extents.size()));
  }
  for (auto e : extents) {
    if (e == 0) throw ShapeError("grid extents must be positive");
  }
  dims_ = static_cast<int>(extents.size());
  if (dims_ == 1) {
    shape_ = {1, extents[0]};
  } else {
    shape_ = {extents[0], extents[1]};
  }
}

std::size_t GridSpec::extent(int axis) const {
  if (axis < 0 || axis >= dims_) throw ShapeError("axis out of range");
  return dims_ == 1 ? shape_[1] : shape_[static_cast<std::size_t>(axis)];
}

std::vector<std::size_t> GridSpec::extents() const {
  if (dims_ == 1) return {shape_[1]};
  return {shape_[0], shape_[1]};
}

std::string GridSpec::to_string() const {
  std::ostringstream out;
  auto ext = extents();
  for (std::size_t i = 0; i < ext.size(); ++i) {
    if (i) out << 'x';
    out << ext[i];
  }
  return out.str();
}

bool comparable(const GridSpec& a, const GridSpec& b) {
  if (a.dims() != b.dims()) return false;
  for (int axis = 0; axis < a.dims(); ++axis) {
    auto x = a.extent(axis);
    auto y = b.extent(axis);
    if (x % y != 0 && y % x != 0) return false;
  }
  return true;
}

bool coarser_or_equal(const GridSpec& coarse, const GridSpec& fine) {
  if (!comparable(coarse, fine)) return false;
  for (int axis = 0; axis < fine.dims(); ++axis) {
    if (coarse.extent(axis) > fine.extent(axis)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// ResolutionLadder

ResolutionLadder::ResolutionLadder(std::vector<GridSpec> levels) : levels_(std::move(levels)) {
  if (levels_.size() < 2) throw UsageError("a resolution ladder needs at least 2 levels");
  for (std::size_t n = 1; n < levels_.size(); ++n) {
    const auto& fine = levels_[n - 1];
    const auto& coarse = levels_[n];
    if (fine.dims() != coarse.dims()) throw ShapeError("ladder levels disagree on dims");
    for (int axis = 0; axis < fine.dims(); ++axis) {
      const auto f = fine.extent(axis);
      const auto c = coarse.extent(axis);
      if (c >= f || f % c != 0) {
        throw ShapeError("ladder extents must strictly decrease and divide: " + fine.to_string() +
                         " -> " + coarse.to_string());
      }
    }
  }
}

ResolutionLadder ResolutionLadder::parse(const std::string& text) {
  std::vector<GridSpec> levels;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    std::vector<std::size_t> ext;
    std::stringstream axes(item);
    for (std::string a; std::getline(axes, a, 'x');) {
      std::size_t used = 0;
      long value = 0;
      try {
        value = std::stol(a, &used);
      } catch (const std::logic_error&) {
        throw UsageError("malformed ladder '" + text + "'");
      }
      if (used != a.size() || value <= 0) throw UsageError("malformed ladder '" + text + "'");
      ext.push_back(static_cast<std::size_t>(value));
    }
    levels.emplace_back(ext);
  }
  return ResolutionLadder(std::move(levels));
}

int ResolutionLadder::find(const GridSpec& grid) const {
  for (std::size_t n = 0; n < levels_.size(); ++n) {
    if (levels_[n] == grid) return static_cast<int>(n);
  }
  return -1;
}

std::string ResolutionLadder::to_string() const {
  std::string out;
  for (std::size_t n = 0; n < levels_.size(); ++n) {
    if (n) out += ',';
    out += levels_[n].to_string();
  }
  return out;
}

// ---------------------------------------------------------------------------
// DiscreteSignal

DiscreteSignal::DiscreteSignal(GridSpec grid, std::size_t features)
    : grid_(grid), features_(features), values_(features * grid.samples(), 0.0) {}

DiscreteSignal::DiscreteSignal(GridSpec grid, std::size_t features, std::vector<double> values)
    : grid_(grid), features_(features), values_(std::move(values)) {
  if (values_.size() != features_ * grid_.samples()) {
    throw ShapeError("signal value count " + std::to_string(values_.size()) +
                     " does not match " + std::to_string(features_) + " features on grid " +
                     grid_.to_string());
  }
  require_finite();
}

std::span<const double> DiscreteSignal::channel(std::size_t c) const {
  return std::span<const double>(values_).subspan(c * grid_.samples(), grid_.samples());
}

std::span<double> DiscreteSignal::channel(std::size_t c) {
  return std::span<double>(values_).subspan(c * grid_.samples(), grid_.samples());
}

void DiscreteSignal::require_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) throw NumericError("signal contains non-finite values");
  }
}

// ---------------------------------------------------------------------------
// Kernels

void validate(const SmoothingKernel& kernel) {
  if (auto* s = std::get_if<WindowedSincKernel>(&kernel)) {
    if (s->taps < 3 || s->taps % 2 == 0) {
      throw UsageError("windowed-sinc taps must be odd and >= 3");
    }
  } else if (auto* g = std::get_if<GaussianKernel>(&kernel)) {
    if (!(g->sigma_factor > 0) || !(g->radius_factor > 0)) {
      throw UsageError("gaussian sigma_factor and radius_factor must be positive");
    }
  }
}

bool is_perfect(const SmoothingKernel& kernel) {
  return std::holds_alternative<PerfectKernel>(kernel);
}

std::string kernel_name(const SmoothingKernel& kernel) {
  std::ostringstream out;
  out.precision(17);
  if (std::holds_alternative<PerfectKernel>(kernel)) {
    out << "perfect";
  } else if (auto* s = std::get_if<WindowedSincKernel>(&kernel)) {
    out << "sinc:" << s->taps;
  } else {
    const auto& g = std::get<GaussianKernel>(kernel);
    out << "gaussian:" << g.sigma_factor << ':' << g.radius_factor;
  }
  return out.str();
}

SmoothingKernel parse_kernel(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ':');) parts.push_back(item);
  if (parts.empty()) throw UsageError("empty kernel description");
  SmoothingKernel kernel;
  try {
    if (parts[0] == "perfect" && parts.size() == 1) {
      kernel = PerfectKernel{};
    } else if (parts[0] == "sinc" && parts.size() <= 2) {
      WindowedSincKernel s;
      if (parts.size() == 2) s.taps = std::stoi(parts[1]);
      kernel = s;
    } else if (parts[0] == "gaussian" && parts.size() <= 3) {
      GaussianKernel g;
      if (parts.size() >= 2) g.sigma_factor = std::stod(parts[1]);
      if (parts.size() == 3) g.radius_factor = std::stod(parts[2]);
      kernel = g;
    } else {
      throw UsageError("unknown kernel '" + text + "'");
    }
  } catch (const std::logic_error&) {
    throw UsageError("malformed kernel parameters in '" + text + "'");
  }
  validate(kernel);
  return kernel;
}

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

std::size_t decimation_factor(std::size_t fine, std::size_t coarse) {
  if (coarse == 0 || coarse > fine || fine % coarse != 0) {
    throw ShapeError("extent " + std::to_string(coarse) + " is not a divisor of " +
                     std::to_string(fine));
  }
  return fine / coarse;
}

}  // namespace

std::vector<double> realize_axis_kernel(const SmoothingKernel& kernel, std::size_t fine,
                                        std::size_t coarse) {
  validate(kernel);
  const auto factor = decimation_factor(fine, coarse);
  std::vector<double> taps(fine, 0.0);
  if (factor == 1 || is_perfect(kernel)) {
    // Perfect kernels are applied spectrally; a delta keeps this helper total.
    taps[0] = 1.0;
    return taps;
  }
  const auto d = static_cast<double>(factor);
  const auto n = static_cast<long>(fine);
  auto wrap = [n](long j) { return static_cast<std::size_t>(((j % n) + n) % n); };

  std::vector<std::pair<long, double>> raw;
  if (auto* s = std::get_if<WindowedSincKernel>(&kernel)) {
    const long half = (s->taps - 1) / 2;
    for (long j = -half; j <= half; ++j) {
      const double window =
          std::pow(std::cos(std::numbers::pi * static_cast<double>(j) / (s->taps + 1)), 2);
      raw.emplace_back(j, sinc(static_cast<double>(j) / d) * window);
    }
  } else {
    const auto& g = std::get<GaussianKernel>(kernel);
    const double sigma = g.sigma_factor * d;
    const auto radius = static_cast<long>(std::ceil(g.radius_factor * sigma));
    for (long j = -radius; j <= radius; ++j) {
      const double x = static_cast<double>(j);
      raw.emplace_back(j, std::exp(-x * x / (2 * sigma * sigma)));
    }
  }
  double total = 0.0;
  for (const auto& [j, v] : raw) total += v;
  for (const auto& [j, v] : raw) taps[wrap(j)] += v / total;
  return taps;
}

// ---------------------------------------------------------------------------
// FFT plumbing

namespace {

using cplx = std::complex<double>;

class FftwBuffer {
 public:
  explicit FftwBuffer(std::size_t n) : n_(n), data_(fftw_alloc_complex(n)) {
    if (!data_) throw std::bad_alloc();
  }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  ~FftwBuffer() { fftw_free(data_); }

  fftw_complex* get() { return data_; }
  cplx& operator[](std::size_t i) { return reinterpret_cast<cplx*>(data_)[i]; }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  fftw_complex* data_;
};

// Plan creation is not thread-safe in FFTW; execution with fftw_execute_dft is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t n, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(n, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    FftwBuffer in(n), out(n);
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), in.get(), out.get(), sign,
                                      FFTW_ESTIMATE);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

std::vector<cplx> forward_dft(std::span<const double> x) {
  const auto n = x.size();
  FftwBuffer in(n), out(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = cplx(x[i], 0.0);
  fftw_execute_dft(plan_cache().get(n, FFTW_FORWARD), in.get(), out.get());
  std::vector<cplx> spectrum(n);
  for (std::size_t i = 0; i < n; ++i) spectrum[i] = out[i];
  return spectrum;
}

// Real part of the normalized inverse transform.
std::vector<double> inverse_dft_real(std::span<const cplx> spectrum) {
  const auto n = spectrum.size();
  FftwBuffer in(n), out(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = spectrum[i];
  fftw_execute_dft(plan_cache().get(n, FFTW_BACKWARD), in.get(), out.get());
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = out[i].real() / static_cast<double>(n);
  return x;
}

long signed_frequency(std::size_t bin, std::size_t n) {
  const auto b = static_cast<long>(bin);
  const auto len = static_cast<long>(n);
  return 2 * b <= len ? b : b - len;
}

// Band of extent e contains |k| < e/2, plus the cosine part of |k| = e/2 for even e.
void lowpass_line_perfect(std::span<const double> in, std::span<double> out, std::size_t band) {
  const auto n = in.size();
  auto spectrum = forward_dft(in);
  std::vector<cplx> kept(n, cplx(0.0, 0.0));
  const bool even_band = band % 2 == 0;
  const auto half = static_cast<long>(band / 2);
  for (std::size_t j = 0; j < n; ++j) {
    const long k = signed_frequency(j, n);
    const long mag = std::abs(k);
    if (mag < half || (!even_band && mag == half)) {
      kept[j] = spectrum[j];
    } else if (even_band && mag == half) {
      if (band == n) {
        kept[j] = spectrum[j];
      } else {
        const std::size_t mirror = (n - j) % n;
        kept[j] = 0.5 * (spectrum[j] + spectrum[mirror]);
      }
    }
  }
  auto result = inverse_dft_real(kept);
  std::copy(result.begin(), result.end(), out.begin());
}

void resample_line_spectral(std::span<const double> in, std::span<double> out) {
  const auto n = in.size();
  const auto m = out.size();
  if (n == m) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  auto spectrum = forward_dft(in);
  std::vector<cplx> target(m, cplx(0.0, 0.0));
  const double scale = static_cast<double>(m) / static_cast<double>(n);
  const auto m_half = static_cast<long>(m / 2);
  const bool m_even = m % 2 == 0;
  const auto ml = static_cast<long>(m);
  auto place = [&](long k, cplx value) {
    const long mag = std::abs(k);
    if (mag < m_half || (!m_even && mag == m_half)) {
      target[static_cast<std::size_t>(((k % ml) + ml) % ml)] += scale * value;
    } else if (m_even && mag == m_half) {
      target[static_cast<std::size_t>(m_half)] += scale * value;
    }
  };
  for (std::size_t j = 0; j < n; ++j) {
    const long k = signed_frequency(j, n);
    if (n % 2 == 0 && 2 * j == n) {
      place(k, 0.5 * spectrum[j]);
      place(-k, 0.5 * spectrum[j]);
    } else {
      place(k, spectrum[j]);
    }
  }
  auto result = inverse_dft_real(target);
  std::copy(result.begin(), result.end(), out.begin());
}

void circular_convolve_line(std::span<const double> in, std::span<double> out,
                            std::span<const double> taps) {
  const auto n = in.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (taps[j] != 0.0) acc += taps[j] * in[(i + n - j) % n];
    }
    out[i] = acc;
  }
}

// Internal storage axis (0 = rows, 1 = cols) for a public axis.
int storage_axis(const GridSpec& grid, int axis) { return grid.dims() == 1 ? 1 : axis; }

template <typename LineOp>
DiscreteSignal apply_along_axis(const DiscreteSignal& signal, int axis, std::size_t out_extent,
                                LineOp&& op) {
  const auto& g = signal.grid();
  const int sa = storage_axis(g, axis);
  std::vector<std::size_t> ext = g.extents();
  ext[static_cast<std::size_t>(axis)] = out_extent;
  GridSpec out_grid(ext);
  DiscreteSignal out(out_grid, signal.features());

  const std::size_t in_len = sa == 1 ? g.cols() : g.rows();
  const std::size_t lines = sa == 1 ? g.rows() : g.cols();
  std::vector<double> line_in(in_len), line_out(out_extent);
  for (std::size_t c = 0; c < signal.features(); ++c) {
    for (std::size_t l = 0; l < lines; ++l) {
      for (std::size_t i = 0; i < in_len; ++i) {
        line_in[i] = sa == 1 ? signal.at(c, l, i) : signal.at(c, i, l);
      }
      op(std::span<const double>(line_in), std::span<double>(line_out));
      for (std::size_t i = 0; i < out_extent; ++i) {
        if (sa == 1) {
          out.at(c, l, i) = line_out[i];
        } else {
          out.at(c, i, l) = line_out[i];
        }
      }
    }
  }
  return out;
}

void require_coarser(const GridSpec& coarse, const GridSpec& fine) {
  if (!coarser_or_equal(coarse, fine)) {
    throw ShapeError("grid " + coarse.to_string() + " is not comparable-coarser than " +
                     fine.to_string());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Operators

DiscreteSignal lowpass(const DiscreteSignal& signal, const GridSpec& target,
                       const SmoothingKernel& kernel) {
  require_coarser(target, signal.grid());
  signal.require_finite();
  validate(kernel);
  DiscreteSignal current = signal;
  for (int axis = 0; axis < signal.grid().dims(); ++axis) {
    const auto fine = signal.grid().extent(axis);
    const auto band = target.extent(axis);
    if (band == fine) continue;
    if (is_perfect(kernel)) {
      current = apply_along_axis(current, axis, fine, [band](auto in, auto out) {
        lowpass_line_perfect(in, out, band);
      });
    } else {
      const auto taps = realize_axis_kernel(kernel, fine, band);
      current = apply_along_axis(current, axis, fine, [&taps](auto in, auto out) {
        circular_convolve_line(in, out, taps);
      });
    }
  }
  return current;
}

DiscreteSignal decimate(const DiscreteSignal& signal, const GridSpec& to) {
  require_coarser(to, signal.grid());
  const auto& g = signal.grid();
  const std::size_t row_stride = g.rows() / to.rows();
  const std::size_t col_stride = g.cols() / to.cols();
  DiscreteSignal out(to, signal.features());
  for (std::size_t c = 0; c < signal.features(); ++c) {
    for (std::size_t r = 0; r < to.rows(); ++r) {
      for (std::size_t q = 0; q < to.cols(); ++q) {
        out.at(c, r, q) = signal.at(c, r * row_stride, q * col_stride);
      }
    }
  }
  return out;
}

DiscreteSignal downsample(const DiscreteSignal& signal, const GridSpec& to,
                          const SmoothingKernel& kernel) {
  return decimate(lowpass(signal, to, kernel), to);
}

DiscreteSignal upsample(const DiscreteSignal& signal, const GridSpec& to) {
  require_coarser(signal.grid(), to);
  signal.require_finite();
  return resample_spectral(signal, to);
}

DiscreteSignal resample_spectral(const DiscreteSignal& signal, const GridSpec& to) {
  if (signal.grid().dims() != to.dims()) {
    throw ShapeError("cannot resample " + signal.grid().to_string() + " to " + to.to_string());
  }
  DiscreteSignal current = signal;
  for (int axis = 0; axis < to.dims(); ++axis) {
    const auto target = to.extent(axis);
    if (current.grid().extent(axis) == target) continue;
    current = apply_along_axis(current, axis, target,
                               [](auto in, auto out) { resample_line_spectral(in, out); });
  }
  return current;
}

DiscreteSignal mean_reject(const DiscreteSignal& signal) {
  DiscreteSignal out = signal;
  for (std::size_t c = 0; c < out.features(); ++c) {
    auto ch = out.channel(c);
    const double mean = std::accumulate(ch.begin(), ch.end(), 0.0) / static_cast<double>(ch.size());
    for (double& v : ch) v -= mean;
  }
  return out;
}

BandCheck check_bandlimited(const DiscreteSignal& signal, const GridSpec& level_grid,
                            const SmoothingKernel& kernel, double tol) {
  auto filtered = lowpass(signal, level_grid, kernel);
  double worst = 0.0;
  auto a = signal.values();
  auto b = filtered.values();
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return {worst <= tol, worst};
}

// ---------------------------------------------------------------------------
// Per-axis matrices

namespace axis_ops {

namespace {

template <typename ColumnOp>
std::vector<double> build_matrix(std::size_t out_len, std::size_t in_len, ColumnOp&& op) {
  std::vector<double> matrix(out_len * in_len, 0.0);
  std::vector<double> impulse(in_len, 0.0), column(out_len, 0.0);
  for (std::size_t j = 0; j < in_len; ++j) {
    std::fill(impulse.begin(), impulse.end(), 0.0);
    impulse[j] = 1.0;
    op(std::span<const double>(impulse), std::span<double>(column));
    for (std::size_t i = 0; i < out_len; ++i) matrix[i * in_len + j] = column[i];
  }
  return matrix;
}

}  // namespace

std::vector<double> lowpass_matrix(const SmoothingKernel& kernel, std::size_t fine,
                                   std::size_t coarse) {
  decimation_factor(fine, coarse);
  if (is_perfect(kernel)) {
    return build_matrix(fine, fine, [coarse](auto in, auto out) {
      lowpass_line_perfect(in, out, coarse);
    });
  }
  const auto taps = realize_axis_kernel(kernel, fine, coarse);
  return build_matrix(fine, fine,
                      [&taps](auto in, auto out) { circular_convolve_line(in, out, taps); });
}

std::vector<double> downsample_matrix(const SmoothingKernel& kernel, std::size_t fine,
                                      std::size_t coarse) {
  const auto factor = decimation_factor(fine, coarse);
  auto full = lowpass_matrix(kernel, fine, coarse);
  std::vector<double> matrix(coarse * fine);
  for (std::size_t i = 0; i < coarse; ++i) {
    std::copy_n(full.begin() + static_cast<long>(i * factor * fine), fine,
                matrix.begin() + static_cast<long>(i * fine));
  }
  return matrix;
}

std::vector<double> upsample_matrix(std::size_t coarse, std::size_t fine) {
  decimation_factor(fine, coarse);
  return build_matrix(fine, coarse, [](auto in, auto out) { resample_line_spectral(in, out); });
}

}  // namespace axis_ops

}  // namespace arrn
