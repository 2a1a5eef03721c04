#pragma once

// Discrete signals on the periodic unit domain [0,1)^d and the sampling,
// interpolation, low-pass, decimation and mean-rejection operators built on them.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace arrn {

/// Regular grid over the unit torus with 1 or 2 spatial axes.
///
/// Internally every grid is stored as rows x cols; a 1-D grid has a single row.
class GridSpec {
 public:
  GridSpec() = default;
  explicit GridSpec(std::vector<std::size_t> extents);

  static GridSpec line(std::size_t n) { return GridSpec({n}); }
  static GridSpec plane(std::size_t rows, std::size_t cols) { return GridSpec({rows, cols}); }

  int dims() const { return dims_; }
  /// Extent along public axis `axis` (0 .. dims-1).
  std::size_t extent(int axis) const;
  std::vector<std::size_t> extents() const;
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_[1]; }
  std::size_t samples() const { return shape_[0] * shape_[1]; }

  std::string to_string() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  int dims_ = 1;
  std::array<std::size_t, 2> shape_{1, 1};
};

/// True when both grids have the same dims and, per axis, one extent divides the other.
bool comparable(const GridSpec& a, const GridSpec& b);
/// True when `coarse` is comparable with `fine` and no axis of `coarse` is larger.
bool coarser_or_equal(const GridSpec& coarse, const GridSpec& fine);

/// Chain of grids ordered fine to coarse; index 0 is the finest.
class ResolutionLadder {
 public:
  ResolutionLadder() = default;
  explicit ResolutionLadder(std::vector<GridSpec> levels);

  /// "32,16,8" for 1-D ladders, "32x32,16x16,8x8" for 2-D ones.
  static ResolutionLadder parse(const std::string& text);

  std::size_t size() const { return levels_.size(); }
  /// Index of the coarsest level (m).
  std::size_t last() const { return levels_.size() - 1; }
  const GridSpec& level(std::size_t n) const { return levels_.at(n); }
  const std::vector<GridSpec>& levels() const { return levels_; }
  int dims() const { return levels_.front().dims(); }
  /// Level whose grid equals `grid`, or -1.
  int find(const GridSpec& grid) const;
  std::string to_string() const;

  friend bool operator==(const ResolutionLadder&, const ResolutionLadder&) = default;

 private:
  std::vector<GridSpec> levels_;
};

/// Multichannel sampled signal, feature-major then row-major layout.
class DiscreteSignal {
 public:
  DiscreteSignal() = default;
  DiscreteSignal(GridSpec grid, std::size_t features);
  DiscreteSignal(GridSpec grid, std::size_t features, std::vector<double> values);

  const GridSpec& grid() const { return grid_; }
  std::size_t features() const { return features_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<const double> channel(std::size_t c) const;
  std::span<double> channel(std::size_t c);

  double& at(std::size_t c, std::size_t row, std::size_t col) {
    return values_[c * grid_.samples() + row * grid_.cols() + col];
  }
  double at(std::size_t c, std::size_t row, std::size_t col) const {
    return values_[c * grid_.samples() + row * grid_.cols() + col];
  }

  /// Throws NumericError when any value is NaN or infinite.
  void require_finite() const;

 private:
  GridSpec grid_;
  std::size_t features_ = 0;
  std::vector<double> values_;
};

struct PerfectKernel {
  friend bool operator==(const PerfectKernel&, const PerfectKernel&) = default;
};

/// Hann-windowed sinc with an odd number of taps per axis.
struct WindowedSincKernel {
  int taps = 9;
  friend bool operator==(const WindowedSincKernel&, const WindowedSincKernel&) = default;
};

/// Truncated Gaussian: sigma = sigma_factor * decimation factor (fine samples),
/// radius = ceil(radius_factor * sigma).
struct GaussianKernel {
  double sigma_factor = 0.5;
  double radius_factor = 2.0;
  friend bool operator==(const GaussianKernel&, const GaussianKernel&) = default;
};

using SmoothingKernel = std::variant<PerfectKernel, WindowedSincKernel, GaussianKernel>;

void validate(const SmoothingKernel& kernel);
bool is_perfect(const SmoothingKernel& kernel);
/// "perfect", "sinc:<taps>" or "gaussian:<sigma_factor>:<radius_factor>".
std::string kernel_name(const SmoothingKernel& kernel);
/// Inverse of kernel_name; bare "sinc"/"gaussian" select the defaults.
SmoothingKernel parse_kernel(const std::string& text);

/// Circulant first column of the realized approximate kernel along one axis of
/// extent `fine`, with cutoff matched to `coarse`. Coefficients sum to 1.
std::vector<double> realize_axis_kernel(const SmoothingKernel& kernel, std::size_t fine,
                                        std::size_t coarse);

DiscreteSignal lowpass(const DiscreteSignal& signal, const GridSpec& target,
                       const SmoothingKernel& kernel);
DiscreteSignal decimate(const DiscreteSignal& signal, const GridSpec& to);
DiscreteSignal downsample(const DiscreteSignal& signal, const GridSpec& to,
                          const SmoothingKernel& kernel);
DiscreteSignal upsample(const DiscreteSignal& signal, const GridSpec& to);
DiscreteSignal mean_reject(const DiscreteSignal& signal);

/// Band-limited resampling between arbitrary extents (not necessarily multiples).
/// Coincides with upsample / downsample(Perfect) for comparable grids.
DiscreteSignal resample_spectral(const DiscreteSignal& signal, const GridSpec& to);

struct BandCheck {
  bool inside = false;
  double max_deviation = 0.0;
};

/// Membership test for the band of `level_grid`: ||lowpass(s) - s||_inf <= tol.
BandCheck check_bandlimited(const DiscreteSignal& signal, const GridSpec& level_grid,
                            const SmoothingKernel& kernel, double tol);

/// Per-axis operator matrices, row-major (rows = output extent).
namespace axis_ops {
/// N x N low-pass to the band of extent `coarse`.
std::vector<double> lowpass_matrix(const SmoothingKernel& kernel, std::size_t fine,
                                   std::size_t coarse);
/// coarse x N fused low-pass and stride decimation.
std::vector<double> downsample_matrix(const SmoothingKernel& kernel, std::size_t fine,
                                      std::size_t coarse);
/// N x coarse band-limited interpolation.
std::vector<double> upsample_matrix(std::size_t coarse, std::size_t fine);
}  // namespace axis_ops

}  // namespace arrn
