#pragma once

#include <cstddef>
#include <vector>

#include "arrn/signal.hpp"

namespace arrn {

/// Laplacian pyramid of a signal over a resolution ladder.
///
/// p_low_n is the signal smoothed to the band of level n; the difference
/// p_diff_n = p_low_{n-1} - p_low_n is stored on level n-1's grid and the
/// remainder p_low_m on the coarsest grid. A decomposition entered at level u
/// holds p_diff_{u+1} .. p_diff_m only.
struct PyramidDecomposition {
  ResolutionLadder ladder;
  SmoothingKernel kernel;
  std::size_t start_level = 0;
  std::vector<DiscreteSignal> diffs;
  DiscreteSignal low;

  /// p_diff_n for start_level < n <= m.
  const DiscreteSignal& diff(std::size_t n) const;
};

PyramidDecomposition decompose(const DiscreteSignal& signal, const ResolutionLadder& ladder,
                               const SmoothingKernel& kernel);

/// Decomposition of a signal sampled on some ladder level u; levels above u are
/// skipped because their differences vanish for band-limited input.
PyramidDecomposition decompose_adapted(const DiscreteSignal& signal,
                                       const ResolutionLadder& ladder,
                                       const SmoothingKernel& kernel);

/// p_diff_{n+1} + ... + p_diff_m + p_low_m on level n's grid, i.e. s * phi_n.
/// Summands are brought to the common grid with the band-limited interpolator.
DiscreteSignal reconstruct(const PyramidDecomposition& decomp, std::size_t level);

}  // namespace arrn
