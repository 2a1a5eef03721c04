#include "arrn/pyramid.hpp"

#include <string>

#include "arrn/errors.hpp"

namespace arrn {

namespace {

void add_into(DiscreteSignal& acc, const DiscreteSignal& term) {
  auto a = acc.values();
  auto b = term.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

DiscreteSignal subtract(const DiscreteSignal& a, const DiscreteSignal& b) {
  DiscreteSignal out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

PyramidDecomposition build(const DiscreteSignal& signal, const ResolutionLadder& ladder,
                           const SmoothingKernel& kernel, std::size_t start) {
  validate(kernel);
  PyramidDecomposition out{ladder, kernel, start, {}, {}};
  DiscreteSignal current = signal;
  for (std::size_t n = start + 1; n <= ladder.last(); ++n) {
    const auto& coarse = ladder.level(n);
    auto smoothed = lowpass(current, coarse, kernel);
    out.diffs.push_back(subtract(current, smoothed));
    current = decimate(smoothed, coarse);
  }
  out.low = std::move(current);
  return out;
}

}  // namespace

const DiscreteSignal& PyramidDecomposition::diff(std::size_t n) const {
  if (n <= start_level || n > ladder.last()) {
    throw UsageError("difference level " + std::to_string(n) + " outside (" +
                     std::to_string(start_level) + ", " + std::to_string(ladder.last()) + "]");
  }
  return diffs[n - start_level - 1];
}

PyramidDecomposition decompose(const DiscreteSignal& signal, const ResolutionLadder& ladder,
                               const SmoothingKernel& kernel) {
  if (!(signal.grid() == ladder.level(0))) {
    throw ShapeError("signal grid " + signal.grid().to_string() + " is not the finest ladder level " +
                     ladder.level(0).to_string());
  }
  return build(signal, ladder, kernel, 0);
}

PyramidDecomposition decompose_adapted(const DiscreteSignal& signal,
                                       const ResolutionLadder& ladder,
                                       const SmoothingKernel& kernel) {
  const int level = ladder.find(signal.grid());
  if (level < 0) {
    throw ShapeError("signal grid " + signal.grid().to_string() + " is not a level of ladder " +
                     ladder.to_string());
  }
  return build(signal, ladder, kernel, static_cast<std::size_t>(level));
}

DiscreteSignal reconstruct(const PyramidDecomposition& decomp, std::size_t level) {
  if (level < decomp.start_level || level > decomp.ladder.last()) {
    throw UsageError("reconstruction level " + std::to_string(level) + " outside [" +
                     std::to_string(decomp.start_level) + ", " +
                     std::to_string(decomp.ladder.last()) + "]");
  }
  const auto& target = decomp.ladder.level(level);
  DiscreteSignal acc = upsample(decomp.low, target);
  for (std::size_t n = level + 1; n <= decomp.ladder.last(); ++n) {
    add_into(acc, upsample(decomp.diff(n), target));
  }
  return acc;
}

}  // namespace arrn
