#pragma once

// Laplacian residual network over a resolution ladder.
//
// Level 0 is the finest grid. The input projection A_0 lifts the input to the
// level-0 feature count; residual i runs on level i and emits on level i + 1.
// A head block on the coarsest grid, global pooling and a linear layer produce
// the logits.

#include <cstdint>
#include <iosfwd>
#include <filesystem>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "arrn/io.hpp"
#include "arrn/nn.hpp"
#include "arrn/signal.hpp"

namespace arrn {

/// Separable linear map between two grids, one dense matrix per axis.
template <typename T>
class SeparableOp {
 public:
  SeparableOp() = default;
  SeparableOp(GridSpec in, GridSpec out, const std::vector<double>& row_matrix,
              const std::vector<double>& col_matrix);

  static SeparableOp lowpass(const SmoothingKernel& kernel, const GridSpec& grid, const GridSpec& band);
  static SeparableOp downsample(const SmoothingKernel& kernel, const GridSpec& fine, const GridSpec& coarse);

  FeatureMap<T> apply(const FeatureMap<T>& x, MacCounter* macs = nullptr) const;
  /// Adjoint: maps an output-grid gradient back to the input grid.
  FeatureMap<T> apply_transpose(const FeatureMap<T>& g) const;
  /// Per channel per batch item.
  std::uint64_t macs() const;

  const GridSpec& in() const { return in_; }
  const GridSpec& out() const { return out_; }

 private:
  GridSpec in_, out_;
  std::vector<T> rows_;  // out.rows x in.rows
  std::vector<T> cols_;  // out.cols x in.cols
};

struct DropoutConfig {
  /// Drop probability per residual, finest first.
  std::vector<double> p;

  static DropoutConfig uniform(std::size_t residuals, double p);
  void validate() const;
  bool any() const;
};

/// Gate per residual. chain[i] = indep[i] OR chain[i-1]; 0 drops the band difference.
struct DropoutMask {
  std::vector<int> indep;
  std::vector<int> chain;

  static DropoutMask all_on(std::size_t residuals);
  static DropoutMask from_indep(std::vector<int> indep);
  /// Drops the first k residuals.
  static DropoutMask drop_first(std::size_t residuals, std::size_t k);
};

/// Draws one Bernoulli(1 - p_i) per residual in order finest to coarsest.
DropoutMask sample_mask(std::mt19937_64& rng, const DropoutConfig& config);

enum class EntryPolicy { PreferFiner, PreferCoarser };

std::string policy_name(EntryPolicy policy);
EntryPolicy parse_policy(const std::string& text);

struct EntryChoice {
  std::size_t level = 0;
  bool resample = false;
};

/// Ladder level at which an input of the given grid enters the network.
EntryChoice entry_level(const ResolutionLadder& ladder, const GridSpec& input, EntryPolicy policy);

struct ModelSpec {
  ResolutionLadder ladder;
  std::size_t in_features = 1;
  /// Feature count per ladder level.
  std::vector<std::size_t> features;
  std::size_t classes = 2;
  SmoothingKernel kernel = PerfectKernel{};
  std::size_t expansion = 2;
  std::size_t depth = 1;
  std::size_t head_expansion = 1;
  double head_dropout = 0.2;
  DropoutConfig dropout;

  std::size_t residual_count() const { return ladder.size() - 1; }
  void validate() const;
};

/// 1-D ladder 64, 32, 16 with features 8, 16, 32 and four classes.
ModelSpec desk_model_spec();

template <typename T>
struct ResidualTape {
  int gate = 1;
  FeatureMap<T> summed_down;  // fused-down map before projection
  BlockTape<T> block;
};

template <typename T>
class LaplacianResidual {
 public:
  LaplacianResidual(std::size_t level, const GridSpec& in_grid, const GridSpec& out_grid, std::size_t in_features,
                    std::size_t out_features, const SmoothingKernel& kernel, const InnerBlockSpec& block_spec,
                    std::mt19937_64& rng);

  /// A_n * down(r + psi(b(r - lowpass(r)))). Gate 0 skips the block entirely.
  FeatureMap<T> forward(const FeatureMap<T>& r, int gate, Mode mode, ResidualTape<T>* tape = nullptr,
                        MacCounter* macs = nullptr) const;
  FeatureMap<T> backward(const ResidualTape<T>& tape, const FeatureMap<T>& grad);
  void commit(const ResidualTape<T>& tape);

  std::uint64_t macs(std::size_t batch) const;

  std::size_t level() const { return level_; }
  const GridSpec& in_grid() const { return in_grid_; }
  const GridSpec& out_grid() const { return out_grid_; }
  std::size_t in_features() const { return in_features_; }
  std::size_t out_features() const { return out_features_; }
  const SeparableOp<T>& lowpass_op() const { return lowpass_; }
  const SeparableOp<T>& down_op() const { return down_; }

  Block<T> block;
  Parameter<T> projection;  // out_features x in_features

 private:
  std::size_t level_;
  GridSpec in_grid_, out_grid_;
  std::size_t in_features_, out_features_;
  SeparableOp<T> lowpass_, down_;
};

template <typename T>
struct ModelTape {
  std::size_t entry = 0;
  FeatureMap<T> input;
  std::vector<ResidualTape<T>> residuals;
  BlockTape<T> head_block;
  HeadTape<T> head;
};

struct EquivalenceReport {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  double max_rel = 0.0;
};

template <typename T>
class ArrnModel {
 public:
  ArrnModel(const ModelSpec& spec, std::uint64_t seed);
  ArrnModel(const ArrnModel& other);
  ArrnModel& operator=(const ArrnModel& other);

  const ModelSpec& spec() const { return spec_; }
  void set_dropout(const DropoutConfig& config);
  const ResolutionLadder& ladder() const { return spec_.ladder; }
  std::size_t residual_count() const { return residuals_.size(); }

  /// Input on the level-0 grid, one gate per residual.
  Logits<T> forward_full(const FeatureMap<T>& x, const DropoutMask& mask, Mode mode, std::mt19937_64* rng = nullptr,
                         ModelTape<T>* tape = nullptr, MacCounter* macs = nullptr) const;
  Logits<T> forward_full(const FeatureMap<T>& x) const;
  /// Input on some ladder level u: composed projection, then residuals u..m-1.
  Logits<T> forward_adapted(const FeatureMap<T>& x, Mode mode = Mode::Eval, MacCounter* macs = nullptr) const;

  /// Accumulates parameter gradients; only valid for tapes recorded by forward_full.
  void backward(ModelTape<T>& tape, const Logits<T>& grad);
  /// Folds train-mode batch statistics into the running estimates.
  void commit(const ModelTape<T>& tape);

  /// A_{u-1} ... A_0 as an f_u x in_features matrix; cached until invalidate().
  std::vector<T> composed_projection(std::size_t u) const;
  void invalidate();

  /// Analytic MAC count for a batch entering at level u with every gate on.
  std::uint64_t count_macs(std::size_t u, std::size_t batch = 1) const;

  std::vector<Parameter<T>*> parameters();
  std::vector<Buffer<T>*> buffers();
  void zero_grad();

  /// Randomizes batch-norm affine parameters and running statistics.
  void randomize_normalization(std::mt19937_64& rng);

  const LaplacianResidual<T>& residual(std::size_t i) const { return residuals_.at(i); }
  LaplacianResidual<T>& residual(std::size_t i) { return residuals_.at(i); }
  Parameter<T>& input_projection() { return input_projection_; }
  const Parameter<T>& input_projection() const { return input_projection_; }
  const Block<T>& head_block() const { return head_block_; }
  Block<T>& head_block() { return head_block_; }
  const Head<T>& head() const { return head_; }
  Head<T>& head() { return head_; }

 private:
  Logits<T> run(std::size_t entry, const FeatureMap<T>& x, const DropoutMask& mask, Mode mode,
                std::mt19937_64* rng, ModelTape<T>* tape, MacCounter* macs) const;

  ModelSpec spec_;
  Parameter<T> input_projection_;  // f_0 x in_features
  std::vector<LaplacianResidual<T>> residuals_;
  Block<T> head_block_;
  Head<T> head_;

  mutable std::mutex cache_mutex_;
  mutable std::vector<std::vector<T>> composed_;
};

/// Pointwise feature mixing with a dense out x in matrix, no bias.
template <typename T>
FeatureMap<T> project(const FeatureMap<T>& x, const std::vector<T>& matrix, std::size_t out,
                      MacCounter* macs = nullptr);

/// Full (level-0 input upsampled from level u) versus adapted logits for a batch
/// of inputs sampled on ladder level u. Eval mode.
template <typename T>
EquivalenceReport equivalence_report(const ArrnModel<T>& model, std::span<const DiscreteSignal> inputs);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ArrnModel<T>& model);
template <typename T>
void write_checkpoint(std::ostream& out, const ArrnModel<T>& model);
/// Throws FormatError on bad magic, manifest, dtype mismatch or truncated payload.
template <typename T>
ArrnModel<T> load_checkpoint(const std::filesystem::path& path);
template <typename T>
ArrnModel<T> read_checkpoint(std::istream& in);
/// Reads only the dtype recorded in a checkpoint.
Dtype checkpoint_dtype(const std::filesystem::path& path);

std::string spec_manifest(const ModelSpec& spec);

}  // namespace arrn
