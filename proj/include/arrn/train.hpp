#pragma once

// Synthetic data, training, resolution sweeps and the kernel x dropout x mode ablation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "arrn/model.hpp"

namespace arrn {

/// Classes differ by a per-frequency amplitude signature; samples draw random
/// phases, amplitude jitter and white noise on the base grid.
struct SynthDatasetSpec {
  std::size_t classes = 4;
  GridSpec grid = GridSpec::line(64);
  std::size_t train_per_class = 512;
  std::size_t test_per_class = 128;
  /// Frequencies below this (per axis, in cycles) form the coarse part of the signature.
  std::size_t coarse_cutoff = 8;
  double coarse_gain = 0.5;
  double fine_gain = 1.0;
  double jitter = 0.2;
  double noise = 0.2;
  std::uint64_t seed = 1;
  /// Optional explicit signatures: classes x (grid.cols()/2 + 1) amplitudes indexed by frequency.
  /// 1-D grids only; overrides the random ones.
  std::vector<std::vector<double>> signatures;

  void validate() const;
};

struct Dataset {
  GridSpec grid;
  std::size_t classes = 0;
  std::vector<DiscreteSignal> train, test;
  std::vector<int> train_labels, test_labels;
  /// Amplitude per class per frequency index (1-D: k, 2-D: row-major ky * (cols/2+1) + kx).
  std::vector<std::vector<double>> signatures;
};

Dataset generate_dataset(const SynthDatasetSpec& spec);

/// Signals as ARSG files plus a labels text file in `dir`.
void save_dataset(const std::filesystem::path& dir, const Dataset& data, Dtype dtype);
Dataset load_dataset(const std::filesystem::path& dir);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 128;
  double lr = 1e-3;
  double min_lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-3;
  double adam_eps = 1e-8;
  /// Laplacian dropout probability per residual.
  double dropout = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;
  double train_accuracy = 0.0;
};

/// Cosine annealing from lr at epoch 0 to min_lr at the final epoch.
double cosine_lr(const TrainConfig& config, std::size_t epoch);

/// Trains in place; the model's dropout config is replaced by config.dropout.
/// Throws NumericError on a non-finite loss.
template <typename T>
TrainResult train(ArrnModel<T>& model, const Dataset& data, const TrainConfig& config);

template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, const TrainConfig& config);
  void step(double lr);

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<double>> m_, v_;
  TrainConfig config_;
  std::size_t t_ = 0;
};

enum class EvalMode { Full, Adapted };
std::string eval_mode_name(EvalMode mode);
EvalMode parse_eval_mode(const std::string& text);

struct SweepRow {
  std::string resolution;
  EvalMode mode = EvalMode::Full;
  std::string kernel;
  bool dropout = false;
  double accuracy = 0.0;
  std::uint64_t macs = 0;  // per sample
  double wall_ms = 0.0;
};

struct SweepOptions {
  EntryPolicy policy = EntryPolicy::PreferFiner;
  std::size_t batch = 256;
  bool timing = false;
};

/// Test signals are brought to each resolution with the ideal kernel. Full mode
/// interpolates them back to level 0; adapted mode enters at entry_level().
template <typename T>
std::vector<SweepRow> evaluate_sweep(const ArrnModel<T>& model, const Dataset& data,
                                     const std::vector<GridSpec>& resolutions, EvalMode mode,
                                     const SweepOptions& options = {});

/// Predicted labels for signals already on a ladder level (adapted) or level 0 (full).
template <typename T>
double accuracy(const ArrnModel<T>& model, const std::vector<DiscreteSignal>& inputs, const std::vector<int>& labels,
                EvalMode mode, std::size_t batch = 256);

/// Brings a signal onto `grid` with ideal-kernel resampling.
DiscreteSignal resample_ideal(const DiscreteSignal& s, const GridSpec& grid);

std::string sweep_csv(const std::vector<SweepRow>& rows);

struct AblationConfig {
  ModelSpec model;
  TrainConfig train;
  SynthDatasetSpec data;
  std::vector<SmoothingKernel> kernels = {PerfectKernel{}, WindowedSincKernel{}, GaussianKernel{}};
  std::vector<std::uint64_t> seeds = {1};
  /// Empty means every ladder level.
  std::vector<GridSpec> resolutions;
  std::size_t threads = 1;
};

struct AblationCell {
  std::string kernel;
  bool dropout = false;
  EvalMode mode = EvalMode::Full;
  /// Mean over seeds and resolutions.
  double accuracy = 0.0;
  /// Per resolution, averaged over seeds; same order as AblationResult::resolutions.
  std::vector<double> by_resolution;
};

struct AblationRatio {
  std::string node;  // "kernel", "kernel/dropout" or "kernel/dropout/mode"
  std::string label;
  double ratio = 0.0;
};

struct AblationResult {
  std::vector<std::string> resolutions;
  std::vector<AblationCell> cells;
  std::vector<AblationRatio> ratios;
  std::vector<SweepRow> rows;  // every seed, cell and resolution
};

AblationResult ablation_grid(const AblationConfig& config);

std::string ablation_table_csv(const AblationResult& result);
std::string ablation_ratio_csv(const AblationResult& result);

/// Optional plot: accuracy against resolution, one polyline per (kernel, mode, dropout).
std::string sweep_svg(const std::vector<SweepRow>& rows, const std::string& title);

}  // namespace arrn
