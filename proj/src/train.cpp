#include "arrn/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include "arrn/errors.hpp"

namespace arrn {

// ---------------------------------------------------------------------------
// Dataset

namespace {

struct Frequency {
  std::size_t ky, kx;
};

// Frequencies carrying signature energy: 1-D k = 1 .. N/2 - 1; 2-D (ky, kx) on a
// half plane, both below Nyquist, excluding DC.
std::vector<Frequency> signature_frequencies(const GridSpec& grid) {
  std::vector<Frequency> out;
  if (grid.dims() == 1) {
    for (std::size_t k = 1; 2 * k < grid.cols(); ++k) out.push_back({0, k});
  } else {
    for (std::size_t ky = 0; 2 * ky < grid.rows(); ++ky) {
      for (std::size_t kx = 0; 2 * kx < grid.cols(); ++kx) {
        if (ky == 0 && kx == 0) continue;
        out.push_back({ky, kx});
      }
    }
  }
  return out;
}

std::size_t frequency_index(const GridSpec& grid, const Frequency& f) { return f.ky * (grid.cols() / 2 + 1) + f.kx; }

// Octave band of a frequency: 1 -> 0, 2..3 -> 1, 4..7 -> 2, ...
std::size_t octave(const Frequency& f) {
  std::size_t k = std::max(f.ky, f.kx), band = 0;
  while (k > 1) {
    k >>= 1;
    ++band;
  }
  return band;
}

// Uniform index in [0, n) from the 53-bit draw; independent of the standard library's distributions.
std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

bool signatures_separated(const std::vector<std::vector<double>>& levels, std::size_t coarse_cutoff) {
  for (std::size_t a = 0; a < levels.size(); ++a) {
    for (std::size_t b = a + 1; b < levels.size(); ++b) {
      bool coarse = false, fine = false;
      for (std::size_t band = 0; band < levels[a].size(); ++band) {
        if (std::abs(levels[a][band] - levels[b][band]) < 0.5) continue;
        ((std::size_t{1} << band) < coarse_cutoff ? coarse : fine) = true;
      }
      if (!coarse || !fine) return false;
    }
  }
  return true;
}

std::size_t signature_size(const GridSpec& grid) {
  return grid.dims() == 1 ? grid.cols() / 2 + 1 : (grid.rows() / 2 + 1) * (grid.cols() / 2 + 1);
}

}  // namespace

void SynthDatasetSpec::validate() const {
  if (classes < 2) throw UsageError("dataset needs at least 2 classes");
  if (train_per_class == 0 || test_per_class == 0) throw UsageError("dataset split sizes must be positive");
  if (grid.samples() < 4) throw UsageError("dataset grid too small");
  if (!(noise >= 0.0) || !(jitter >= 0.0) || !(coarse_gain >= 0.0) || !(fine_gain >= 0.0)) {
    throw UsageError("dataset gains and noise must be non-negative");
  }
  if (!signatures.empty()) {
    if (grid.dims() != 1) throw UsageError("explicit signatures are supported for 1-D grids only");
    if (signatures.size() != classes) throw UsageError("one signature per class required");
    for (const auto& s : signatures) {
      if (s.size() != signature_size(grid)) throw UsageError("signature length must be extent/2 + 1");
    }
  }
}

Dataset generate_dataset(const SynthDatasetSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto freqs = signature_frequencies(spec.grid);
  Dataset data;
  data.grid = spec.grid;
  data.classes = spec.classes;
  if (!spec.signatures.empty()) {
    data.signatures = spec.signatures;
  } else {
    // One level per class per octave band; classes must differ in a coarse band and in a fine band.
    std::size_t bands = 0;
    for (const auto& f : freqs) bands = std::max(bands, octave(f) + 1);
    std::vector<std::vector<double>> levels;
    for (int attempt = 0;; ++attempt) {
      levels.assign(spec.classes, std::vector<double>(bands));
      for (auto& l : levels) {
        for (auto& v : l) v = 0.25 * static_cast<double>(1 + draw_index(rng, 4));
      }
      if (signatures_separated(levels, spec.coarse_cutoff) || attempt > 1000) break;
    }
    data.signatures.assign(spec.classes, std::vector<double>(signature_size(spec.grid), 0.0));
    for (std::size_t c = 0; c < spec.classes; ++c) {
      for (const auto& f : freqs) {
        const bool coarse = std::max(f.ky, f.kx) < spec.coarse_cutoff;
        data.signatures[c][frequency_index(spec.grid, f)] =
            (coarse ? spec.coarse_gain : spec.fine_gain) * levels[c][octave(f)];
      }
    }
  }
  const auto rows = spec.grid.rows();
  const auto cols = spec.grid.cols();
  auto make = [&](int label) {
    DiscreteSignal s(spec.grid, 1);
    const auto& sig = data.signatures[static_cast<std::size_t>(label)];
    for (const auto& f : freqs) {
      const double amp = sig[frequency_index(spec.grid, f)];
      if (amp == 0.0) continue;
      const double a = amp * (1.0 + spec.jitter * standard_normal(rng));
      const double phase = 2.0 * std::numbers::pi * uniform01(rng);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double t = static_cast<double>(f.ky * r) / static_cast<double>(rows) +
                           static_cast<double>(f.kx * c) / static_cast<double>(cols);
          s.at(0, r, c) += a * std::cos(2.0 * std::numbers::pi * t + phase);
        }
      }
    }
    if (spec.noise > 0.0) {
      for (auto& v : s.values()) v += spec.noise * standard_normal(rng);
    }
    return s;
  };
  auto fill = [&](std::vector<DiscreteSignal>& signals, std::vector<int>& labels, std::size_t per_class) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t c = 0; c < spec.classes; ++c) {
        signals.push_back(make(static_cast<int>(c)));
        labels.push_back(static_cast<int>(c));
      }
    }
  };
  fill(data.train, data.train_labels, spec.train_per_class);
  fill(data.test, data.test_labels, spec.test_per_class);
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data, Dtype dtype) {
  std::filesystem::create_directories(dir / "train");
  std::filesystem::create_directories(dir / "test");
  std::ostringstream labels;
  auto dump = [&](const std::string& split, const std::vector<DiscreteSignal>& signals, const std::vector<int>& y) {
    for (std::size_t i = 0; i < signals.size(); ++i) {
      std::ostringstream name;
      name << split << '/' << std::setw(6) << std::setfill('0') << i << ".arsg";
      save_arsg(dir / name.str(), signals[i], dtype);
      labels << name.str() << ' ' << y[i] << '\n';
    }
  };
  dump("train", data.train, data.train_labels);
  dump("test", data.test, data.test_labels);
  write_file_atomic(dir / "labels.txt", labels.str());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "labels.txt");
  if (!in) throw FormatError("missing labels.txt in " + dir.string());
  Dataset data;
  int max_label = -1;
  std::string name;
  int label = 0;
  while (in >> name >> label) {
    if (label < 0) throw FormatError("negative label in labels.txt");
    auto s = load_arsg(dir / name);
    if (data.train.empty() && data.test.empty()) {
      data.grid = s.grid();
    } else if (!(s.grid() == data.grid)) {
      throw ShapeError("dataset signals disagree on grid");
    }
    if (name.rfind("train/", 0) == 0) {
      data.train.push_back(std::move(s));
      data.train_labels.push_back(label);
    } else if (name.rfind("test/", 0) == 0) {
      data.test.push_back(std::move(s));
      data.test_labels.push_back(label);
    } else {
      throw FormatError("labels.txt entry outside train/ and test/: " + name);
    }
    max_label = std::max(max_label, label);
  }
  if (!in.eof()) throw FormatError("malformed labels.txt");
  if (data.train.empty() || data.test.empty()) throw FormatError("dataset needs train and test samples");
  data.classes = static_cast<std::size_t>(max_label + 1);
  return data;
}

// ---------------------------------------------------------------------------
// Optimizer

void TrainConfig::validate() const {
  if (epochs == 0 || batch == 0) throw UsageError("epochs and batch size must be positive");
  if (!(lr >= 0.0) || !(min_lr >= 0.0) || !(weight_decay >= 0.0)) throw UsageError("learning rates must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("betas must lie in [0, 1)");
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw UsageError("dropout probability outside [0, 1]");
}

double cosine_lr(const TrainConfig& config, std::size_t epoch) {
  if (config.epochs <= 1) return config.lr;
  const double floor = std::min(config.min_lr, config.lr);
  const double t = static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
  return floor + 0.5 * (config.lr - floor) * (1.0 + std::cos(std::numbers::pi * t));
}

template <typename T>
AdamW<T>::AdamW(std::vector<Parameter<T>*> params, const TrainConfig& config)
    : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]);
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      double w = static_cast<double>(p.value[i]);
      w -= lr * config_.weight_decay * w;
      w -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_eps);
      p.value[i] = static_cast<T>(w);
    }
  }
}

// ---------------------------------------------------------------------------
// Training

namespace {

template <typename T>
FeatureMap<T> gather(const std::vector<DiscreteSignal>& signals, const std::vector<std::size_t>& order,
                     std::size_t begin, std::size_t end) {
  const auto& first = signals[order[begin]];
  FeatureMap<T> x(end - begin, first.features(), first.grid());
  const auto n = first.values().size();
  for (std::size_t b = begin; b < end; ++b) {
    auto src = signals[order[b]].values();
    std::transform(src.begin(), src.end(), x.values.begin() + static_cast<long>((b - begin) * n),
                   [](double v) { return static_cast<T>(v); });
  }
  return x;
}

template <typename T>
std::size_t argmax_row(const Logits<T>& logits, std::size_t b) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.classes; ++k) {
    if (logits.at(b, k) > logits.at(b, best)) best = k;
  }
  return best;
}

}  // namespace

template <typename T>
TrainResult train(ArrnModel<T>& model, const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (!(data.grid == model.ladder().level(0))) {
    throw ShapeError("dataset grid " + data.grid.to_string() + " does not match model level 0 " +
                     model.ladder().level(0).to_string());
  }
  if (data.classes > model.spec().classes) throw ShapeError("dataset has more classes than the model");
  if (data.train.empty()) throw UsageError("empty training set");
  model.set_dropout(DropoutConfig::uniform(model.residual_count(), config.dropout));

  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 mask_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 head_rng(config.seed ^ 0xc2b2ae3d27d4eb4fULL);
  AdamW<T> opt(model.parameters(), config);

  const auto n = data.train.size();
  std::vector<std::size_t> order(n);
  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[draw_index(shuffle_rng, i + 1)]);
    const double lr = cosine_lr(config, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch) {
      const auto end = std::min(n, begin + config.batch);
      auto x = gather<T>(data.train, order, begin, end);
      std::vector<int> labels(end - begin);
      for (std::size_t b = begin; b < end; ++b) labels[b - begin] = data.train_labels[order[b]];
      const auto mask = sample_mask(mask_rng, model.spec().dropout);
      ModelTape<T> tape;
      auto logits = model.forward_full(x, mask, Mode::Train, &head_rng, &tape);
      Logits<T> grad;
      const double loss = cross_entropy<T>(logits, labels, &grad);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      model.zero_grad();
      model.backward(tape, grad);
      model.commit(tape);
      opt.step(lr);
      model.invalidate();
      loss_sum += loss * static_cast<double>(end - begin);
      for (std::size_t b = 0; b < labels.size(); ++b) correct += argmax_row(logits, b) == static_cast<std::size_t>(labels[b]);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    result.epoch_lr.push_back(lr);
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

std::string eval_mode_name(EvalMode mode) { return mode == EvalMode::Full ? "full" : "adapted"; }

EvalMode parse_eval_mode(const std::string& text) {
  if (text == "full") return EvalMode::Full;
  if (text == "adapted") return EvalMode::Adapted;
  throw UsageError("unknown mode '" + text + "' (expected full or adapted)");
}

DiscreteSignal resample_ideal(const DiscreteSignal& s, const GridSpec& grid) {
  if (s.grid() == grid) return s;
  if (coarser_or_equal(grid, s.grid())) return downsample(s, grid, PerfectKernel{});
  if (coarser_or_equal(s.grid(), grid)) return upsample(s, grid);
  return resample_spectral(s, grid);
}

template <typename T>
double accuracy(const ArrnModel<T>& model, const std::vector<DiscreteSignal>& inputs, const std::vector<int>& labels,
                EvalMode mode, std::size_t batch) {
  if (inputs.size() != labels.size()) throw ShapeError("label count does not match inputs");
  if (inputs.empty()) return 0.0;
  std::vector<std::size_t> order(inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < inputs.size(); begin += batch) {
    const auto end = std::min(inputs.size(), begin + batch);
    auto x = gather<T>(inputs, order, begin, end);
    auto logits = mode == EvalMode::Full ? model.forward_full(x) : model.forward_adapted(x);
    for (std::size_t b = begin; b < end; ++b) correct += argmax_row(logits, b - begin) == static_cast<std::size_t>(labels[b]);
  }
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

template <typename T>
std::vector<SweepRow> evaluate_sweep(const ArrnModel<T>& model, const Dataset& data,
                                     const std::vector<GridSpec>& resolutions, EvalMode mode,
                                     const SweepOptions& options) {
  const auto& ladder = model.ladder();
  std::vector<SweepRow> rows;
  for (const auto& res : resolutions) {
    if (res.dims() != ladder.dims()) throw ShapeError("resolution " + res.to_string() + " does not match ladder dims");
    for (int a = 0; a < res.dims(); ++a) {
      if (res.extent(a) > ladder.level(0).extent(a)) {
        throw ShapeError("resolution " + res.to_string() + " exceeds the base grid");
      }
    }
    std::vector<DiscreteSignal> inputs;
    inputs.reserve(data.test.size());
    std::size_t entry = 0;
    if (mode == EvalMode::Adapted) entry = entry_level(ladder, res, options.policy).level;
    const auto& target = ladder.level(entry);
    for (const auto& s : data.test) inputs.push_back(resample_ideal(resample_ideal(s, res), target));
    const auto start = std::chrono::steady_clock::now();
    const double acc = accuracy(model, inputs, data.test_labels, mode, options.batch);
    const auto stop = std::chrono::steady_clock::now();
    SweepRow row;
    row.resolution = res.to_string();
    row.mode = mode;
    row.kernel = kernel_name(model.spec().kernel);
    row.dropout = model.spec().dropout.any();
    row.accuracy = acc;
    row.macs = model.count_macs(entry, 1);
    if (options.timing) {
      row.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "resolution,mode,kernel,dropout,accuracy,macs,wall_ms\n";
  out << std::fixed;
  for (const auto& r : rows) {
    out << r.resolution << ',' << eval_mode_name(r.mode) << ',' << r.kernel << ',' << (r.dropout ? "on" : "off") << ','
        << std::setprecision(6) << r.accuracy << ',' << r.macs << ',' << std::setprecision(3) << r.wall_ms << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Ablation

AblationResult ablation_grid(const AblationConfig& config) {
  config.model.validate();
  config.train.validate();
  if (config.seeds.empty() || config.kernels.empty()) throw UsageError("ablation needs seeds and kernels");
  const auto& ladder = config.model.ladder;
  auto resolutions = config.resolutions.empty() ? ladder.levels() : config.resolutions;

  std::vector<Dataset> datasets;
  for (auto seed : config.seeds) {
    auto ds = config.data;
    ds.seed = seed;
    ds.grid = ladder.level(0);
    ds.classes = config.model.classes;
    datasets.push_back(generate_dataset(ds));
  }

  struct Task {
    std::size_t kernel, seed;
    bool dropout;
  };
  std::vector<Task> tasks;
  for (std::size_t k = 0; k < config.kernels.size(); ++k) {
    for (bool d : {true, false}) {
      for (std::size_t s = 0; s < config.seeds.size(); ++s) tasks.push_back({k, s, d});
    }
  }
  std::vector<std::vector<SweepRow>> outputs(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        const auto& task = tasks[i];
        auto spec = config.model;
        spec.kernel = config.kernels[task.kernel];
        ArrnModel<float> model(spec, config.seeds[task.seed]);
        auto tc = config.train;
        tc.seed = config.seeds[task.seed];
        tc.dropout = task.dropout ? config.train.dropout : 0.0;
        train(model, datasets[task.seed], tc);
        for (auto mode : {EvalMode::Full, EvalMode::Adapted}) {
          auto rows = evaluate_sweep(model, datasets[task.seed], resolutions, mode);
          for (auto& r : rows) r.dropout = task.dropout;
          outputs[i].insert(outputs[i].end(), rows.begin(), rows.end());
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::max<std::size_t>(1, std::min(config.threads, tasks.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  AblationResult result;
  for (const auto& r : resolutions) result.resolutions.push_back(r.to_string());
  for (const auto& out : outputs) result.rows.insert(result.rows.end(), out.begin(), out.end());

  const double n_seeds = static_cast<double>(config.seeds.size());
  for (std::size_t k = 0; k < config.kernels.size(); ++k) {
    for (bool d : {true, false}) {
      for (auto mode : {EvalMode::Full, EvalMode::Adapted}) {
        AblationCell cell;
        cell.kernel = kernel_name(config.kernels[k]);
        cell.dropout = d;
        cell.mode = mode;
        cell.by_resolution.assign(resolutions.size(), 0.0);
        for (std::size_t i = 0; i < tasks.size(); ++i) {
          if (tasks[i].kernel != k || tasks[i].dropout != d) continue;
          for (const auto& row : outputs[i]) {
            if (row.mode != mode) continue;
            for (std::size_t r = 0; r < resolutions.size(); ++r) {
              if (row.resolution == result.resolutions[r]) cell.by_resolution[r] += row.accuracy / n_seeds;
            }
          }
        }
        double sum = 0.0;
        for (double a : cell.by_resolution) sum += a;
        cell.accuracy = sum / static_cast<double>(resolutions.size());
        result.cells.push_back(cell);
      }
    }
  }

  auto mean_of = [&](auto pred) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& c : result.cells) {
      if (pred(c)) {
        sum += c.accuracy;
        ++count;
      }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
  };
  auto safe_ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
  const double overall = mean_of([](const AblationCell&) { return true; });
  for (std::size_t k = 0; k < config.kernels.size(); ++k) {
    const auto name = kernel_name(config.kernels[k]);
    const double k_avg = mean_of([&](const AblationCell& c) { return c.kernel == name; });
    result.ratios.push_back({"kernel", name, safe_ratio(k_avg, overall)});
    for (bool d : {true, false}) {
      const auto dname = name + "/" + (d ? "dropout" : "no-dropout");
      const double kd_avg = mean_of([&](const AblationCell& c) { return c.kernel == name && c.dropout == d; });
      result.ratios.push_back({"kernel/dropout", dname, safe_ratio(kd_avg, k_avg)});
      for (auto mode : {EvalMode::Full, EvalMode::Adapted}) {
        const double cell = mean_of(
            [&](const AblationCell& c) { return c.kernel == name && c.dropout == d && c.mode == mode; });
        result.ratios.push_back({"kernel/dropout/mode", dname + "/" + eval_mode_name(mode), safe_ratio(cell, kd_avg)});
      }
    }
  }
  return result;
}

std::string ablation_table_csv(const AblationResult& result) {
  std::ostringstream out;
  out << "kernel,dropout,mode,accuracy";
  for (const auto& r : result.resolutions) out << ",acc_" << r;
  out << '\n' << std::fixed << std::setprecision(6);
  for (const auto& c : result.cells) {
    out << c.kernel << ',' << (c.dropout ? "on" : "off") << ',' << eval_mode_name(c.mode) << ',' << c.accuracy;
    for (double a : c.by_resolution) out << ',' << a;
    out << '\n';
  }
  return out.str();
}

std::string ablation_ratio_csv(const AblationResult& result) {
  std::ostringstream out;
  out << "node,label,ratio\n" << std::fixed << std::setprecision(6);
  for (const auto& r : result.ratios) out << r.node << ',' << r.label << ',' << r.ratio << '\n';
  return out.str();
}

std::string sweep_svg(const std::vector<SweepRow>& rows, const std::string& title) {
  std::vector<std::string> resolutions;
  std::map<std::string, std::vector<std::pair<std::size_t, double>>> series;
  for (const auto& r : rows) {
    auto it = std::find(resolutions.begin(), resolutions.end(), r.resolution);
    const auto x = static_cast<std::size_t>(it - resolutions.begin());
    if (it == resolutions.end()) resolutions.push_back(r.resolution);
    const auto key = r.kernel + " " + eval_mode_name(r.mode) + (r.dropout ? " dropout" : "");
    series[key].emplace_back(x, r.accuracy);
  }
  const double w = 640, h = 400, left = 60, right = 200, top = 40, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](std::size_t i) {
    return left + (resolutions.size() > 1 ? pw * static_cast<double>(i) / static_cast<double>(resolutions.size() - 1) : pw / 2);
  };
  auto py = [&](double a) { return top + ph * (1.0 - a); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                 "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double a = t / 4.0;
    out << "<text x=\"" << left - 8 << "\" y=\"" << py(a) + 4 << "\" font-family=\"sans-serif\" font-size=\"11\" "
        << "text-anchor=\"end\">" << std::setprecision(2) << a << std::setprecision(1) << "</text>\n";
  }
  for (std::size_t i = 0; i < resolutions.size(); ++i) {
    out << "<text x=\"" << px(i) << "\" y=\"" << top + ph + 18 << "\" font-family=\"sans-serif\" font-size=\"11\" "
        << "text-anchor=\"middle\">" << resolutions[i] << "</text>\n";
  }
  std::size_t idx = 0;
  for (const auto& [key, points] : series) {
    const char* color = colors[idx % 12];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, a] : points) out << px(x) << ',' << py(a) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << left + pw + 10 << "\" y=\"" << top + 14 * static_cast<double>(idx) + 10
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">" << key << "</text>\n";
    ++idx;
  }
  out << "</svg>\n";
  return out.str();
}

#define ARRN_INSTANTIATE_TRAIN(T)                                                                          \
  template class AdamW<T>;                                                                                 \
  template TrainResult train<T>(ArrnModel<T>&, const Dataset&, const TrainConfig&);                        \
  template double accuracy<T>(const ArrnModel<T>&, const std::vector<DiscreteSignal>&, const std::vector<int>&, \
                              EvalMode, std::size_t);                                                      \
  template std::vector<SweepRow> evaluate_sweep<T>(const ArrnModel<T>&, const Dataset&,                    \
                                                   const std::vector<GridSpec>&, EvalMode, const SweepOptions&);

ARRN_INSTANTIATE_TRAIN(float)
ARRN_INSTANTIATE_TRAIN(double)

}  // namespace arrn
