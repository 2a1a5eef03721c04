#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "arrn/errors.hpp"
#include "arrn/io.hpp"
#include "arrn/pyramid.hpp"
#include "arrn/train.hpp"
#include "json.hpp"

using namespace arrn;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kFormat = 2;
constexpr int kShape = 3;
constexpr int kNumeric = 4;
constexpr int kUsage = 64;

std::size_t default_threads() {
  if (const char* env = std::getenv("ARRN_THREADS")) {
    try {
      const auto n = std::stoul(env);
      if (n > 0) return n;
    } catch (const std::logic_error&) {
    }
  }
  return 1;
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      const auto v = std::stoul(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw UsageError("expected a comma-separated list of positive integers, got '" + text + "'");
    }
  }
  return out;
}

// "64" or "32x32".
GridSpec parse_grid(const std::string& text) {
  const auto x = text.find('x');
  const auto counts = parse_counts(x == std::string::npos ? text : text.substr(0, x) + "," + text.substr(x + 1));
  if (counts.size() == 1) return GridSpec::line(counts[0]);
  if (counts.size() == 2) return GridSpec::plane(counts[0], counts[1]);
  throw UsageError("bad grid '" + text + "'");
}

// Resolution lists need not form a ladder (e.g. 64,48,32).
std::vector<GridSpec> parse_grid_list(const std::string& text) {
  std::vector<GridSpec> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) out.push_back(parse_grid(item));
  if (out.empty()) throw UsageError("empty resolution list");
  return out;
}

ResolutionLadder parse_ladder(const std::string& text) {
  try {
    return ResolutionLadder::parse(text);
  } catch (const ShapeError& e) {
    throw UsageError(std::string("bad --levels: ") + e.what());
  }
}

struct ModelFlags {
  std::string levels = "64,32,16";
  std::string features;
  std::size_t classes = 4;
  std::string kernel = "perfect";
  std::size_t expansion = 2;
  std::size_t depth = 1;

  void add(CLI::App* app) {
    app->add_option("--levels", levels, "Resolution ladder, fine to coarse (e.g. 64,32,16 or 32x32,16x16)")
        ->capture_default_str();
    app->add_option("--features", features, "Feature count per level (default 8, 16, 32, ...)");
    app->add_option("--classes", classes, "Number of classes")->capture_default_str();
    app->add_option("--kernel", kernel, "perfect | sinc[:taps] | gaussian[:sigma[:radius]]")->capture_default_str();
    app->add_option("--expansion", expansion, "Inner block expansion factor")->capture_default_str();
    app->add_option("--depth", depth, "Depthwise/pointwise pairs per inner block")->capture_default_str();
  }

  ModelSpec spec() const {
    ModelSpec s;
    s.ladder = parse_ladder(levels);
    if (features.empty()) {
      for (std::size_t n = 0; n < s.ladder.size(); ++n) s.features.push_back(std::size_t{8} << n);
    } else {
      s.features = parse_counts(features);
    }
    s.classes = classes;
    s.kernel = parse_kernel(kernel);
    s.expansion = expansion;
    s.depth = depth;
    s.validate();
    return s;
  }
};

struct DataFlags {
  std::string dir;
  std::uint64_t seed = 1;
  std::size_t per_class = SynthDatasetSpec{}.train_per_class;
  std::size_t test_per_class = SynthDatasetSpec{}.test_per_class;
  double noise = SynthDatasetSpec{}.noise;

  void add(CLI::App* app) {
    app->add_option("--data", dir, "Dataset directory (labels.txt + ARSG files); synthetic when omitted");
    app->add_option("--data-seed", seed, "Synthetic dataset seed")->capture_default_str();
    app->add_option("--per-class", per_class, "Synthetic training samples per class")->capture_default_str();
    app->add_option("--test-per-class", test_per_class, "Synthetic test samples per class")->capture_default_str();
    app->add_option("--noise", noise, "Synthetic white-noise level")->capture_default_str();
  }

  SynthDatasetSpec synth(const GridSpec& grid, std::size_t classes) const {
    SynthDatasetSpec ds;
    ds.grid = grid;
    ds.classes = classes;
    ds.seed = seed;
    ds.train_per_class = per_class;
    ds.test_per_class = test_per_class;
    ds.noise = noise;
    return ds;
  }

  Dataset load(const GridSpec& grid, std::size_t classes) const {
    if (!dir.empty()) return load_dataset(dir);
    return generate_dataset(synth(grid, classes));
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << std::scientific << v;
  return out.str();
}

// ---------------------------------------------------------------------------
// decompose / reconstruct

struct DecomposeArgs {
  std::string input, levels, kernel = "perfect", out, dtype = "f64";
};

int run_decompose(const DecomposeArgs& a) {
  const auto ladder = parse_ladder(a.levels);
  const auto kernel = parse_kernel(a.kernel);
  const auto dtype = parse_dtype(a.dtype);
  const auto signal = load_arsg(a.input);
  const int level = ladder.find(signal.grid());
  if (level < 0) {
    throw ShapeError("input grid " + signal.grid().to_string() + " is not a level of ladder " + ladder.to_string());
  }
  const auto d = level == 0 ? decompose(signal, ladder, kernel) : decompose_adapted(signal, ladder, kernel);
  fs::create_directories(a.out);
  nlohmann::json manifest;
  manifest["ladder"] = ladder.to_string();
  manifest["kernel"] = kernel_name(kernel);
  manifest["dtype"] = dtype_name(dtype);
  manifest["start_level"] = d.start_level;
  manifest["features"] = signal.features();
  nlohmann::json diffs = nlohmann::json::array();
  for (std::size_t n = d.start_level + 1; n <= ladder.last(); ++n) {
    const auto name = "diff_" + std::to_string(n) + ".arsg";
    save_arsg(fs::path(a.out) / name, d.diff(n), dtype);
    diffs.push_back({{"level", n}, {"file", name}, {"grid", d.diff(n).grid().to_string()}});
  }
  save_arsg(fs::path(a.out) / "low.arsg", d.low, dtype);
  manifest["diffs"] = diffs;
  manifest["low"] = {{"file", "low.arsg"}, {"grid", d.low.grid().to_string()}};
  write_text(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << diffs.size() << " difference bands and low.arsg to " << a.out << "\n";
  return kOk;
}

struct ReconstructArgs {
  std::string dir, out, reference;
  std::size_t level = 0;
  double tol = -1.0;
};

int run_reconstruct(const ReconstructArgs& a) {
  std::ifstream in(fs::path(a.dir) / "manifest.json");
  if (!in) throw FormatError("missing manifest.json in " + a.dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest.json: ") + e.what());
  }
  PyramidDecomposition d;
  try {
    d.ladder = ResolutionLadder::parse(manifest.at("ladder").get<std::string>());
    d.kernel = parse_kernel(manifest.at("kernel").get<std::string>());
    d.start_level = manifest.at("start_level").get<std::size_t>();
    for (const auto& entry : manifest.at("diffs")) d.diffs.push_back(load_arsg(fs::path(a.dir) / entry.at("file").get<std::string>()));
    d.low = load_arsg(fs::path(a.dir) / manifest.at("low").at("file").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest.json: ") + e.what());
  } catch (const UsageError& e) {
    throw FormatError(std::string("malformed manifest.json: ") + e.what());
  }
  if (d.diffs.size() + d.start_level != d.ladder.last()) throw FormatError("manifest lists the wrong number of bands");
  if (a.level < d.start_level || a.level > d.ladder.last()) {
    throw UsageError("--level must lie in [" + std::to_string(d.start_level) + ", " + std::to_string(d.ladder.last()) + "]");
  }
  const auto s = reconstruct(d, a.level);
  if (!a.out.empty()) save_arsg(a.out, s, Dtype::F64);
  std::cout << "reconstructed level " << a.level << " on grid " << s.grid().to_string() << "\n";
  if (a.reference.empty()) return kOk;
  auto want = load_arsg(a.reference);
  if (!(want.grid() == d.ladder.level(d.start_level))) throw ShapeError("reference is not on the decomposition's entry grid");
  for (std::size_t n = d.start_level + 1; n <= a.level; ++n) want = downsample(want, d.ladder.level(n), d.kernel);
  if (want.values().size() != s.values().size()) throw ShapeError("reference does not match the reconstruction");
  double err = 0.0;
  for (std::size_t i = 0; i < s.values().size(); ++i) err = std::max(err, std::abs(s.values()[i] - want.values()[i]));
  std::cout << "max_abs_error " << fmt(err) << "\n";
  if (a.tol >= 0.0 && !(err <= a.tol)) {
    std::cerr << "round-trip error " << fmt(err) << " exceeds tolerance " << fmt(a.tol) << "\n";
    return kVerifyFailed;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// verify-adaptation

struct VerifyArgs {
  std::string levels = "64,32,16", kernel = "perfect", dtype = "f64";
  std::uint64_t seed = 1;
  double tol = 1e-9;
  std::size_t trials = 20;
  std::size_t batch = 4;
};

template <typename T>
int verify_adaptation(const VerifyArgs& a, const ResolutionLadder& ladder) {
  ModelSpec spec;
  spec.ladder = ladder;
  for (std::size_t n = 0; n < ladder.size(); ++n) spec.features.push_back(4 + 2 * n);
  spec.classes = 3;
  spec.kernel = parse_kernel(a.kernel);
  const bool relative = std::is_same_v<T, float>;
  std::vector<double> worst(ladder.size(), 0.0), mean(ladder.size(), 0.0);
  std::mt19937_64 rng(a.seed);
  for (std::size_t t = 0; t < a.trials; ++t) {
    ArrnModel<T> model(spec, rng());
    model.randomize_normalization(rng);
    for (std::size_t u = 1; u < ladder.size(); ++u) {
      std::vector<DiscreteSignal> inputs;
      for (std::size_t b = 0; b < a.batch; ++b) {
        DiscreteSignal s(ladder.level(u), 1);
        for (auto& v : s.values()) v = standard_normal(rng);
        inputs.push_back(std::move(s));
      }
      const auto r = equivalence_report(model, std::span<const DiscreteSignal>(inputs));
      const double d = relative ? r.max_rel : r.max_abs;
      worst[u] = std::max(worst[u], d);
      mean[u] += r.mean_abs / static_cast<double>(a.trials);
    }
  }
  bool ok = true;
  std::cout << "level,grid,max_" << (relative ? "rel" : "abs") << ",mean_abs\n";
  for (std::size_t u = 1; u < ladder.size(); ++u) {
    std::cout << u << ',' << ladder.level(u).to_string() << ',' << fmt(worst[u]) << ',' << fmt(mean[u]) << "\n";
    ok = ok && worst[u] <= a.tol;
  }
  if (!ok) {
    std::cerr << "adaptation discrepancy exceeds tolerance " << fmt(a.tol) << "\n";
    return kVerifyFailed;
  }
  std::cout << "ok: " << a.trials << " trials within " << fmt(a.tol) << "\n";
  return kOk;
}

int run_verify(const VerifyArgs& a) {
  const auto ladder = parse_ladder(a.levels);
  if (ladder.size() < 2) throw UsageError("a single-level ladder has no residual to skip");
  if (a.trials == 0 || a.batch == 0) throw UsageError("--trials and --batch must be positive");
  return parse_dtype(a.dtype) == Dtype::F64 ? verify_adaptation<double>(a, ladder) : verify_adaptation<float>(a, ladder);
}

// ---------------------------------------------------------------------------
// train / eval / bench / ablate

struct TrainArgs {
  ModelFlags model;
  DataFlags data;
  TrainConfig config;
  std::string dtype = "f32", out, loss_csv;
};

template <typename T>
int train_with(const TrainArgs& a) {
  const auto spec = a.model.spec();
  const auto data = a.data.load(spec.ladder.level(0), spec.classes);
  ArrnModel<T> model(spec, a.config.seed);
  const auto result = train(model, data, a.config);
  save_checkpoint(a.out, model);
  std::ostringstream csv;
  csv << "epoch,lr,loss\n" << std::setprecision(9);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    csv << e << ',' << result.epoch_lr[e] << ',' << result.epoch_loss[e] << '\n';
  }
  if (!a.loss_csv.empty()) write_text(a.loss_csv, csv.str());
  std::cout << "final loss " << result.epoch_loss.back() << ", train accuracy " << result.train_accuracy
            << "; checkpoint " << a.out << "\n";
  return kOk;
}

int run_train(const TrainArgs& a) {
  return parse_dtype(a.dtype) == Dtype::F64 ? train_with<double>(a) : train_with<float>(a);
}

struct EvalArgs {
  std::string checkpoint, resolutions, mode = "both", policy = "prefer-finer", out, svg;
  DataFlags data;
  bool timing = false;
};

template <typename T>
int eval_with(const EvalArgs& a) {
  const auto model = load_checkpoint<T>(a.checkpoint);
  const auto& ladder = model.ladder();
  const auto data = a.data.load(ladder.level(0), model.spec().classes);
  const auto resolutions = a.resolutions.empty() ? ladder.levels() : parse_grid_list(a.resolutions);
  SweepOptions options;
  options.policy = parse_policy(a.policy);
  options.timing = a.timing;
  std::vector<EvalMode> modes;
  if (a.mode == "both") {
    modes = {EvalMode::Full, EvalMode::Adapted};
  } else {
    modes = {parse_eval_mode(a.mode)};
  }
  std::vector<SweepRow> rows;
  for (auto mode : modes) {
    auto r = evaluate_sweep(model, data, resolutions, mode, options);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const auto csv = sweep_csv(rows);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text(a.out, csv);
  }
  if (!a.svg.empty()) write_text(a.svg, sweep_svg(rows, "accuracy vs resolution"));
  return kOk;
}

int run_eval(const EvalArgs& a) {
  return checkpoint_dtype(a.checkpoint) == Dtype::F64 ? eval_with<double>(a) : eval_with<float>(a);
}

struct BenchArgs {
  std::string checkpoint, resolutions, policy = "prefer-finer", out;
  ModelFlags model;
  std::size_t batch = 64;
  std::size_t repeats = 3;
  bool timing = true;
};

template <typename T>
int bench_with(const BenchArgs& a, const ArrnModel<T>& model) {
  const auto& ladder = model.ladder();
  const auto resolutions = a.resolutions.empty() ? ladder.levels() : parse_grid_list(a.resolutions);
  const auto policy = parse_policy(a.policy);
  std::mt19937_64 rng(1);
  std::ostringstream csv;
  csv << "resolution,mode,entry_level,macs,wall_ms\n" << std::fixed;
  for (const auto& res : resolutions) {
    for (auto mode : {EvalMode::Full, EvalMode::Adapted}) {
      const std::size_t entry = mode == EvalMode::Full ? 0 : entry_level(ladder, res, policy).level;
      std::vector<DiscreteSignal> inputs;
      for (std::size_t b = 0; b < a.batch; ++b) {
        DiscreteSignal s(res, model.spec().in_features);
        for (auto& v : s.values()) v = standard_normal(rng);
        inputs.push_back(resample_ideal(s, ladder.level(entry)));
      }
      const auto x = to_feature_map<T>(std::span<const DiscreteSignal>(inputs));
      double ms = 0.0;
      if (a.timing) {
        for (std::size_t r = 0; r < a.repeats; ++r) {
          const auto start = std::chrono::steady_clock::now();
          if (mode == EvalMode::Full) {
            model.forward_full(x);
          } else {
            model.forward_adapted(x);
          }
          ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
        ms /= static_cast<double>(a.repeats * a.batch);
      }
      csv << res.to_string() << ',' << eval_mode_name(mode) << ',' << entry << ',' << model.count_macs(entry, 1) << ','
          << std::setprecision(4) << ms << '\n';
    }
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
  return kOk;
}

int run_bench(const BenchArgs& a) {
  if (a.batch == 0 || a.repeats == 0) throw UsageError("--batch and --repeats must be positive");
  if (!a.checkpoint.empty()) {
    if (checkpoint_dtype(a.checkpoint) == Dtype::F64) return bench_with(a, load_checkpoint<double>(a.checkpoint));
    return bench_with(a, load_checkpoint<float>(a.checkpoint));
  }
  return bench_with(a, ArrnModel<float>(a.model.spec(), 1));
}

struct AblateArgs {
  ModelFlags model;
  DataFlags data;
  TrainConfig config;
  std::string seeds = "1", kernels = "perfect,sinc,gaussian", resolutions, table, ratios, rows;
  std::size_t threads = default_threads();
};

int run_ablate(const AblateArgs& a) {
  AblationConfig config;
  config.model = a.model.spec();
  config.train = a.config;
  config.data = a.data.synth(config.model.ladder.level(0), config.model.classes);
  config.seeds.clear();
  for (auto s : parse_counts(a.seeds)) config.seeds.push_back(s);
  config.kernels.clear();
  std::stringstream in(a.kernels);
  for (std::string k; std::getline(in, k, ',');) config.kernels.push_back(parse_kernel(k));
  if (!a.resolutions.empty()) config.resolutions = parse_grid_list(a.resolutions);
  config.threads = a.threads;
  const auto result = ablation_grid(config);
  const auto table = ablation_table_csv(result);
  const auto ratios = ablation_ratio_csv(result);
  if (a.table.empty()) {
    std::cout << table << "\n" << ratios;
  } else {
    write_text(a.table, table);
  }
  if (!a.ratios.empty()) write_text(a.ratios, ratios);
  if (!a.rows.empty()) write_text(a.rows, sweep_csv(result.rows));
  return kOk;
}

void add_train_flags(CLI::App* app, TrainConfig& c) {
  app->add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  app->add_option("--batch", c.batch, "Minibatch size")->capture_default_str();
  app->add_option("--lr", c.lr, "Initial learning rate")->capture_default_str();
  app->add_option("--min-lr", c.min_lr, "Final learning rate of the cosine schedule")->capture_default_str();
  app->add_option("--weight-decay", c.weight_decay, "Decoupled weight decay")->capture_default_str();
  app->add_option("--dropout", c.dropout, "Laplacian dropout probability per residual")->capture_default_str();
  app->add_option("--seed", c.seed, "Initialization and training seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-resolution residual networks: pyramids, verification, training and sweeps"};
  app.require_subcommand(1);

  DecomposeArgs dec;
  auto* c_dec = app.add_subcommand("decompose", "Write the Laplacian pyramid of an ARSG signal");
  c_dec->add_option("--input", dec.input, "Input ARSG file")->required();
  c_dec->add_option("--levels", dec.levels, "Resolution ladder, fine to coarse")->required();
  c_dec->add_option("--kernel", dec.kernel, "perfect | sinc[:taps] | gaussian[:sigma[:radius]]")->capture_default_str();
  c_dec->add_option("--out", dec.out, "Output directory")->required();
  c_dec->add_option("--dtype", dec.dtype, "f32 | f64 for the written bands")->capture_default_str();

  ReconstructArgs rec;
  auto* c_rec = app.add_subcommand("reconstruct", "Sum a decomposition back up to a ladder level");
  c_rec->add_option("--dir", rec.dir, "Directory written by decompose")->required();
  c_rec->add_option("--level", rec.level, "Target ladder level")->capture_default_str();
  c_rec->add_option("--out", rec.out, "Output ARSG file");
  c_rec->add_option("--reference", rec.reference, "Original signal; prints the max abs error against its lowpass");
  c_rec->add_option("--tol", rec.tol, "Exit 1 when the error against --reference exceeds this");

  VerifyArgs ver;
  auto* c_ver = app.add_subcommand("verify-adaptation",
                                   "Compare full and adapted logits on random models (f64: max abs, f32: max rel)");
  c_ver->add_option("--levels", ver.levels, "Resolution ladder, fine to coarse")->capture_default_str();
  c_ver->add_option("--kernel", ver.kernel, "Smoothing kernel")->capture_default_str();
  c_ver->add_option("--seed", ver.seed, "Seed for models and inputs")->capture_default_str();
  c_ver->add_option("--dtype", ver.dtype, "f32 | f64")->capture_default_str();
  c_ver->add_option("--tol", ver.tol, "Largest allowed discrepancy")->capture_default_str();
  c_ver->add_option("--trials", ver.trials, "Random models")->capture_default_str();
  c_ver->add_option("--batch", ver.batch, "Random inputs per model and level")->capture_default_str();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a model and write an ARNN1 checkpoint");
  tr.model.add(c_tr);
  tr.data.add(c_tr);
  add_train_flags(c_tr, tr.config);
  c_tr->add_option("--dtype", tr.dtype, "f32 | f64 arithmetic")->capture_default_str();
  c_tr->add_option("--out", tr.out, "Checkpoint path")->required();
  c_tr->add_option("--loss-csv", tr.loss_csv, "Per-epoch loss CSV");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Accuracy sweep over resolutions");
  c_ev->add_option("--checkpoint", ev.checkpoint, "ARNN1 checkpoint")->required();
  ev.data.add(c_ev);
  c_ev->add_option("--resolutions", ev.resolutions, "Comma-separated grids (default: every ladder level)");
  c_ev->add_option("--mode", ev.mode, "full | adapted | both")->capture_default_str();
  c_ev->add_option("--policy", ev.policy, "prefer-finer | prefer-coarser")->capture_default_str();
  c_ev->add_option("--out", ev.out, "Sweep CSV (stdout when omitted)");
  c_ev->add_option("--svg", ev.svg, "Also write an SVG plot");
  c_ev->add_flag("--timing", ev.timing, "Record wall-clock time per row");

  BenchArgs be;
  auto* c_be = app.add_subcommand("bench", "MACs and time per sample over resolutions, both modes");
  c_be->add_option("--checkpoint", be.checkpoint, "ARNN1 checkpoint (default: untrained model from the flags)");
  be.model.add(c_be);
  c_be->add_option("--resolutions", be.resolutions, "Comma-separated grids (default: every ladder level)");
  c_be->add_option("--policy", be.policy, "prefer-finer | prefer-coarser")->capture_default_str();
  c_be->add_option("--batch", be.batch, "Inputs per timed pass")->capture_default_str();
  c_be->add_option("--repeats", be.repeats, "Timed passes per row")->capture_default_str();
  c_be->add_flag("--timing,!--no-timing", be.timing, "Measure wall-clock time")->capture_default_str();
  c_be->add_option("--out", be.out, "CSV path (stdout when omitted)");

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Kernel x dropout x mode ablation grid");
  ab.model.add(c_ab);
  ab.data.add(c_ab);
  add_train_flags(c_ab, ab.config);
  c_ab->add_option("--seeds", ab.seeds, "Comma-separated seeds")->capture_default_str();
  c_ab->add_option("--kernels", ab.kernels, "Comma-separated kernels")->capture_default_str();
  c_ab->add_option("--resolutions", ab.resolutions, "Comma-separated grids (default: every ladder level)");
  c_ab->add_option("--threads", ab.threads, "Worker threads (default from ARRN_THREADS)")->capture_default_str();
  c_ab->add_option("--table", ab.table, "12-cell table CSV (stdout when omitted)");
  c_ab->add_option("--ratios", ab.ratios, "Decision-tree ratio CSV");
  c_ab->add_option("--rows", ab.rows, "Every sweep row as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*c_dec) return run_decompose(dec);
    if (*c_rec) return run_reconstruct(rec);
    if (*c_ver) return run_verify(ver);
    if (*c_tr) return run_train(tr);
    if (*c_ev) return run_eval(ev);
    if (*c_be) return run_bench(be);
    if (*c_ab) return run_ablate(ab);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kShape;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  }
  return kUsage;
}
