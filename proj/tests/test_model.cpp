#include <cmath>
#include <random>
#include <sstream>

#include "arrn/errors.hpp"
#include "arrn/model.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace arrn;

namespace {

ModelSpec small_spec(const std::string& ladder, SmoothingKernel kernel = PerfectKernel{}) {
  ModelSpec spec;
  spec.ladder = ResolutionLadder::parse(ladder);
  spec.in_features = 2;
  for (std::size_t n = 0; n < spec.ladder.size(); ++n) spec.features.push_back(3 + n);
  spec.classes = 3;
  spec.kernel = kernel;
  return spec;
}

template <typename T>
ArrnModel<T> random_model(const ModelSpec& spec, std::uint64_t seed) {
  ArrnModel<T> model(spec, seed);
  std::mt19937_64 rng(seed + 1000);
  model.randomize_normalization(rng);
  return model;
}

std::vector<DiscreteSignal> noise_batch(std::mt19937_64& rng, const GridSpec& grid, std::size_t features,
                                        std::size_t count) {
  std::vector<DiscreteSignal> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(oracle::white_noise(rng, grid, features));
  return out;
}

FeatureMap<double> as_map(const std::vector<DiscreteSignal>& batch) {
  return to_feature_map<double>(std::span<const DiscreteSignal>(batch));
}

double max_logit_diff(const Logits<double>& a, const Logits<double>& b) {
  return oracle::max_abs_diff(a.values, b.values);
}

// Residual computed with signal-core operators on one signal at a time.
DiscreteSignal residual_reference(const LaplacianResidual<double>& res, const DiscreteSignal& r,
                                  const SmoothingKernel& kernel) {
  const auto& out_grid = res.out_grid();
  auto low = lowpass(r, out_grid, kernel);
  DiscreteSignal diff = r;
  for (std::size_t i = 0; i < diff.values().size(); ++i) diff.values()[i] -= low.values()[i];
  auto b = to_signal(res.block.forward(to_feature_map<double>(diff), Mode::Eval), 0);
  auto t = lowpass(mean_reject(b), out_grid, kernel);
  for (std::size_t i = 0; i < t.values().size(); ++i) t.values()[i] += low.values()[i];
  auto z = decimate(t, out_grid);
  DiscreteSignal out(out_grid, res.out_features());
  for (std::size_t o = 0; o < res.out_features(); ++o) {
    for (std::size_t i = 0; i < res.in_features(); ++i) {
      const double w = res.projection.value[o * res.in_features() + i];
      for (std::size_t k = 0; k < out_grid.samples(); ++k) out.channel(o)[k] += w * z.channel(i)[k];
    }
  }
  return out;
}

DiscreteSignal projected_downsample(const LaplacianResidual<double>& res, const DiscreteSignal& r,
                                    const SmoothingKernel& kernel) {
  auto z = downsample(r, res.out_grid(), kernel);
  DiscreteSignal out(res.out_grid(), res.out_features());
  for (std::size_t o = 0; o < res.out_features(); ++o) {
    for (std::size_t i = 0; i < res.in_features(); ++i) {
      const double w = res.projection.value[o * res.in_features() + i];
      for (std::size_t k = 0; k < z.grid().samples(); ++k) out.channel(o)[k] += w * z.channel(i)[k];
    }
  }
  return out;
}

const std::vector<SmoothingKernel> kAllKernels = {PerfectKernel{}, WindowedSincKernel{}, GaussianKernel{}};

}  // namespace

TEST_CASE("dropout mask examples") {
  std::mt19937_64 rng(1);
  auto none = sample_mask(rng, DropoutConfig::uniform(4, 0.0));
  CHECK(none.chain == std::vector<int>{1, 1, 1, 1});
  auto all = sample_mask(rng, DropoutConfig::uniform(4, 1.0));
  CHECK(all.chain == std::vector<int>{0, 0, 0, 0});
  CHECK(DropoutMask::from_indep({0, 0, 1, 0}).chain == std::vector<int>{0, 0, 1, 1});
  CHECK(DropoutMask::drop_first(3, 2).chain == std::vector<int>{0, 0, 1});
  CHECK_THROWS_AS(DropoutConfig::uniform(2, 1.5), UsageError);
}

TEST_CASE("property: sampled masks are step sequences and reproducible") {
  std::mt19937_64 rng(2), again(2);
  const DropoutConfig config{{0.3, 0.6, 0.2, 0.9}};
  std::size_t dropped_first = 0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    auto m = sample_mask(rng, config);
    CHECK(m.chain == sample_mask(again, config).chain);
    for (std::size_t i = 1; i < m.chain.size(); ++i) CHECK(m.chain[i] >= m.chain[i - 1]);
    for (std::size_t i = 0; i < m.chain.size(); ++i) CHECK(m.chain[i] >= m.indep[i]);
    dropped_first += m.chain[0] == 0;
  }
  CHECK(static_cast<double>(dropped_first) / trials == doctest::Approx(0.3).epsilon(0.1));
}

TEST_CASE("entry level examples") {
  const auto ladder = ResolutionLadder::parse("32,16,8");
  auto exact = entry_level(ladder, GridSpec::line(16), EntryPolicy::PreferFiner);
  CHECK(exact.level == 1);
  CHECK_FALSE(exact.resample);
  auto finer = entry_level(ladder, GridSpec::line(12), EntryPolicy::PreferFiner);
  CHECK(finer.level == 1);
  CHECK(finer.resample);
  auto coarser = entry_level(ladder, GridSpec::line(12), EntryPolicy::PreferCoarser);
  CHECK(coarser.level == 2);
  CHECK(entry_level(ladder, GridSpec::line(32), EntryPolicy::PreferCoarser).level == 0);
  CHECK(entry_level(ladder, GridSpec::line(4), EntryPolicy::PreferFiner).level == 2);
  CHECK_THROWS_AS(entry_level(ladder, GridSpec::line(48), EntryPolicy::PreferFiner), ShapeError);
  CHECK_THROWS_AS(entry_level(ladder, GridSpec::plane(8, 8), EntryPolicy::PreferFiner), ShapeError);
  const auto square = ResolutionLadder::parse("16x16,8x8");
  CHECK(entry_level(square, GridSpec::plane(12, 8), EntryPolicy::PreferFiner).level == 0);
  CHECK(entry_level(square, GridSpec::plane(12, 8), EntryPolicy::PreferCoarser).level == 1);
  CHECK(parse_policy(policy_name(EntryPolicy::PreferCoarser)) == EntryPolicy::PreferCoarser);
}

TEST_CASE("separable operators agree with signal-core and with their adjoints") {
  std::mt19937_64 rng(3);
  for (auto [fine, coarse] : {std::pair{GridSpec::line(12), GridSpec::line(4)},
                              std::pair{GridSpec::plane(8, 6), GridSpec::plane(4, 3)}}) {
    for (const auto& kernel : kAllKernels) {
      auto s = oracle::white_noise(rng, fine, 2);
      auto x = to_feature_map<double>(s);
      auto lp = SeparableOp<double>::lowpass(kernel, fine, coarse);
      auto dn = SeparableOp<double>::downsample(kernel, fine, coarse);
      CHECK(oracle::max_abs_diff(lp.apply(x).values, lowpass(s, coarse, kernel).values()) < 1e-12);
      CHECK(oracle::max_abs_diff(dn.apply(x).values, downsample(s, coarse, kernel).values()) < 1e-12);
      auto y = to_feature_map<double>(oracle::white_noise(rng, coarse, 2));
      double lhs = 0.0, rhs = 0.0;
      auto ax = dn.apply(x);
      auto aty = dn.apply_transpose(y);
      for (std::size_t i = 0; i < y.values.size(); ++i) lhs += ax.values[i] * y.values[i];
      for (std::size_t i = 0; i < x.values.size(); ++i) rhs += x.values[i] * aty.values[i];
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
      MacCounter macs;
      dn.apply(x, &macs);
      CHECK(macs.total == 2 * dn.macs());
    }
  }
  CHECK(SeparableOp<double>::downsample(PerfectKernel{}, GridSpec::plane(8, 6), GridSpec::plane(4, 3)).macs() ==
        8 * 3 * 6 + 4 * 8 * 3);
}

TEST_CASE("residual forward matches the unfused reference") {
  std::mt19937_64 rng(4);
  for (const auto& ladder : {std::string("24,8,4"), std::string("8x8,4x4,2x2")}) {
    for (const auto& kernel : kAllKernels) {
      auto model = random_model<double>(small_spec(ladder, kernel), 5);
      const auto& res = model.residual(0);
      auto r = oracle::white_noise(rng, res.in_grid(), res.in_features());
      auto fused = to_signal(res.forward(to_feature_map<double>(r), 1, Mode::Eval), 0);
      auto ref = residual_reference(res, r, kernel);
      CHECK(oracle::max_abs_diff(fused.values(), ref.values()) <= 1e-10);
    }
  }
}

TEST_CASE("residual gate and cancellation examples") {
  std::mt19937_64 rng(6);
  for (const auto& kernel : kAllKernels) {
    auto model = random_model<double>(small_spec("16,8,4", kernel), 7);
    auto& res = model.residual(0);
    auto r = oracle::white_noise(rng, res.in_grid(), res.in_features());
    auto x = to_feature_map<double>(r);
    SUBCASE("gate 0 is the projected downsample and ignores the block") {
      auto before = res.forward(x, 0, Mode::Eval);
      CHECK(oracle::max_abs_diff(to_signal(before, 0).values(), projected_downsample(res, r, kernel).values()) <=
            1e-12);
      for (auto* p : res.block.parameters()) {
        for (auto& v : p->value) v += 0.37;
      }
      auto after = res.forward(x, 0, Mode::Eval);
      CHECK(before.values == after.values);
    }
    SUBCASE("constant input makes the block contribution vanish") {
      DiscreteSignal c(res.in_grid(), res.in_features());
      for (std::size_t f = 0; f < c.features(); ++f) {
        for (auto& v : c.channel(f)) v = 1.5 - static_cast<double>(f);
      }
      auto out = to_signal(res.forward(to_feature_map<double>(c), 1, Mode::Eval), 0);
      CHECK(oracle::max_abs_diff(out.values(), projected_downsample(res, c, kernel).values()) <= 1e-10);
    }
  }
  SUBCASE("band-limited input with the ideal kernel") {
    auto model = random_model<double>(small_spec("16,8,4"), 8);
    const auto& res = model.residual(0);
    auto s = oracle::random_trig_poly(rng, res.out_grid(), res.in_features()).sample(res.in_grid());
    auto out = to_signal(res.forward(to_feature_map<double>(s), 1, Mode::Eval), 0);
    CHECK(oracle::max_abs_diff(out.values(), residual_reference(res, s, PerfectKernel{}).values()) <= 1e-10);
    CHECK(oracle::max_abs_diff(out.values(), projected_downsample(res, s, PerfectKernel{}).values()) <= 1e-10);
  }
}

TEST_CASE("every constructed block is zero-constant") {
  for (const auto& ladder : {std::string("32,16,8"), std::string("8x8,4x4,2x2")}) {
    auto model = random_model<double>(small_spec(ladder), 9);
    for (std::size_t i = 0; i < model.residual_count(); ++i) {
      const auto& res = model.residual(i);
      CHECK(zero_constancy_check(res.block, res.in_features(), res.in_grid(), 1e-10).pass);
    }
    const auto& top = model.ladder().level(model.ladder().last());
    CHECK(zero_constancy_check(model.head_block(), model.spec().features.back(), top, 1e-10).pass);
  }
}

TEST_CASE("adapted evaluation at level 0 is forward_full") {
  std::mt19937_64 rng(10);
  auto model = random_model<double>(small_spec("16,8,4"), 11);
  auto x = as_map(noise_batch(rng, GridSpec::line(16), 2, 3));
  CHECK(model.forward_adapted(x).values == model.forward_full(x).values);
}

TEST_CASE("property: skip theorem for the ideal kernel") {
  std::mt19937_64 rng(12);
  for (const auto& ladder : {std::string("32,16,8"), std::string("27,9,3"), std::string("8x8,4x4,2x2")}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      auto model = random_model<double>(small_spec(ladder), seed);
      for (std::size_t u = 1; u <= model.ladder().last(); ++u) {
        auto inputs = noise_batch(rng, model.ladder().level(u), 2, 3);
        auto rep = equivalence_report(model, std::span<const DiscreteSignal>(inputs));
        CAPTURE(ladder);
        CAPTURE(u);
        CHECK(rep.max_abs <= 1e-9);
      }
    }
  }
}

TEST_CASE("approximate kernels break exact equivalence") {
  std::mt19937_64 rng(13);
  auto inputs = noise_batch(rng, GridSpec::line(16), 2, 4);
  auto perfect = equivalence_report(random_model<double>(small_spec("32,16,8"), 3), std::span<const DiscreteSignal>(inputs));
  auto gauss = equivalence_report(random_model<double>(small_spec("32,16,8", GaussianKernel{}), 3),
                                  std::span<const DiscreteSignal>(inputs));
  CHECK(gauss.max_abs > perfect.max_abs);
  CHECK(gauss.max_abs > 1e-6);
}

TEST_CASE("gating off leading residuals equals adapted evaluation of the downsampled input") {
  std::mt19937_64 rng(14);
  auto model = random_model<double>(small_spec("32,16,8"), 15);
  auto batch = noise_batch(rng, GridSpec::line(32), 2, 3);
  for (std::size_t k = 1; k <= 2; ++k) {
    auto gated = model.forward_full(as_map(batch), DropoutMask::drop_first(2, k), Mode::Eval);
    std::vector<DiscreteSignal> low;
    for (const auto& s : batch) low.push_back(downsample(s, model.ladder().level(k), PerfectKernel{}));
    auto adapted = model.forward_adapted(as_map(low));
    CHECK(max_logit_diff(gated, adapted) <= 1e-9);
    // Same as the full path on the twice-resampled input.
    std::vector<DiscreteSignal> lifted;
    for (const auto& s : low) lifted.push_back(upsample(s, model.ladder().level(0)));
    CHECK(max_logit_diff(gated, model.forward_full(as_map(lifted))) <= 1e-9);
  }
}

TEST_CASE("zero input logits do not depend on the mask") {
  auto model = random_model<double>(small_spec("16,8,4"), 16);
  FeatureMap<double> zero(2, 2, GridSpec::line(16));
  auto ref = model.forward_full(zero);
  for (std::size_t k = 0; k <= 2; ++k) {
    CHECK(max_logit_diff(model.forward_full(zero, DropoutMask::drop_first(2, k), Mode::Eval), ref) <= 1e-12);
  }
  CHECK(ref.at(0, 1) == ref.at(1, 1));
}

TEST_CASE("analytic MAC counts equal instrumented counts and shrink with entry level") {
  for (const auto& ladder : {std::string("64,32,16"), std::string("8x8,4x4,2x2")}) {
    auto model = random_model<float>(small_spec(ladder), 17);
    std::uint64_t previous = 0;
    for (std::size_t u = 0; u <= model.ladder().last(); ++u) {
      FeatureMap<float> x(3, 2, model.ladder().level(u));
      MacCounter macs;
      model.forward_adapted(x, Mode::Eval, &macs);
      CHECK(macs.total == model.count_macs(u, 3));
      if (u > 0) CHECK(macs.total < previous);
      previous = macs.total;
    }
    MacCounter full;
    model.forward_full(FeatureMap<float>(3, 2, model.ladder().level(0)), DropoutMask::all_on(2), Mode::Eval, nullptr,
                       nullptr, &full);
    CHECK(full.total == model.count_macs(0, 3));
  }
}

TEST_CASE("composed projection cache follows parameter updates") {
  std::mt19937_64 rng(18);
  auto model = random_model<double>(small_spec("16,8,4"), 19);
  auto x = as_map(noise_batch(rng, GridSpec::line(4), 2, 2));
  auto before = model.forward_adapted(x);
  model.residual(1).projection.value[0] += 1.0;
  CHECK(model.forward_adapted(x).values == before.values);
  model.invalidate();
  CHECK(model.forward_adapted(x).values != before.values);
  // Against a direct product.
  auto m = model.composed_projection(2);
  const auto& a0 = model.input_projection().value;
  const auto& a1 = model.residual(0).projection.value;
  const auto& a2 = model.residual(1).projection.value;
  for (std::size_t o = 0; o < 5; ++o) {
    for (std::size_t i = 0; i < 2; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t k = 0; k < 3; ++k) acc += a2[o * 4 + j] * a1[j * 3 + k] * a0[k * 2 + i];
      }
      CHECK(m[o * 2 + i] == doctest::Approx(acc).epsilon(1e-14));
    }
  }
}

TEST_CASE("finite-difference gradients through a full model") {
  std::mt19937_64 rng(20);
  for (auto [ladder, kernel] : {std::pair{std::string("8,4,2"), SmoothingKernel(GaussianKernel{})},
                                std::pair{std::string("4x4,2x2"), SmoothingKernel(PerfectKernel{})}}) {
    auto spec = small_spec(ladder, kernel);
    spec.head_dropout = 0.25;
    auto model = random_model<double>(spec, 21);
    auto x = as_map(noise_batch(rng, model.ladder().level(0), 2, 3));
    const std::vector<int> labels = {0, 2, 1};
    const auto mask = DropoutMask::from_indep(std::vector<int>(model.residual_count(), 1));
    for (auto [mode, h] : {std::pair{Mode::Eval, 1e-3}, std::pair{Mode::Train, 1e-5}}) {
      auto loss = [&](ModelTape<double>* tape, Logits<double>* grad) {
        std::mt19937_64 drop(5);
        auto logits = model.forward_full(x, mask, mode, &drop, tape);
        return cross_entropy<double>(logits, labels, grad);
      };
      ModelTape<double> tape;
      Logits<double> g;
      model.zero_grad();
      loss(&tape, &g);
      model.backward(tape, g);
      double worst = 0.0;
      for (auto* p : model.parameters()) {
        for (std::size_t i = 0; i < p->size(); ++i) {
          const double keep = p->value[i];
          p->value[i] = keep + h;
          model.invalidate();
          const double up = loss(nullptr, nullptr);
          p->value[i] = keep - h;
          const double down = loss(nullptr, nullptr);
          p->value[i] = keep;
          const double numeric = (up - down) / (2 * h);
          worst = std::max(worst, std::abs(numeric - p->grad[i]) /
                                      std::max({std::abs(numeric), std::abs(p->grad[i]), 1e-2}));
        }
      }
      CAPTURE(ladder);
      CHECK(worst <= 1e-4);
    }
  }
}

TEST_CASE("gated-off residuals receive no block gradient") {
  std::mt19937_64 rng(22);
  auto model = random_model<double>(small_spec("16,8,4"), 23);
  auto x = as_map(noise_batch(rng, GridSpec::line(16), 2, 2));
  ModelTape<double> tape;
  auto logits = model.forward_full(x, DropoutMask::drop_first(2, 1), Mode::Eval, nullptr, &tape);
  Logits<double> g;
  const std::vector<int> labels = {0, 1};
  cross_entropy<double>(logits, labels, &g);
  model.zero_grad();
  model.backward(tape, g);
  for (auto* p : model.residual(0).block.parameters()) CHECK(oracle::max_abs(std::vector<double>(p->grad)) == 0.0);
  CHECK(oracle::max_abs(std::vector<double>(model.residual(0).projection.grad)) > 0.0);
}

TEST_CASE("checkpoint round trip and validation") {
  std::mt19937_64 rng(24);
  auto spec = small_spec("16,8,4", GaussianKernel{0.7, 2.5});
  spec.dropout = DropoutConfig::uniform(2, 0.3);
  auto model = random_model<float>(spec, 25);
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  write_checkpoint(buf, model);
  const auto bytes = buf.str();
  CHECK(bytes.substr(0, 6) == "ARNN1\n");
  auto back = read_checkpoint<float>(buf);
  CHECK(kernel_name(back.spec().kernel) == kernel_name(spec.kernel));
  CHECK(back.spec().dropout.p == spec.dropout.p);
  FeatureMap<float> x(2, 2, GridSpec::line(16));
  for (auto& v : x.values) v = static_cast<float>(oracle::normal(rng));
  CHECK(back.forward_full(x).values == model.forward_full(x).values);
  std::ostringstream again(std::ios::binary);
  write_checkpoint(again, back);
  CHECK(again.str() == bytes);

  auto parse64 = [](const std::string& b) {
    std::istringstream in(b, std::ios::binary);
    return read_checkpoint<double>(in);
  };
  auto parse32 = [](const std::string& b) {
    std::istringstream in(b, std::ios::binary);
    return read_checkpoint<float>(in);
  };
  CHECK_THROWS_AS(parse64(bytes), FormatError);
  CHECK_THROWS_AS(parse32("ARNN2\n" + bytes.substr(6)), FormatError);
  CHECK_THROWS_AS(parse32(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(parse32(bytes + "x"), FormatError);
}

TEST_CASE("construction is deterministic under a seed") {
  auto spec = small_spec("16,8,4");
  std::ostringstream a(std::ios::binary), b(std::ios::binary), c(std::ios::binary);
  write_checkpoint(a, ArrnModel<double>(spec, 3));
  write_checkpoint(b, ArrnModel<double>(spec, 3));
  write_checkpoint(c, ArrnModel<double>(spec, 4));
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());
}
