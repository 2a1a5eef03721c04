#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "arrn/errors.hpp"
#include "arrn/signal.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace arrn;

namespace {

DiscreteSignal line_signal(std::vector<double> v) {
  const auto n = v.size();
  return DiscreteSignal(GridSpec::line(n), 1, std::move(v));
}

DiscreteSignal cosine(std::size_t n, int k) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::cos(2 * std::numbers::pi * k * static_cast<double>(i) / static_cast<double>(n));
  }
  return line_signal(v);
}

const std::vector<SmoothingKernel> kAllKernels = {PerfectKernel{}, WindowedSincKernel{},
                                                  GaussianKernel{}};

double channel_mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("grid invariants") {
  CHECK(GridSpec::plane(4, 6).samples() == 24);
  CHECK_THROWS_AS(GridSpec({0}), ShapeError);
  CHECK_THROWS_AS(GridSpec({2, 2, 2}), ShapeError);
  CHECK(comparable(GridSpec::line(8), GridSpec::line(4)));
  CHECK_FALSE(comparable(GridSpec::line(12), GridSpec::line(8)));
  CHECK_FALSE(comparable(GridSpec::line(8), GridSpec::plane(8, 8)));
  CHECK(coarser_or_equal(GridSpec::plane(4, 2), GridSpec::plane(8, 8)));
  CHECK_FALSE(coarser_or_equal(GridSpec::plane(16, 2), GridSpec::plane(8, 8)));
}

TEST_CASE("ladder parsing and validation") {
  auto ladder = ResolutionLadder::parse("32,16,8");
  CHECK(ladder.size() == 3);
  CHECK(ladder.level(2) == GridSpec::line(8));
  CHECK(ResolutionLadder::parse("8x8,4x4").level(1) == GridSpec::plane(4, 4));
  CHECK_THROWS_AS(ResolutionLadder::parse("32"), UsageError);
  CHECK_THROWS_AS(ResolutionLadder::parse("32,12"), ShapeError);
  CHECK_THROWS_AS(ResolutionLadder::parse("16,16"), ShapeError);
  CHECK_THROWS_AS(ResolutionLadder::parse("32,a"), UsageError);
}

TEST_CASE("signal construction rejects bad payloads") {
  CHECK_THROWS_AS(DiscreteSignal(GridSpec::line(4), 1, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(DiscreteSignal(GridSpec::line(2), 1, {1, std::numeric_limits<double>::infinity()}),
                  NumericError);
}

TEST_CASE("kernel descriptions") {
  CHECK(kernel_name(parse_kernel("sinc")) == "sinc:9");
  CHECK(kernel_name(parse_kernel("gaussian")) == "gaussian:0.5:2");
  CHECK(parse_kernel(kernel_name(GaussianKernel{1.25, 3})) == SmoothingKernel(GaussianKernel{1.25, 3}));
  CHECK_THROWS_AS(parse_kernel("sinc:4"), UsageError);
  CHECK_THROWS_AS(parse_kernel("sinc:1"), UsageError);
  CHECK_THROWS_AS(parse_kernel("gaussian:-1"), UsageError);
  CHECK_THROWS_AS(parse_kernel("box"), UsageError);
}

TEST_CASE("realized kernels have unit DC gain") {
  for (const auto& k : kAllKernels) {
    for (auto [fine, coarse] : {std::pair<std::size_t, std::size_t>{8, 4}, {64, 16}, {4, 2}, {6, 3}}) {
      auto taps = realize_axis_kernel(k, fine, coarse);
      CHECK(std::accumulate(taps.begin(), taps.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
  // Gaussian taps follow the textbook formula with sigma = 0.5 * factor, radius = ceil(2 sigma).
  auto lib = realize_axis_kernel(GaussianKernel{}, 16, 8);
  auto ref = oracle::gaussian_taps(16, 2, 0.5, 2.0);
  CHECK(oracle::max_abs_diff(lib, ref) < 1e-15);
  CHECK(lib[2] > 0.0);
  CHECK(lib[3] == 0.0);
}

TEST_CASE("lowpass examples") {
  SUBCASE("constant is preserved by every kernel") {
    for (const auto& k : kAllKernels) {
      auto out = lowpass(line_signal(std::vector<double>(8, 2.5)), GridSpec::line(4), k);
      for (double v : out.values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
      DiscreteSignal plane(GridSpec::plane(8, 8), 2);
      for (auto& v : plane.values()) v = -1.25;
      auto out2 = lowpass(plane, GridSpec::plane(2, 4), k);
      for (double v : out2.values()) CHECK(v == doctest::Approx(-1.25).epsilon(1e-14));
    }
  }
  SUBCASE("frequency 3 is outside the 4-grid band") {
    auto out = lowpass(cosine(8, 3), GridSpec::line(4), PerfectKernel{});
    CHECK(oracle::max_abs(out.values()) < 1e-15);
  }
  SUBCASE("frequency 1 is inside the 4-grid band") {
    auto in = cosine(8, 1);
    auto out = lowpass(in, GridSpec::line(4), PerfectKernel{});
    CHECK(oracle::max_abs_diff(out.values(), in.values()) <= 1e-12);
  }
  SUBCASE("Nyquist of the coarse band keeps cosine, drops sine") {
    auto c = cosine(8, 2);
    CHECK(oracle::max_abs_diff(lowpass(c, GridSpec::line(4), PerfectKernel{}).values(), c.values()) < 1e-14);
    std::vector<double> sine(8);
    for (std::size_t i = 0; i < 8; ++i) sine[i] = std::sin(2 * std::numbers::pi * 2 * i / 8.0);
    CHECK(oracle::max_abs(lowpass(line_signal(sine), GridSpec::line(4), PerfectKernel{}).values()) < 1e-14);
  }
}

TEST_CASE("perfect lowpass matches the direct DFT projection") {
  std::mt19937_64 rng(11);
  for (auto [fine, band] : {std::pair<GridSpec, GridSpec>{GridSpec::line(64), GridSpec::line(16)},
                            {GridSpec::line(15), GridSpec::line(5)},
                            {GridSpec::plane(12, 8), GridSpec::plane(6, 2)}}) {
    auto s = oracle::white_noise(rng, fine, 2);
    auto lib = lowpass(s, band, PerfectKernel{});
    auto ref = oracle::band_project(s, band);
    CHECK(oracle::max_abs_diff(lib.values(), ref.values()) < 1e-12);
  }
}

TEST_CASE("approximate lowpass is spatial circular convolution") {
  std::mt19937_64 rng(5);
  auto s = oracle::white_noise(rng, GridSpec::line(32), 1);
  auto lib = lowpass(s, GridSpec::line(8), GaussianKernel{0.7, 2.5});
  auto ref = oracle::circular_convolve(s.values(), oracle::gaussian_taps(32, 4, 0.7, 2.5));
  CHECK(oracle::max_abs_diff(lib.values(), ref) < 1e-13);
}

TEST_CASE("lowpass errors") {
  CHECK_THROWS_AS(lowpass(cosine(8, 1), GridSpec::line(3), PerfectKernel{}), ShapeError);
  CHECK_THROWS_AS(lowpass(cosine(8, 1), GridSpec::line(16), PerfectKernel{}), ShapeError);
  DiscreteSignal bad(GridSpec::line(4), 1);
  bad.values()[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(lowpass(bad, GridSpec::line(2), PerfectKernel{}), NumericError);
}

TEST_CASE("decimate examples") {
  auto out = decimate(line_signal({0, 1, 2, 3, 4, 5, 6, 7}), GridSpec::line(4));
  CHECK(std::vector<double>(out.values().begin(), out.values().end()) == std::vector<double>{0, 2, 4, 6});
  auto same = decimate(line_signal({3, 1, 4}), GridSpec::line(3));
  CHECK(std::vector<double>(same.values().begin(), same.values().end()) == std::vector<double>{3, 1, 4});
  std::vector<double> ramp(16);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  auto corners = decimate(DiscreteSignal(GridSpec::plane(4, 4), 1, ramp), GridSpec::plane(2, 2));
  CHECK(std::vector<double>(corners.values().begin(), corners.values().end()) ==
        std::vector<double>{0, 2, 8, 10});
  CHECK_THROWS_AS(decimate(line_signal({1, 2, 3}), GridSpec::line(2)), ShapeError);
}

TEST_CASE("downsample / upsample round trip on the band") {
  std::mt19937_64 rng(21);
  SUBCASE("1-D") {
    auto poly = oracle::random_trig_poly(rng, GridSpec::line(4), 3);
    auto s = poly.sample(GridSpec::line(8));
    auto back = upsample(downsample(s, GridSpec::line(4), PerfectKernel{}), GridSpec::line(8));
    CHECK(oracle::max_abs_diff(back.values(), s.values()) <= 1e-10);
  }
  SUBCASE("2-D, anisotropic factors") {
    auto poly = oracle::random_trig_poly(rng, GridSpec::plane(4, 8), 2);
    auto s = poly.sample(GridSpec::plane(16, 16));
    auto back = upsample(downsample(s, GridSpec::plane(4, 8), PerfectKernel{}), GridSpec::plane(16, 16));
    CHECK(oracle::max_abs_diff(back.values(), s.values()) <= 1e-10);
  }
  SUBCASE("constant") {
    auto d = downsample(line_signal(std::vector<double>(8, 4.0)), GridSpec::line(2), GaussianKernel{});
    for (double v : d.values()) CHECK(v == doctest::Approx(4.0).epsilon(1e-14));
  }
  SUBCASE("truncated Gaussian differs from perfect on white noise") {
    auto s = oracle::white_noise(rng, GridSpec::line(32), 1);
    auto a = downsample(s, GridSpec::line(16), PerfectKernel{});
    auto b = downsample(s, GridSpec::line(16), GaussianKernel{});
    CHECK(oracle::max_abs_diff(a.values(), b.values()) > 0.0);
  }
}

TEST_CASE("upsample examples") {
  SUBCASE("impulse becomes Dirichlet samples") {
    auto out = upsample(line_signal({1, 0, 0, 0}), GridSpec::line(8));
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(out.values()[i] == doctest::Approx(oracle::dirichlet(4, i / 8.0)).epsilon(1e-13));
    }
    CHECK(out.values()[1] == doctest::Approx(0.25 + std::sqrt(2.0) / 4).epsilon(1e-13));
  }
  SUBCASE("constant") {
    auto out = upsample(line_signal({7, 7, 7}), GridSpec::line(12));
    for (double v : out.values()) CHECK(v == doctest::Approx(7.0).epsilon(1e-14));
  }
  SUBCASE("samples are preserved for any coarse signal") {
    std::mt19937_64 rng(3);
    for (auto [coarse, fine] : {std::pair<GridSpec, GridSpec>{GridSpec::line(4), GridSpec::line(8)},
                                {GridSpec::line(5), GridSpec::line(15)},
                                {GridSpec::plane(4, 6), GridSpec::plane(16, 12)}}) {
      auto x = oracle::white_noise(rng, coarse, 2);
      auto round = decimate(upsample(x, fine), coarse);
      CHECK(oracle::max_abs_diff(round.values(), x.values()) <= 1e-10);
      auto up = upsample(x, fine);
      CHECK(check_bandlimited(up, coarse, PerfectKernel{}, 1e-10).inside);
    }
  }
  SUBCASE("interpolant matches the trigonometric polynomial between samples") {
    std::mt19937_64 rng(8);
    auto poly = oracle::random_trig_poly(rng, GridSpec::plane(6, 4), 1);
    auto up = upsample(poly.sample(GridSpec::plane(6, 4)), GridSpec::plane(18, 16));
    CHECK(oracle::max_abs_diff(up.values(), poly.sample(GridSpec::plane(18, 16)).values()) < 1e-10);
  }
  CHECK_THROWS_AS(upsample(line_signal({1, 2, 3}), GridSpec::line(8)), ShapeError);
}

TEST_CASE("spectral resampling between non-multiple extents") {
  std::mt19937_64 rng(17);
  auto poly = oracle::random_trig_poly(rng, GridSpec::line(11), 2);
  // 12 -> 16: band of 11 fits both grids, so resampling is exact.
  auto up = resample_spectral(poly.sample(GridSpec::line(12)), GridSpec::line(16));
  CHECK(oracle::max_abs_diff(up.values(), poly.sample(GridSpec::line(16)).values()) < 1e-10);
  // 12 -> 8 equals sampling the band-8 projection of the continuous signal.
  auto fine = poly.sample(GridSpec::line(48));
  auto projected = oracle::band_project(fine, GridSpec::line(8));
  auto down = resample_spectral(poly.sample(GridSpec::line(12)), GridSpec::line(8));
  auto expected = decimate(projected, GridSpec::line(8));
  CHECK(oracle::max_abs_diff(down.values(), expected.values()) < 1e-10);
}

TEST_CASE("mean_reject examples") {
  auto out = mean_reject(line_signal({1, 2, 3, 4}));
  CHECK(oracle::max_abs_diff(out.values(), std::vector<double>{-1.5, -0.5, 0.5, 1.5}) < 1e-15);
  DiscreteSignal consts(GridSpec::plane(3, 3), 2);
  for (std::size_t i = 0; i < 9; ++i) {
    consts.values()[i] = 3.0;
    consts.values()[9 + i] = -8.0;
  }
  CHECK(oracle::max_abs(mean_reject(consts).values()) < 1e-14);

  std::mt19937_64 rng(4);
  auto noise = oracle::white_noise(rng, GridSpec::plane(5, 7), 3);
  auto once = mean_reject(noise);
  auto twice = mean_reject(once);
  CHECK(oracle::max_abs_diff(once.values(), twice.values()) < 1e-14);
  for (std::size_t c = 0; c < 3; ++c) {
    auto ch = once.channel(c);
    CHECK(std::abs(channel_mean(ch)) < 1e-12);
    CHECK(std::abs(std::accumulate(ch.begin(), ch.end(), 0.0)) < 1e-9);
  }
}

TEST_CASE("check_bandlimited examples") {
  std::mt19937_64 rng(9);
  auto noise = oracle::white_noise(rng, GridSpec::line(32), 1);
  auto filtered = lowpass(noise, GridSpec::line(8), PerfectKernel{});
  CHECK(check_bandlimited(filtered, GridSpec::line(8), PerfectKernel{}, 1e-10).inside);
  auto result = check_bandlimited(noise, GridSpec::line(16), PerfectKernel{}, 1e-10);
  CHECK_FALSE(result.inside);
  // Deviation equals the removed high band, measured independently.
  auto ref = oracle::band_project(noise, GridSpec::line(16));
  CHECK(result.max_deviation == doctest::Approx(oracle::max_abs_diff(noise.values(), ref.values())).epsilon(1e-9));
  for (const auto& k : kAllKernels) {
    CHECK(check_bandlimited(line_signal(std::vector<double>(16, 1.5)), GridSpec::line(2), k, 1e-12).inside);
  }
}

TEST_CASE("property: perfect lowpass is an idempotent, mean-preserving projector") {
  std::mt19937_64 rng(1234);
  const std::vector<std::pair<GridSpec, GridSpec>> cases = {
      {GridSpec::line(64), GridSpec::line(8)}, {GridSpec::line(30), GridSpec::line(10)},
      {GridSpec::plane(16, 16), GridSpec::plane(4, 8)}, {GridSpec::plane(9, 6), GridSpec::plane(3, 3)}};
  for (int trial = 0; trial < 20; ++trial) {
    const auto& [fine, band] = cases[static_cast<std::size_t>(trial) % cases.size()];
    auto s = oracle::white_noise(rng, fine, 2);
    auto once = lowpass(s, band, PerfectKernel{});
    auto twice = lowpass(once, band, PerfectKernel{});
    CHECK(oracle::max_abs_diff(once.values(), twice.values()) <= 1e-12);
    for (const auto& k : kAllKernels) {
      auto f = lowpass(s, band, k);
      for (std::size_t c = 0; c < 2; ++c) {
        CHECK(std::abs(channel_mean(f.channel(c)) - channel_mean(s.channel(c))) <= 1e-12);
      }
    }
    // Band-limited signals survive decimation + interpolation.
    auto back = upsample(decimate(once, band), fine);
    CHECK(oracle::max_abs_diff(back.values(), once.values()) <= 1e-10);
  }
}

TEST_CASE("axis operator matrices agree with the signal operators") {
  std::mt19937_64 rng(77);
  auto s = oracle::white_noise(rng, GridSpec::line(16), 1);
  for (const auto& k : kAllKernels) {
    auto down = axis_ops::downsample_matrix(k, 16, 4);
    auto ref = downsample(s, GridSpec::line(4), k);
    for (std::size_t i = 0; i < 4; ++i) {
      double acc = 0;
      for (std::size_t j = 0; j < 16; ++j) acc += down[i * 16 + j] * s.values()[j];
      CHECK(acc == doctest::Approx(ref.values()[i]).epsilon(1e-12));
    }
  }
  auto up = axis_ops::upsample_matrix(4, 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(up[i * 4] == doctest::Approx(oracle::dirichlet(4, i / 8.0)).epsilon(1e-13));
  }
}
