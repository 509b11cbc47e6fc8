#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

#include "slt/spectral/grid.hpp"
#include "slt/spectral/profile.hpp"

using namespace slt::spectral;
using std::numbers::pi;

namespace {

std::vector<double> sample(std::size_t n, auto&& f) {
  std::vector<double> u(n);
  for (std::size_t j = 0; j < n; ++j) u[j] = f(2.0 * pi * double(j) / double(n));
  return u;
}

double uniform_real(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0, 1)(rng); }

std::vector<double> random_profile(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> u(n);
  for (auto& v : u) v = nd(rng);
  return u;
}

// Random profile with no Nyquist content, so fractional shifts are exact.
std::vector<double> band_limited(std::size_t n, std::mt19937_64& rng) {
  auto s = rfft1(random_profile(n, rng));
  s.coeffs.back() = 0.0;
  return irfft1(s);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(WavenumberGrid, DealiasMaskFollowsTwoThirdsRule) {
  WavenumberGrid g(256, 256);
  EXPECT_EQ(g.k_max(), 85);
  for (std::size_t idx = 0; idx < g.spectral_size(); ++idx) {
    const int kx = g.kx_at(idx), ky = g.ky_at(idx);
    EXPECT_EQ(g.dealias_mask(idx), std::abs(kx) <= 85 && std::abs(ky) <= 85);
    EXPECT_EQ(g.retained(kx, ky), g.retained(-kx, -ky));
  }
  EXPECT_EQ(g.ky().front(), 0);
  EXPECT_EQ(g.ky()[128], 128);
  EXPECT_EQ(g.ky()[129], -127);
}

TEST(WavenumberGrid, RejectsOddSizes) {
  EXPECT_THROW(WavenumberGrid(63, 64), slt::ConfigError);
  EXPECT_THROW(RealFft2D(64, 31), slt::ConfigError);
  EXPECT_THROW(rfft1(std::vector<double>(7, 0.0)), slt::ConfigError);
}

TEST(Fft2, RoundTripRandomField) {
  auto g = WavenumberGrid::square(64);
  RealField2D f(g);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (auto& v : f.values) v = nd(rng);
  const auto back = ifft2(fft2(f));
  EXPECT_LE(max_abs_diff(back.values, f.values), 1e-12);
}

TEST(Fft2, PureCosineHasSingleModePair) {
  auto g = WavenumberGrid::square(32);
  RealField2D f(g);
  for (std::size_t iy = 0; iy < 32; ++iy)
    for (std::size_t ix = 0; ix < 32; ++ix) f.at(iy, ix) = std::cos(3.0 * 2.0 * pi * double(ix) / 32);
  const auto s = fft2(f);
  for (int ky = -15; ky <= 16; ++ky)
    for (int kx = -15; kx <= 16; ++kx) {
      const double expected = (ky == 0 && std::abs(kx) == 3) ? 32.0 * 32.0 / 2.0 : 0.0;
      EXPECT_NEAR(std::abs(s.coeff(kx, ky)), expected, 1e-9) << kx << "," << ky;
    }
}

TEST(Fft2, ParsevalAgainstPhysicalSum) {
  auto g = WavenumberGrid::square(48);
  RealField2D f(g);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(-1, 1);
  for (auto& v : f.values) v = ud(rng);
  const auto s = fft2(f);
  const double n2 = 48.0 * 48.0;
  double phys = 0.0;
  for (double v : f.values) phys += v * v;
  phys /= n2;
  double spec = 0.0;
  for (int ky = -23; ky <= 24; ++ky)
    for (int kx = -23; kx <= 24; ++kx) spec += std::norm(s.coeff(kx, ky));
  spec /= n2 * n2;
  EXPECT_NEAR(spec / phys, 1.0, 1e-10);
  EXPECT_LE(hermitian_defect(s), 1e-9);
}

TEST(Fft2, Laplacian) {
  auto g = WavenumberGrid::square(32);
  SpectralField2D s(g);
  s.set(3, 4, {1.0, 2.0});
  const auto l2 = laplacian_power(s, 2);
  EXPECT_NEAR(std::abs(l2.coeff(3, 4) - 625.0 * s.coeff(3, 4)), 0.0, 1e-9);
  // ∇⁻²∇² f = f for mean-free f
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  RealField2D f(g);
  for (auto& v : f.values) v = nd(rng);
  auto fs = fft2(f);
  fs.coeffs[0] = 0.0;
  const auto back = laplacian_power(laplacian_power(fs, 1), -1);
  double err = 0.0;
  for (std::size_t i = 0; i < fs.coeffs.size(); ++i) err = std::max(err, std::abs(back.coeffs[i] - fs.coeffs[i]));
  EXPECT_LE(err, 1e-10 * 32 * 32);
}

TEST(Rfft1, CosineAndRoundTrip) {
  const auto u = sample(256, [](double y) { return std::cos(2.0 * y); });
  const auto s = rfft1(u);
  for (std::size_t k = 0; k < s.modes(); ++k) EXPECT_NEAR(std::abs(s.coeffs[k]), k == 2 ? 0.5 : 0.0, 1e-13);
  std::mt19937_64 rng(1);
  const auto r = random_profile(64, rng);
  EXPECT_LE(max_abs_diff(irfft1(rfft1(r)), r), 1e-12);
}

TEST(Rfft1, TruncationMatchesDirichletKernel) {
  std::mt19937_64 rng(11);
  const auto u = random_profile(64, rng);
  const auto low = irfft1(truncate_modes(rfft1(u), 32));
  ASSERT_EQ(low.size(), 64u);
  for (std::size_t j = 0; j < 64; ++j) {
    double acc = 0.0;
    for (std::size_t m = 0; m < 64; ++m) {
      const double d = 2.0 * pi * (double(j) - double(m)) / 64.0;
      double kern = 1.0;
      for (int k = 1; k < 32; ++k) kern += 2.0 * std::cos(k * d);
      acc += u[m] * kern / 64.0;
    }
    EXPECT_NEAR(low[j], acc, 1e-12);
  }
  // Coarse resampling: 256 points -> 32 modes -> 64 points.
  const auto fine = random_profile(256, rng);
  const auto coarse = irfft1(truncate_modes(rfft1(fine), 32), 64);
  for (std::size_t j = 0; j < 64; ++j) {
    const double y = 2.0 * pi * double(j) / 64.0;
    double acc = 0.0;
    for (std::size_t m = 0; m < 256; ++m) {
      const double d = y - 2.0 * pi * double(m) / 256.0;
      double kern = 1.0;
      for (int k = 1; k < 32; ++k) kern += 2.0 * std::cos(k * d);
      acc += fine[m] * kern / 256.0;
    }
    EXPECT_NEAR(coarse[j], acc, 1e-12);
  }
}

TEST(Rfft1, TruncationDirectionErrors) {
  const auto s = rfft1(std::vector<double>(16, 1.0));
  EXPECT_THROW(truncate_modes(s, 20), slt::ConfigError);
  EXPECT_EQ(resize_modes(s, 20).modes(), 20u);
  EXPECT_THROW(irfft1(s, 8), slt::ConfigError);
  EXPECT_EQ(irfft1(s, 32).size(), 32u);
}

TEST(Phase, ExtractionConvention) {
  auto ph = [](auto f) { return extract_phase(rfft1(sample(128, f))).phi; };
  EXPECT_NEAR(ph([](double y) { return std::cos(y - 0.7); }), 0.7, 1e-12);
  EXPECT_NEAR(ph([](double y) { return std::cos(y); }), 0.0, 1e-12);
  EXPECT_NEAR(ph([](double y) { return std::cos(y) + 0.3 * std::cos(5 * y - 1.1); }), 0.0, 1e-12);
  EXPECT_NEAR(ph([](double y) { return std::cos(y + 0.5); }), 2.0 * pi - 0.5, 1e-12);
}

TEST(Phase, DegenerateFirstMode) {
  const auto s = rfft1(sample(64, [](double y) { return std::cos(3 * y); }));
  EXPECT_THROW(extract_phase(s), slt::DegeneratePhase);
  const auto est = estimate_phase(s);
  EXPECT_TRUE(est.degenerate);
  EXPECT_EQ(est.phase.phi, 0.0);
}

TEST(Phase, AlignGivesPureCosine) {
  const auto s = rfft1(sample(64, [](double y) { return std::cos(y - 0.7); }));
  const auto aligned = irfft1(phase_align(s, Phase(0.7)));
  EXPECT_LE(max_abs_diff(aligned, sample(64, [](double y) { return std::cos(y); })), 1e-12);
}

TEST(Phase, RestoreInvertsAlign) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = rfft1(random_profile(64, rng));
    const Phase p(6.0 * uniform_real(rng));
    const auto back = phase_restore(phase_align(s, p), p);
    for (std::size_t k = 0; k < s.modes(); ++k) EXPECT_LE(std::abs(back.coeffs[k] - s.coeffs[k]), 1e-12);
  }
}

TEST(Phase, AlignmentIsShiftInvariant) {
  std::mt19937_64 rng(4);
  const auto x = band_limited(64, rng);
  const auto sx = rfft1(x);
  const auto ref = irfft1(phase_align(sx, extract_phase(sx)));
  for (int i = 0; i < 24; ++i) {
    const double delta = 0.37 * i - 2.0;  // includes fractional grid offsets
    const auto shifted = rfft1(shift_profile(x, delta));
    const auto aligned = irfft1(phase_align(shifted, extract_phase(shifted)));
    EXPECT_LE(max_abs_diff(aligned, ref), 1e-10) << "delta=" << delta;
  }
}

TEST(Phase, AlignIsShiftByMinusPhi) {
  std::mt19937_64 rng(6);
  const auto x = band_limited(32, rng);
  const Phase p(1.234);
  EXPECT_LE(max_abs_diff(irfft1(phase_align(rfft1(x), p)), shift_profile(x, -p.phi)), 1e-12);
}

TEST(Derivative, CosineAndInverse) {
  const auto d = derivative(sample(64, [](double y) { return std::cos(2 * y); }), 1);
  EXPECT_LE(max_abs_diff(d, sample(64, [](double y) { return -2.0 * std::sin(2 * y); })), 1e-12);
  std::mt19937_64 rng(9);
  auto s = rfft1(band_limited(64, rng));
  s.coeffs[0] = 0.0;
  const auto back = spectral_derivative(spectral_derivative(s, 2), -2);
  for (std::size_t k = 0; k < s.modes(); ++k) EXPECT_LE(std::abs(back.coeffs[k] - s.coeffs[k]), 1e-12);
}

TEST(Fft2, ConcurrentUseIsDeterministic) {
  auto g = WavenumberGrid::square(32);
  RealField2D f(g);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  for (auto& v : f.values) v = nd(rng);
  const auto ref = fft2(f);
  std::vector<SpectralField2D> outs(4, SpectralField2D(g));
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (int r = 0; r < 20; ++r) outs[t] = fft2(f);
    });
  for (auto& t : threads) t.join();
  for (const auto& o : outs) EXPECT_EQ(o.coeffs, ref.coeffs);
}
