#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "slt/autodiff/gradcheck.hpp"
#include "slt/autodiff/ops.hpp"
#include "slt/autodiff/optim.hpp"
#include "slt/spectral/profile.hpp"

using namespace slt::ad;

namespace {

Tensor randn(Shape s, std::uint64_t seed, bool rg = true, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(numel(s));
  for (auto& x : v) x = nd(rng);
  return Tensor::from(std::move(s), std::move(v), rg);
}

// Generic scalar reduction: <op(x), R> with a fixed random R.
Tensor project(const Tensor& y, std::uint64_t seed = 99) {
  return sum(mul(y, randn(y.shape(), seed, false)));
}

void expect_grad_ok(const std::function<Tensor()>& f, std::vector<Tensor> params, double tol) {
  const auto r = grad_check(f, std::move(params));
  EXPECT_GT(r.checked, 0u);
  EXPECT_LE(r.max_rel_error, tol);
}

}  // namespace

TEST(Ops, SoftmaxRowsSumToOne) {
  auto x = randn({5, 7}, 1, false, 10.0);
  auto y = softmax_rows(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += y.value()[r * 7 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Ops, GeluAtZero) {
  EXPECT_EQ(gelu(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_NEAR(gelu(Tensor::scalar(1.0)).item(), 0.8413447460685429, 1e-15);
}

TEST(Ops, ShapeErrorsNameOpAndShapes) {
  auto a = Tensor::zeros({3, 4});
  auto b = Tensor::zeros({3, 5});
  try {
    add(a, b);
    FAIL();
  } catch (const slt::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("(3,4)"), std::string::npos);
    EXPECT_NE(msg.find("(3,5)"), std::string::npos);
  }
  EXPECT_THROW(matmul(a, Tensor::zeros({5, 2})), slt::ShapeError);
}

TEST(Backward, MatmulMatchesCentralDifferences) {
  auto a = randn({3, 4}, 2), w = randn({4, 2}, 3);
  const auto r = grad_check([&] { return project(matmul(a, w)); }, {a, w});
  EXPECT_LE(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.checked, 20u);
}

TEST(Backward, SumGivesOnes) {
  auto p = randn({4, 3}, 4);
  backward(sum(p));
  for (double g : p.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, L1RegressionGradient) {
  auto W = randn({3, 5}, 5), x = randn({5, 1}, 6, false), y = randn({3, 1}, 7, false);
  auto f = [&] {
    auto wx = reshape(matmul(reshape(transpose(W), {5, 3}), Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1})),
                      {5, 3});
    // ||Wx - y||_1 written with matmul on (1,5)x(5,3)
    return sum(abs(sub(reshape(matmul(reshape(x, {1, 5}), wx), {3, 1}), y)));
  };
  expect_grad_ok(f, {W}, 1e-5);
}

TEST(Backward, UnusedParameterHasZeroGradient) {
  auto used = randn({3}, 8), unused = randn({3}, 9);
  unused.grad();
  backward(sum(gelu(used)));
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, AccumulatesAcrossCalls) {
  auto p = randn({4}, 10);
  auto loss = sum(mul(p, p));
  backward(loss);
  const auto once = p.grad();
  backward(loss);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p.grad()[i], 2.0 * once[i]);
}

TEST(Backward, NonScalarThrows) { EXPECT_THROW(backward(randn({2}, 1)), slt::ShapeError); }

TEST(GradCheck, LinearIsExact) {
  auto a = randn({6}, 11);
  const auto r = grad_check([&] { return project(scale(a, 3.0)); }, {a});
  EXPECT_LE(r.max_rel_error, 1e-10);
}

TEST(GradCheck, AbsKinkIsSkipped) {
  auto a = Tensor::from({3}, {0.0, 1.5, -2.0}, true);
  const auto r = grad_check([&] { return sum(abs(a)); }, {a});
  EXPECT_EQ(r.skipped_kinks, 1u);
  EXPECT_EQ(r.checked, 2u);
  EXPECT_LE(r.max_rel_error, 1e-10);
  a.zero_grad();
  backward(sum(abs(a)));
  EXPECT_EQ(a.grad()[0], 0.0);
}

TEST(GradCheck, LinearOps) {
  auto a = randn({2, 3, 4}, 12), b = randn({2, 3, 4}, 13), bias = randn({3, 4}, 14);
  expect_grad_ok([&] { return project(add(a, b)); }, {a, b}, 1e-6);
  expect_grad_ok([&] { return project(sub(a, b)); }, {a, b}, 1e-6);
  expect_grad_ok([&] { return project(add_bias(a, bias)); }, {a, bias}, 1e-6);
  expect_grad_ok([&] { return project(transpose(a)); }, {a}, 1e-6);
  expect_grad_ok([&] { return project(reshape(a, {6, 4})); }, {a}, 1e-6);
  expect_grad_ok([&] { return project(concat({a, b}, 1)); }, {a, b}, 1e-6);
  expect_grad_ok([&] { return project(slice(a, 2, 1, 2)); }, {a}, 1e-6);
  expect_grad_ok([&] { return project(repeat_rows(a, 3)); }, {a}, 1e-6);
  expect_grad_ok([&] { return project(split_heads(a, 2)); }, {a}, 1e-6);
  expect_grad_ok([&] { return project(merge_heads(split_heads(a, 4), 4)); }, {a}, 1e-6);
  expect_grad_ok([&] { return mean(a); }, {a}, 1e-6);
  auto c = randn({2, 4, 5}, 15), d = randn({2, 5, 4}, 16);
  expect_grad_ok([&] { return project(bmm(a, c)); }, {a, c}, 1e-6);
  expect_grad_ok([&] { return project(bmm_nt(a, d)); }, {a, d}, 1e-6);
}

TEST(GradCheck, NonlinearOps) {
  auto a = randn({3, 5}, 17), b = randn({3, 5}, 18);
  expect_grad_ok([&] { return project(mul(a, b)); }, {a, b}, 1e-4);
  expect_grad_ok([&] { return project(gelu(a)); }, {a}, 1e-4);
  expect_grad_ok([&] { return project(softmax_rows(a)); }, {a}, 1e-4);
  expect_grad_ok([&] { return sum(abs(a)); }, {a}, 1e-4);
  expect_grad_ok([&] { return mae(a, b); }, {a, b}, 1e-4);
}

TEST(GradCheck, SpectralOps) {
  auto x = randn({3, 16}, 19);
  expect_grad_ok([&] { return project(rfft_rows(x, 8)); }, {x}, 1e-6);
  expect_grad_ok([&] { return project(rfft_rows(x, 9)); }, {x}, 1e-6);
  auto c = randn({3, 8, 2}, 20);
  expect_grad_ok([&] { return project(irfft_rows(c, 16)); }, {c}, 1e-6);
  expect_grad_ok([&] { return project(irfft_rows(c, 32)); }, {c}, 1e-6);
  expect_grad_ok([&] { return project(first_mode_phase(c)); }, {c}, 1e-4);
  auto phi = randn({3}, 21);
  expect_grad_ok([&] { return project(phase_rotate(c, phi, 1)); }, {c, phi}, 1e-4);
  auto c4 = randn({3, 2, 8, 2}, 22);
  expect_grad_ok([&] { return project(phase_rotate(c4, phi, -1)); }, {c4, phi}, 1e-4);
  auto W = randn({5, 2, 3, 2}, 23);
  expect_grad_ok([&] { return project(complex_mode_mix(c4, W, 5)); }, {c4, W}, 1e-6);
  auto Wp = randn({8, 2, 3, 2}, 24);
  expect_grad_ok([&] { return project(complex_mode_mix(c4, Wp, 12)); }, {c4, Wp}, 1e-6);
  expect_grad_ok([&] { return project(rfft_modulus(x)); }, {x}, 1e-4);
}

TEST(GradCheck, LayerNorm) {
  auto x = randn({3, 8}, 38), g = randn({8}, 39), b = randn({8}, 40);
  expect_grad_ok([&] { return project(layer_norm(x, g, b)); }, {x, g, b}, 1e-6);
}

TEST(Ops, LayerNormRowsHaveZeroMeanUnitVariance) {
  auto x = randn({4, 16}, 41, false, 3.0);
  const auto y = layer_norm(x, Tensor::from({16}, std::vector<double>(16, 1.0)), Tensor::from({16}, std::vector<double>(16, 0.0)), 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 16; ++i) m += y.value()[r * 16 + i];
    for (std::size_t i = 0; i < 16; ++i) v += y.value()[r * 16 + i] * y.value()[r * 16 + i];
    EXPECT_NEAR(m / 16.0, 0.0, 1e-12);
    EXPECT_NEAR(v / 16.0, 1.0, 1e-12);
  }
}

TEST(GradCheck, CrpsEnsemble) {
  auto t = randn({4, 6}, 25), e = randn({4, 3, 6}, 26);
  expect_grad_ok([&] { return crps_ensemble(t, e); }, {t, e}, 1e-4);
  expect_grad_ok([&] { return crps_ensemble(t, e, true); }, {t, e}, 1e-4);
}

TEST(Spectral, RfftRowsMatchesProfileTransform) {
  auto x = randn({1, 32}, 27, false);
  const auto s = slt::spectral::rfft1(x.value());
  const auto c = rfft_rows(x, 17);
  for (std::size_t k = 0; k < 17; ++k) {
    EXPECT_NEAR(c.value()[2 * k], s.coeffs[k].real(), 1e-13);
    EXPECT_NEAR(c.value()[2 * k + 1], s.coeffs[k].imag(), 1e-13);
  }
  const auto back = irfft_rows(c, 32);
  for (std::size_t j = 0; j < 32; ++j) EXPECT_NEAR(back.value()[j], x.value()[j], 1e-12);
}

// Long rows take the FFTW path; it must agree with the direct sums.
TEST(Spectral, LongRowsMatchDirectDft) {
  const std::size_t L = 128;
  auto x = randn({2, L}, 33, false);
  for (std::size_t M : {L / 2, L / 2 + 1}) {
    const auto c = rfft_rows(x, M);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t k = 0; k < M; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t j = 0; j < L; ++j) acc += x.value()[r * L + j] * std::polar(1.0, -2.0 * M_PI * double(k * j) / double(L));
        EXPECT_NEAR(c.value()[(r * M + k) * 2], acc.real() / double(L), 1e-13);
        EXPECT_NEAR(c.value()[(r * M + k) * 2 + 1], acc.imag() / double(L), 1e-13);
      }
  }
  auto c = randn({2, 40, 2}, 34, false);
  const auto y = irfft_rows(c, L);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < L; ++j) {
      double acc = c.value()[r * 80];
      for (std::size_t k = 1; k < 40; ++k)
        acc += 2.0 * std::real(std::complex<double>(c.value()[(r * 40 + k) * 2], c.value()[(r * 40 + k) * 2 + 1]) *
                               std::polar(1.0, 2.0 * M_PI * double(k * j) / double(L)));
      EXPECT_NEAR(y.value()[r * L + j], acc, 1e-12);
    }
}

TEST(GradCheck, LongRowSpectralOps) {
  auto x = randn({2, 128}, 35);
  expect_grad_ok([&] { return project(rfft_rows(x, 64)); }, {x}, 1e-6);
  expect_grad_ok([&] { return project(rfft_rows(x, 65)); }, {x}, 1e-6);
  auto c = randn({2, 65, 2}, 36);
  expect_grad_ok([&] { return project(irfft_rows(c, 128)); }, {c}, 1e-6);
  auto c2 = randn({2, 30, 2}, 37);
  expect_grad_ok([&] { return project(irfft_rows(c2, 256)); }, {c2}, 1e-6);
}

TEST(Spectral, PhaseOpsMatchProfileConvention) {
  const double phi0 = 0.7;
  std::vector<double> u(32);
  for (std::size_t j = 0; j < 32; ++j) u[j] = std::cos(2.0 * M_PI * j / 32.0 - phi0) + 0.3 * std::sin(3.0 * 2.0 * M_PI * j / 32.0);
  auto c = rfft_rows(Tensor::from({1, 32}, u), 16);
  auto phi = first_mode_phase(c);
  EXPECT_NEAR(phi.item(), phi0, 1e-12);
  const auto ref = slt::spectral::phase_align(slt::spectral::rfft1(u), slt::spectral::extract_phase(slt::spectral::rfft1(u)));
  const auto al = phase_rotate(c, phi, +1);
  for (std::size_t k = 0; k < 16; ++k) {
    EXPECT_NEAR(al.value()[2 * k], ref.coeffs[k].real(), 1e-12);
    EXPECT_NEAR(al.value()[2 * k + 1], ref.coeffs[k].imag(), 1e-12);
  }
  const auto back = phase_rotate(al, phi, -1);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(back.value()[i], c.value()[i], 1e-12);
}

TEST(Spectral, DegeneratePhaseIsZeroWithoutGradient) {
  auto c = Tensor::from({1, 3, 2}, {1.0, 0.0, 0.0, 0.0, 0.5, 0.5}, true);
  auto phi = first_mode_phase(c);
  EXPECT_EQ(phi.item(), 0.0);
  backward(sum(phi));
  for (double g : c.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Spectral, ModeMixIsLinear) {
  auto x = randn({2, 3, 6, 2}, 28, false), y = randn({2, 3, 6, 2}, 29, false);
  auto W = randn({6, 3, 2, 2}, 30, false);
  const double a = 0.37, b = -1.9;
  const auto lhs = complex_mode_mix(add(scale(x, a), scale(y, b)), W, 6);
  const auto rx = complex_mode_mix(x, W, 6), ry = complex_mode_mix(y, W, 6);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs.value()[i], a * rx.value()[i] + b * ry.value()[i], 1e-12);
}

TEST(Spectral, ModulusMatchesDirectDft) {
  auto x = randn({2, 20}, 31, false);
  const auto m = rfft_modulus(x);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t k = 0; k <= 10; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t j = 0; j < 20; ++j) acc += x.value()[r * 20 + j] * std::polar(1.0, -2.0 * M_PI * double(k * j) / 20.0);
      EXPECT_NEAR(m.value()[r * 11 + k], std::abs(acc) / 20.0, 1e-12);
    }
}

TEST(Adam, QuadraticBowlDecreases) {
  auto p = randn({10}, 32);
  Adam opt({{"all", {p}, 0.05}});
  double prev = sum(mul(p, p)).item();
  for (int i = 0; i < 100; ++i) {
    opt.zero_grad();
    auto loss = sum(mul(p, p));
    backward(loss);
    opt.step();
    const double now = sum(mul(p, p)).item();
    EXPECT_LT(now, prev) << "step " << i;
    prev = now;
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto p = randn({5}, 33);
  const auto before = p.value();
  Adam opt({{"all", {p}, 0.1}});
  opt.zero_grad();
  p.grad();
  opt.step();
  EXPECT_EQ(p.value(), before);
}

TEST(Adam, PerGroupLearningRateDecay) {
  auto a = randn({2}, 34), b = randn({2}, 35);
  Adam opt({{"transformer", {a}, 5e-4}, {"autoencoder", {b}, 2.5e-3}});
  for (int e = 0; e < 7; ++e) opt.end_epoch();
  EXPECT_NEAR(opt.lr(0), 5e-4 * std::pow(0.9825, 7), 1e-18);
  EXPECT_NEAR(opt.lr(1), 2.5e-3 * std::pow(0.9825, 7), 1e-18);
}
