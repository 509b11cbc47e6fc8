#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "slt/solver/config.hpp"
#include "slt/spectral/grid.hpp"

namespace slt::solver {

using spectral::cplx;

/// ν_n = (-1)^{n+1} ν / k_max^{2n}.
inline double hyperviscosity_coefficient(double nu, int n_hyper, double k_max) {
  const double sign = (n_hyper + 1) % 2 == 0 ? 1.0 : -1.0;
  return sign * nu / std::pow(k_max, 2 * n_hyper);
}

/// Hyperviscous decay rate at |k|² = k2: ν (|k|/k_max)^{2n} >= 0.
inline double hyperviscous_rate(double nu, int n_hyper, double k_max, double k2) {
  return nu * std::pow(k2 / (k_max * k_max), n_hyper);
}

/// L(k) = -μ - ν|k|^{2n}/k_max^{2n} + iβk_x/|k|², L(0) = -μ.
inline std::vector<cplx> linear_operator(const spectral::WavenumberGrid& grid,
                                         const SolverConfig& c) {
  std::vector<cplx> L(grid.spectral_size());
  const double kmax = double(grid.k_max());
  for (std::size_t i = 0; i < L.size(); ++i) {
    const double k2 = grid.k2_at(i);
    if (k2 == 0.0) {
      L[i] = -c.mu;
      continue;
    }
    L[i] = cplx(-c.mu - hyperviscous_rate(c.nu, c.n_hyper, kmax, k2),
                c.beta * double(grid.kx_at(i)) / k2);
  }
  return L;
}

/// Pseudo-spectral advection -(u·∇ζ)^ with u = (-∂yψ, ∂xψ), ψ̂ = -ζ̂/|k|².
/// Owns its transform buffers; one instance per thread.
class AdvectionOperator {
 public:
  explicit AdvectionOperator(spectral::GridPtr grid)
      : grid_(std::move(grid)),
        fft_(grid_->ny(), grid_->nx()),
        u_(grid_->physical_size()),
        v_(grid_->physical_size()),
        zx_(grid_->physical_size()),
        zy_(grid_->physical_size()) {
    const auto& g = *grid_;
    const std::size_t n = g.spectral_size();
    // Multipliers with the inverse-transform 1/N² folded in.
    const double inv = 1.0 / double(g.physical_size());
    kx_.resize(n);
    ky_.resize(n);
    psi_.resize(n);
    mask_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double k2 = g.k2_at(i);
      kx_[i] = g.kx_at(i) * inv;
      ky_[i] = g.ky_at(i) * inv;
      psi_[i] = k2 == 0.0 ? 0.0 : -1.0 / k2;
      mask_[i] = g.dealias_mask(i) ? -1.0 : 0.0;
    }
  }

  /// Writes the dealiased nonlinear term into `out`; returns max |u|.
  double apply(const spectral::SpectralField2D& zeta, spectral::SpectralField2D& out) {
    const std::size_t n = grid_->spectral_size(), np = grid_->physical_size();
    const cplx* z = zeta.coeffs.data();
    cplx* s = fft_.spec_data();
    const double* r = fft_.real_data();
    // i*k*f for f = a + ib is (-k b, k a).
    auto to_phys = [&](auto&& mult, std::vector<double>& dst) {
      for (std::size_t i = 0; i < n; ++i) {
        const double k = mult(i);
        s[i] = cplx(-k * z[i].imag(), k * z[i].real());
      }
      fft_.execute_inverse();
      std::copy(r, r + np, dst.begin());
    };
    to_phys([&](std::size_t i) { return -ky_[i] * psi_[i]; }, u_);
    to_phys([&](std::size_t i) { return kx_[i] * psi_[i]; }, v_);
    to_phys([&](std::size_t i) { return kx_[i]; }, zx_);
    to_phys([&](std::size_t i) { return ky_[i]; }, zy_);
    double umax = 0.0;
    double* prod = fft_.real_data();
    for (std::size_t p = 0; p < np; ++p) {
      umax = std::max({umax, std::abs(u_[p]), std::abs(v_[p])});
      prod[p] = u_[p] * zx_[p] + v_[p] * zy_[p];
    }
    fft_.execute_forward();
    cplx* o = out.coeffs.data();
    for (std::size_t i = 0; i < n; ++i) o[i] = mask_[i] * s[i];
    return umax;
  }

 private:
  spectral::GridPtr grid_;
  spectral::RealFft2D fft_;
  std::vector<double> u_, v_, zx_, zy_;
  std::vector<double> kx_, ky_, psi_, mask_;
};

inline spectral::SpectralField2D nonlinear_term(const spectral::SpectralField2D& zeta) {
  AdvectionOperator op(zeta.grid);
  spectral::SpectralField2D out(zeta.grid);
  op.apply(zeta, out);
  return out;
}

}  // namespace slt::solver
