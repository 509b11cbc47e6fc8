#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numbers>
#include <span>
#include <vector>

#include "slt/core/errors.hpp"
#include "slt/core/json_util.hpp"
#include "slt/core/rng.hpp"
#include "slt/solver/config.hpp"
#include "slt/solver/forcing.hpp"
#include "slt/solver/operators.hpp"
#include "slt/spectral/grid.hpp"
#include "slt/spectral/profile.hpp"

namespace slt::solver {

using spectral::GridPtr;
using spectral::SpectralField2D;

/// Vorticity spectrum plus clock and forcing stream.
struct SolverState {
  SpectralField2D zeta_hat;
  std::int64_t step_index = 0;
  double dt = 0.0;
  Rng rng;

  double t() const { return double(step_index) * dt; }
};

/// Zonal-mean zonal velocity sampled every record_interval after spin-up.
struct ZonalRecord {
  std::size_t ny = 0;
  double record_interval = 1.0;
  std::vector<double> times;
  std::vector<double> U;  // row-major (T, ny)
  json config;            // solver config snapshot

  std::size_t rows() const { return times.size(); }
  std::span<const double> row(std::size_t t) const { return {U.data() + t * ny, ny}; }
};

/// Thrown by run_and_record; carries the rows recorded before the blowup.
class RecordingAborted : public SolverBlowup {
 public:
  RecordingAborted(const SolverBlowup& cause, ZonalRecord partial)
      : SolverBlowup(cause), partial_(std::move(partial)) {}
  const ZonalRecord& partial() const { return partial_; }

 private:
  ZonalRecord partial_;
};

/// E = ½ Σ_{k≠0} |ζ̂|² / (|k|² N⁴) over the full spectrum.
inline double energy(const SpectralField2D& z) {
  const auto& g = *z.grid;
  const double n4 = std::pow(double(g.nx()) * double(g.ny()), 2);
  double e = 0.0;
  for (std::size_t i = 0; i < z.coeffs.size(); ++i) {
    const double k2 = g.k2_at(i);
    if (k2 == 0.0) continue;
    const int kx = g.kx_at(i);
    const double w = (kx == 0 || kx == int(g.nx() / 2)) ? 1.0 : 2.0;
    e += w * std::norm(z.coeffs[i]) / k2;
  }
  return 0.5 * e / n4;
}

/// Z = ½ Σ |ζ̂|² / N⁴.
inline double enstrophy(const SpectralField2D& z) {
  const auto& g = *z.grid;
  const double n4 = std::pow(double(g.nx()) * double(g.ny()), 2);
  double s = 0.0;
  for (std::size_t i = 0; i < z.coeffs.size(); ++i) {
    const int kx = g.kx_at(i);
    const double w = (kx == 0 || kx == int(g.nx() / 2)) ? 1.0 : 2.0;
    s += w * std::norm(z.coeffs[i]);
  }
  return 0.5 * s / n4;
}

inline double energy(const SolverState& s) { return energy(s.zeta_hat); }
inline double enstrophy(const SolverState& s) { return enstrophy(s.zeta_hat); }

/// U(y) = x-mean of u = -∂yψ, from the k_x = 0 column of ζ̂.
inline std::vector<double> zonal_velocity_profile(const SpectralField2D& z) {
  const auto& g = *z.grid;
  const std::size_t half = g.ny() / 2 + 1;
  std::vector<cplx> col(half);
  const double scale = 1.0 / (double(g.nx()) * double(g.ny()));
  for (std::size_t j = 0; j < half; ++j) {
    const int ky = int(j);
    // û = -i k_y ψ̂ = i ζ̂ / k_y
    col[j] = ky == 0 || ky == int(g.ny() / 2) ? cplx(0.0)
                                                : cplx(0.0, 1.0) * z.coeffs[j * g.nkx()] / double(ky) * scale;
  }
  std::vector<double> U(g.ny());
  spectral::cached_fft1(g.ny()).inverse(col, U);
  return U;
}

inline std::vector<double> zonal_velocity_profile(const SolverState& s) {
  return zonal_velocity_profile(s.zeta_hat);
}

/// Pseudo-spectral integrator for
///   ∂tζ + u·∇ζ + β∂xψ = ξ - μζ + ν_n∇^{2n}ζ
/// with Crank-Nicolson on the linear operator and the advection term taken
/// at the half step from an explicit predictor:
///   ζ^{n+1} = [(1 + Δt L/2) ζ^n + Δt (N^{n+1/2} + ξ^n)] / (1 - Δt L/2).
/// A single instance is single-threaded and deterministic.
class BetaPlaneSolver {
 public:
  explicit BetaPlaneSolver(const SolverConfig& config)
      : config_(config),
        grid_((config.validate(), spectral::WavenumberGrid::square(std::size_t(config.N)))),
        annulus_(build_annulus(*grid_, config.k_f, config.delta_k)),
        L_(linear_operator(*grid_, config)),
        advect_(grid_),
        n0_(grid_),
        nh_(grid_),
        pred_(grid_),
        xi_(grid_) {
    const std::size_t n = grid_->spectral_size();
    explicit_.resize(n);
    implicit_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const cplx denom = 1.0 - 0.5 * config.dt * L_[i];
      explicit_[i] = (1.0 + 0.5 * config.dt * L_[i]) / denom;
      implicit_[i] = config.dt / denom;
    }
    amplitude_ = forcing_amplitude(annulus_, config.epsilon, config.dt, config.gamma);
  }

  const SolverConfig& config() const { return config_; }
  const GridPtr& grid() const { return grid_; }
  const ForcingAnnulus& annulus() const { return annulus_; }
  const std::vector<cplx>& linear() const { return L_; }

  /// Flow at rest with the forcing stream seeded from config.seed.
  SolverState initial_state() const {
    return SolverState{SpectralField2D(grid_), 0, config_.dt, stream_rng(config_.seed, 0)};
  }

  /// Advance one Δt in place.
  void step(SolverState& s) {
    const std::size_t n = grid_->spectral_size();
    auto& z = s.zeta_hat.coeffs;
    const double dt = config_.dt;

    const double umax = advect_.apply(s.zeta_hat, n0_);
    check_cfl(umax, s);
    for (std::size_t i = 0; i < n; ++i)
      pred_.coeffs[i] = z[i] + 0.5 * dt * (L_[i] * z[i] + n0_.coeffs[i]);
    advect_.apply(pred_, nh_);

    if (config_.epsilon > 0.0)
      sample_forcing(annulus_, amplitude_, s.rng, xi_, config_.forcing_shift);

    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      const cplx f = config_.epsilon > 0.0 ? xi_.coeffs[i] : cplx(0.0);
      z[i] = grid_->dealias_mask(i) ? explicit_[i] * z[i] + implicit_[i] * (nh_.coeffs[i] + f)
                                    : cplx(0.0);
      finite = finite && std::isfinite(z[i].real()) && std::isfinite(z[i].imag());
    }
    z[0] = 0.0;
    ++s.step_index;
    if (!finite) throw SolverBlowup(s.t(), "non-finite vorticity");
  }

  void advance(SolverState& s, std::int64_t steps) {
    for (std::int64_t i = 0; i < steps; ++i) step(s);
  }

  bool cfl_warned() const { return cfl_warned_; }

 private:
  void check_cfl(double umax, const SolverState& s) {
    if (cfl_warned_) return;
    const double c = umax * config_.dt * double(config_.N) / (2.0 * std::numbers::pi);
    if (c > 0.5) {
      cfl_warned_ = true;
      std::clog << "warning: CFL number " << c << " exceeds 0.5 at t=" << s.t() << "\n";
    }
  }

  SolverConfig config_;
  GridPtr grid_;
  ForcingAnnulus annulus_;
  std::vector<cplx> L_, explicit_, implicit_;
  AdvectionOperator advect_;
  SpectralField2D n0_, nh_, pred_, xi_;
  double amplitude_ = 0.0;
  bool cfl_warned_ = false;
};

/// Terms of the zonal-mean momentum budget
///   ∂tU = -μU + ν_n ∂y^{2n} U + mean(ζ'v')
/// evaluated at `prev`, against the finite difference to `next`.
struct ZonalBudget {
  std::vector<double> dUdt, drag, hyperviscous, reynolds;
  double residual = 0.0;  // max_y |dUdt - (drag + hyperviscous + reynolds)|
};

inline ZonalBudget zonal_budget(const SolverState& prev, const SolverState& next,
                                const SolverConfig& c) {
  const auto& z = prev.zeta_hat;
  const auto& g = *z.grid;
  const std::size_t ny = g.ny(), nx = g.nx();
  const double dt = next.t() - prev.t();
  if (!(dt > 0.0)) throw ConfigError("zonal_budget: states must be in time order");

  ZonalBudget b;
  const auto U0 = zonal_velocity_profile(z);
  const auto U1 = zonal_velocity_profile(next.zeta_hat);
  b.dUdt.resize(ny);
  for (std::size_t j = 0; j < ny; ++j) b.dUdt[j] = (U1[j] - U0[j]) / dt;

  b.drag.resize(ny);
  for (std::size_t j = 0; j < ny; ++j) b.drag[j] = -c.mu * U0[j];

  auto su = spectral::rfft1(U0);
  for (std::size_t k = 0; k < su.modes(); ++k)
    su.coeffs[k] *= -hyperviscous_rate(c.nu, c.n_hyper, double(g.k_max()), double(k * k));
  b.hyperviscous = spectral::irfft1(su);

  // Eddy vorticity ζ' and meridional velocity v' = ∂xψ'.
  SpectralField2D ze(z.grid), ve(z.grid);
  const cplx i1(0.0, 1.0);
  for (std::size_t i = 0; i < z.coeffs.size(); ++i) {
    if (g.kx_at(i) == 0) continue;
    ze.coeffs[i] = z.coeffs[i];
    ve.coeffs[i] = i1 * double(g.kx_at(i)) * (-z.coeffs[i] / g.k2_at(i));
  }
  const auto zp = spectral::ifft2(ze);
  const auto vp = spectral::ifft2(ve);
  std::vector<double> flux(ny, 0.0);
  for (std::size_t j = 0; j < ny; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < nx; ++i) acc += zp.values[j * nx + i] * vp.values[j * nx + i];
    flux[j] = acc / double(nx);
  }
  // Same 2/3 truncation in k_y as the dealiased advection term.
  auto sf = spectral::rfft1(flux);
  for (std::size_t k = 0; k < sf.modes(); ++k)
    if (int(k) > int(ny / 3)) sf.coeffs[k] = 0.0;
  sf.coeffs[0] = 0.0;
  b.reynolds = spectral::irfft1(sf);

  for (std::size_t j = 0; j < ny; ++j) {
    const double r = b.dUdt[j] - (b.drag[j] + b.hyperviscous[j] + b.reynolds[j]);
    b.residual = std::max(b.residual, std::abs(r));
  }
  return b;
}

inline double zonal_budget_residual(const SolverState& prev, const SolverState& next,
                                    const SolverConfig& c) {
  return zonal_budget(prev, next, c).residual;
}

/// Integrates from rest, discards t < spinup_mu_t/μ, then records U every
/// record_interval until t_max. `initial` overrides the rest state; the last
/// state is copied to `final_state` when given.
inline ZonalRecord run_and_record(const SolverConfig& config,
                                  const std::function<void(std::size_t, std::size_t)>& progress = {},
                                  const SolverState* initial = nullptr, SolverState* final_state = nullptr) {
  BetaPlaneSolver solver(config);
  SolverState state = initial ? *initial : solver.initial_state();
  const auto steps_per_record = std::int64_t(std::llround(config.record_interval / config.dt));
  const auto spin_steps = std::int64_t(std::llround(config.spinup_time() / config.dt));
  const double t_spin = double(spin_steps) * config.dt;
  const auto n_records =
      config.t_max < t_spin
          ? std::size_t(0)
          : std::size_t(std::floor((config.t_max - t_spin) / config.record_interval + 1e-9)) + 1;

  ZonalRecord rec;
  rec.ny = std::size_t(config.N);
  rec.record_interval = config.record_interval;
  rec.config = config;
  rec.times.reserve(n_records);
  rec.U.reserve(n_records * rec.ny);

  try {
    solver.advance(state, std::max<std::int64_t>(0, spin_steps - state.step_index));
    for (std::size_t r = 0; r < n_records; ++r) {
      if (r > 0) solver.advance(state, steps_per_record);
      const auto U = zonal_velocity_profile(state);
      rec.times.push_back(t_spin + double(r) * config.record_interval);
      rec.U.insert(rec.U.end(), U.begin(), U.end());
      if (progress) progress(r + 1, n_records);
    }
  } catch (const SolverBlowup& e) {
    throw RecordingAborted(e, std::move(rec));
  }
  if (final_state) *final_state = state;
  return rec;
}

}  // namespace slt::solver
