#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "slt/core/errors.hpp"
#include "slt/core/rng.hpp"
#include "slt/spectral/grid.hpp"

namespace slt::solver {

struct Wavevector {
  int kx;
  int ky;
  friend bool operator==(const Wavevector&, const Wavevector&) = default;
};

/// Forced wavevectors: | |k| - k_f | < δk, excluding the k_x = 0 and
/// k_y = 0 axes. `wavevectors` holds both members of every ±k pair;
/// `representatives` holds the k_x > 0 member of each pair.
struct ForcingAnnulus {
  std::vector<Wavevector> wavevectors;
  std::vector<Wavevector> representatives;
  double k_f = 0.0;
  double delta_k = 0.0;

  std::size_t count() const { return wavevectors.size(); }
};

inline ForcingAnnulus build_annulus(const spectral::WavenumberGrid& grid, double k_f,
                                    double delta_k) {
  ForcingAnnulus a;
  a.k_f = k_f;
  a.delta_k = delta_k;
  const int kmax = int(std::ceil(k_f + delta_k));
  for (int ky = -kmax; ky <= kmax; ++ky) {
    for (int kx = -kmax; kx <= kmax; ++kx) {
      if (kx == 0 || ky == 0) continue;
      const double k = std::hypot(double(kx), double(ky));
      if (std::abs(k - k_f) >= delta_k) continue;
      if (!grid.representable(kx, ky) || !grid.representable(-kx, -ky)) continue;
      a.wavevectors.push_back({kx, ky});
      if (kx > 0) a.representatives.push_back({kx, ky});
    }
  }
  if (a.wavevectors.empty()) throw ConfigError("build_annulus: no wavevectors in forcing annulus");
  return a;
}

/// Forcing amplitude sqrt(2 ε k_f² / (N_f Δt) · (1-γ)/(1+γ)) in physical units.
inline double forcing_amplitude(const ForcingAnnulus& a, double epsilon, double dt,
                                double gamma = 0.0) {
  return std::sqrt(2.0 * epsilon * a.k_f * a.k_f / (double(a.count()) * dt) * (1.0 - gamma) /
                   (1.0 + gamma));
}

/// One white-in-time forcing draw: an independent uniform phase per ±k
/// pair (conjugate at -k), scaled to the grid's unnormalized transform.
/// `shift` translates the realization in y by that distance.
inline void sample_forcing(const ForcingAnnulus& a, double amplitude, Rng& rng,
                           spectral::SpectralField2D& out, double shift = 0.0) {
  std::fill(out.coeffs.begin(), out.coeffs.end(), spectral::cplx(0.0));
  const auto& g = *out.grid;
  const double scale = amplitude * double(g.nx()) * double(g.ny());
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::uniform_real_distribution<double> uni(0.0, two_pi);
  for (const auto& k : a.representatives) {
    double theta = uni(rng);
    if (shift != 0.0) theta -= double(k.ky) * shift;
    out.coeffs[g.index(k.kx, k.ky)] = std::polar(scale, theta);
  }
}

inline spectral::SpectralField2D sample_forcing(const ForcingAnnulus& a, spectral::GridPtr grid,
                                                double epsilon, double dt, Rng& rng) {
  spectral::SpectralField2D out(std::move(grid));
  sample_forcing(a, forcing_amplitude(a, epsilon, dt), rng, out);
  return out;
}

}  // namespace slt::solver
