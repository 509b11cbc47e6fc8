#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "slt/core/errors.hpp"
#include "slt/spectral/fft.hpp"

namespace slt::spectral {

/// Modes 0..count-1 of a real periodic profile on [0, 2π).
///
/// Coefficients are amplitude-normalized, c_k = (1/L) Σ_j u_j e^{-i k y_j},
/// so a profile keeps its amplitude when resampled at another length.
/// `length` is the number of samples the spectrum was taken from.
struct SpectralProfile {
  std::size_t length = 0;
  std::vector<cplx> coeffs;

  std::size_t modes() const { return coeffs.size(); }
};

inline SpectralProfile rfft1(std::span<const double> u) {
  const std::size_t n = u.size();
  if (n == 0 || n % 2) throw ConfigError("rfft1: profile length must be even");
  SpectralProfile s{n, std::vector<cplx>(n / 2 + 1)};
  cached_fft1(n).forward(u, s.coeffs);
  const double inv = 1.0 / double(n);
  for (auto& c : s.coeffs) c *= inv;
  return s;
}

/// Samples the profile on `out_length` points (0 = the source length).
/// Modes above out_length/2 are an error; missing modes are zero.
inline std::vector<double> irfft1(const SpectralProfile& s, std::size_t out_length = 0) {
  const std::size_t n = out_length ? out_length : s.length;
  if (n == 0 || n % 2) throw ConfigError("irfft1: output length must be even");
  if (s.modes() > n / 2 + 1)
    throw ConfigError("irfft1: spectrum has more modes than the output grid resolves");
  std::vector<cplx> half(n / 2 + 1, cplx(0.0));
  std::copy(s.coeffs.begin(), s.coeffs.end(), half.begin());
  half[0] = half[0].real();
  half[n / 2] = half[n / 2].real();
  std::vector<double> out(n);
  cached_fft1(n).inverse(half, out);
  return out;
}

/// Keep modes 0..modes-1. Asking for more modes than present is an error.
inline SpectralProfile truncate_modes(const SpectralProfile& s, std::size_t modes) {
  if (modes > s.modes())
    throw ConfigError("truncate_modes: requested " + std::to_string(modes) + " modes, have " +
                      std::to_string(s.modes()));
  SpectralProfile out{s.length, {s.coeffs.begin(), s.coeffs.begin() + long(modes)}};
  return out;
}

/// Truncate or zero-pad to exactly `modes` modes.
inline SpectralProfile resize_modes(const SpectralProfile& s, std::size_t modes) {
  SpectralProfile out{s.length, s.coeffs};
  out.coeffs.resize(modes, cplx(0.0));
  return out;
}

/// A translation in y, radians, kept in [0, 2π).
struct Phase {
  double phi = 0.0;

  static double wrap(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a < 0.0) a += two_pi;
    if (a >= two_pi) a = 0.0;
    return a;
  }
  Phase() = default;
  explicit Phase(double a) : phi(wrap(a)) {}
};

inline constexpr double kDegeneratePhaseTol = 1e-12;

struct PhaseEstimate {
  Phase phase;
  bool degenerate = false;
};

/// Phase of the first mode, measured as the crest position of that mode:
/// a profile cos(y - a) has phase a. Aligning by this phase makes the
/// first mode real and non-negative.
inline PhaseEstimate estimate_phase(const SpectralProfile& s, double tol = kDegeneratePhaseTol) {
  if (s.modes() < 2 || std::abs(s.coeffs[1]) <= tol) return {Phase(0.0), true};
  return {Phase(-std::arg(s.coeffs[1])), false};
}

/// Throws DegeneratePhase when the first mode is below `tol`.
inline Phase extract_phase(const SpectralProfile& s, double tol = kDegeneratePhaseTol) {
  auto est = estimate_phase(s, tol);
  if (est.degenerate) throw DegeneratePhase("extract_phase: first Fourier mode below tolerance");
  return est.phase;
}

/// Multiplies mode k by e^{i·sign·k·φ}.
inline SpectralProfile rotate_modes(const SpectralProfile& s, double phi, double sign) {
  SpectralProfile out = s;
  for (std::size_t k = 0; k < out.coeffs.size(); ++k)
    out.coeffs[k] *= std::polar(1.0, sign * double(k) * phi);
  return out;
}

/// Moves the profile by -φ (u(y) -> u(y + φ)): mode k times e^{+ikφ}
/// under the e^{-iky} forward transform.
inline SpectralProfile phase_align(const SpectralProfile& s, Phase p) {
  return rotate_modes(s, p.phi, +1.0);
}

/// Inverse of phase_align: moves the profile by +φ.
inline SpectralProfile phase_restore(const SpectralProfile& s, Phase p) {
  return rotate_modes(s, p.phi, -1.0);
}

/// Band-limited circular shift u(y) -> u(y - delta). The Nyquist mode is
/// dropped because a fractional shift of it is not a real profile.
inline std::vector<double> shift_profile(std::span<const double> u, double delta) {
  auto s = rfft1(u);
  s.coeffs.back() = 0.0;
  return irfft1(rotate_modes(s, delta, -1.0));
}

/// (ik)^order per mode. order == -2 applies the inverse of d²/dy² with the
/// mean mode mapped to zero. Odd orders zero the Nyquist mode.
inline SpectralProfile spectral_derivative(const SpectralProfile& s, int order) {
  SpectralProfile out = s;
  const cplx i1(0.0, 1.0);
  const std::size_t nyq = s.length / 2;
  for (std::size_t k = 0; k < out.coeffs.size(); ++k) {
    if (k == 0 && order < 0) {
      out.coeffs[k] = 0.0;
      continue;
    }
    if (order % 2 != 0 && k == nyq) {
      out.coeffs[k] = 0.0;
      continue;
    }
    out.coeffs[k] *= order >= 0 ? ipow(i1 * double(k), order) : 1.0 / ipow(i1 * double(k), -order);
  }
  return out;
}

/// Convenience: derivative of a sampled profile, returned on the same grid.
inline std::vector<double> derivative(std::span<const double> u, int order) {
  return irfft1(spectral_derivative(rfft1(u), order));
}

}  // namespace slt::spectral
