#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "slt/core/errors.hpp"
#include "slt/spectral/fft.hpp"

namespace slt::spectral {

/// Integer wavenumbers of a doubly periodic [0, 2π)² grid in half-spectrum
/// layout: rows are k_y in FFT order, columns are k_x = 0..nx/2.
class WavenumberGrid {
 public:
  WavenumberGrid(std::size_t nx, std::size_t ny) : nx_(nx), ny_(ny), nkx_(nx / 2 + 1) {
    if (nx < 2 || ny < 2 || nx % 2 || ny % 2)
      throw ConfigError("WavenumberGrid: grid sizes must be even and >= 2");
    kx_.resize(nkx_);
    for (std::size_t i = 0; i < nkx_; ++i) kx_[i] = int(i);
    ky_.resize(ny);
    for (std::size_t j = 0; j < ny; ++j) ky_[j] = signed_wavenumber(j, ny);
    cut_x_ = int(nx / 3);
    cut_y_ = int(ny / 3);
    k_max_ = std::min(cut_x_, cut_y_);
    mask_.resize(ny * nkx_);
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nkx_; ++i) mask_[j * nkx_ + i] = retained(kx_[i], ky_[j]);
  }

  static std::shared_ptr<const WavenumberGrid> square(std::size_t n) {
    return std::make_shared<const WavenumberGrid>(n, n);
  }

  /// FFT index -> wavenumber in {-n/2+1, ..., n/2}.
  static int signed_wavenumber(std::size_t index, std::size_t n) {
    return index <= n / 2 ? int(index) : int(index) - int(n);
  }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t nkx() const { return nkx_; }
  std::size_t spectral_size() const { return ny_ * nkx_; }
  std::size_t physical_size() const { return nx_ * ny_; }
  int k_max() const { return k_max_; }

  const std::vector<int>& kx() const { return kx_; }
  const std::vector<int>& ky() const { return ky_; }
  int kx_at(std::size_t idx) const { return kx_[idx % nkx_]; }
  int ky_at(std::size_t idx) const { return ky_[idx / nkx_]; }
  double k2_at(std::size_t idx) const {
    const double a = kx_at(idx), b = ky_at(idx);
    return a * a + b * b;
  }

  /// 2/3 rule: |k_x| <= floor(nx/3) and |k_y| <= floor(ny/3).
  bool retained(int kx, int ky) const { return std::abs(kx) <= cut_x_ && std::abs(ky) <= cut_y_; }
  bool dealias_mask(std::size_t idx) const { return mask_[idx] != 0; }

  /// Half-spectrum index of (kx, ky) with kx >= 0.
  std::size_t index(int kx, int ky) const {
    const std::size_t row = ky >= 0 ? std::size_t(ky) : std::size_t(int(ny_) + ky);
    return row * nkx_ + std::size_t(kx);
  }

  /// Whether (kx, ky) is representable (each component in {-n/2+1..n/2}).
  bool representable(int kx, int ky) const {
    auto ok = [](int k, std::size_t n) { return k > -int(n / 2) && k <= int(n / 2); };
    return ok(kx, nx_) && ok(ky, ny_);
  }

 private:
  std::size_t nx_, ny_, nkx_;
  std::vector<int> kx_, ky_;
  std::vector<std::uint8_t> mask_;
  int cut_x_, cut_y_, k_max_;
};

using GridPtr = std::shared_ptr<const WavenumberGrid>;

/// Physical-space field, row-major (ny, nx); x_i = 2πi/nx, y_j = 2πj/ny.
struct RealField2D {
  GridPtr grid;
  std::vector<double> values;

  explicit RealField2D(GridPtr g) : grid(std::move(g)), values(grid->physical_size(), 0.0) {}
  double& at(std::size_t iy, std::size_t ix) { return values[iy * grid->nx() + ix]; }
  double at(std::size_t iy, std::size_t ix) const { return values[iy * grid->nx() + ix]; }
};

/// Half-spectrum Fourier coefficients, forward transform unnormalized
/// (coefficient of e^{ik·x} is N² times the physical amplitude).
struct SpectralField2D {
  GridPtr grid;
  std::vector<cplx> coeffs;

  explicit SpectralField2D(GridPtr g) : grid(std::move(g)), coeffs(grid->spectral_size()) {}

  /// Coefficient for any representable wavevector, using conjugate symmetry.
  cplx coeff(int kx, int ky) const {
    if (kx >= 0) return coeffs[grid->index(kx, ky)];
    return std::conj(coeffs[grid->index(-kx, -ky)]);
  }
  void set(int kx, int ky, cplx v) {
    if (kx < 0) {
      kx = -kx;
      ky = -ky;
      v = std::conj(v);
    }
    coeffs[grid->index(kx, ky)] = v;
    // The kx = 0 and Nyquist columns hold both members of a conjugate pair.
    if ((kx == 0 || kx == int(grid->nx() / 2)) && grid->representable(kx, -ky))
      coeffs[grid->index(kx, -ky)] = ky == 0 ? cplx(v.real(), 0.0) : std::conj(v);
    if (ky == 0 && (kx == 0 || kx == int(grid->nx() / 2))) coeffs[grid->index(kx, 0)] = cplx(v.real(), 0.0);
  }
};

inline SpectralField2D fft2(const RealField2D& f) {
  SpectralField2D out(f.grid);
  cached_fft2(f.grid->ny(), f.grid->nx()).forward(f.values, out.coeffs);
  return out;
}

inline RealField2D ifft2(const SpectralField2D& s) {
  RealField2D out(s.grid);
  cached_fft2(s.grid->ny(), s.grid->nx()).inverse(s.coeffs, out.values);
  return out;
}

/// Largest violation of coeff(-k) = conj(coeff(k)) on the self-conjugate
/// columns (k_x = 0 and k_x = nx/2) of the half spectrum.
inline double hermitian_defect(const SpectralField2D& s) {
  const auto& g = *s.grid;
  double worst = 0.0;
  for (std::size_t col : {std::size_t(0), g.nkx() - 1}) {
    for (std::size_t j = 0; j < g.ny(); ++j) {
      const std::size_t jm = (g.ny() - j) % g.ny();
      const cplx a = s.coeffs[j * g.nkx() + col];
      const cplx b = s.coeffs[jm * g.nkx() + col];
      worst = std::max(worst, std::abs(a - std::conj(b)));
    }
  }
  return worst;
}

/// Zero every mode outside the 2/3-rule mask.
inline void dealias(SpectralField2D& s) {
  for (std::size_t i = 0; i < s.coeffs.size(); ++i)
    if (!s.grid->dealias_mask(i)) s.coeffs[i] = 0.0;
}

enum class Axis { x, y };

/// Multiply each mode by (i k_axis)^order, order >= 0. Odd orders zero the
/// Nyquist row/column so the result stays the transform of a real field.
inline SpectralField2D spectral_derivative(const SpectralField2D& s, int order, Axis axis) {
  if (order < 0) throw ConfigError("spectral_derivative: order must be non-negative");
  SpectralField2D out = s;
  const auto& g = *s.grid;
  const cplx i1(0.0, 1.0);
  for (std::size_t idx = 0; idx < out.coeffs.size(); ++idx) {
    const int k = axis == Axis::x ? g.kx_at(idx) : g.ky_at(idx);
    const int nyq = int((axis == Axis::x ? g.nx() : g.ny()) / 2);
    if (order % 2 != 0 && std::abs(k) == nyq) {
      out.coeffs[idx] = 0.0;
      continue;
    }
    out.coeffs[idx] *= ipow(i1 * double(k), order);
  }
  return out;
}

/// (∇²)^power; negative powers invert, mapping k = 0 to zero.
inline SpectralField2D laplacian_power(const SpectralField2D& s, int power) {
  SpectralField2D out = s;
  for (std::size_t idx = 0; idx < out.coeffs.size(); ++idx) {
    const double k2 = s.grid->k2_at(idx);
    if (k2 == 0.0) {
      if (power != 0) out.coeffs[idx] = 0.0;
      continue;
    }
    out.coeffs[idx] *= std::pow(-k2, power);
  }
  return out;
}

}  // namespace slt::spectral
