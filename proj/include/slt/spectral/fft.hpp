#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <utility>

#include "slt/core/errors.hpp"

namespace slt::spectral {

using cplx = std::complex<double>;

/// z^n by repeated multiplication (std::pow on complex goes through log).
inline cplx ipow(cplx z, int n) {
  cplx r(1.0, 0.0);
  for (int i = 0; i < n; ++i) r *= z;
  return r;
}

namespace detail {

// FFTW's planner is not re-entrant; execution of distinct plans is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffers {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;

  FftwBuffers() = default;
  FftwBuffers(const FftwBuffers&) = delete;
  FftwBuffers& operator=(const FftwBuffers&) = delete;
  FftwBuffers(FftwBuffers&& o) noexcept { swap(o); }
  FftwBuffers& operator=(FftwBuffers&& o) noexcept {
    swap(o);
    return *this;
  }
  ~FftwBuffers() {
    std::lock_guard lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
    if (real) fftw_free(real);
    if (spec) fftw_free(spec);
  }
  void swap(FftwBuffers& o) noexcept {
    std::swap(real, o.real);
    std::swap(spec, o.spec);
    std::swap(fwd, o.fwd);
    std::swap(inv, o.inv);
  }
};

}  // namespace detail

/// Real-to-half-complex 2D transform of a row-major (ny, nx) array.
/// forward() is unnormalized; inverse() applies 1/(nx*ny).
/// Plans use FFTW_ESTIMATE and run on owned buffers, so output is
/// bit-identical for identical input on a given build.
class RealFft2D {
 public:
  RealFft2D(std::size_t ny, std::size_t nx) : ny_(ny), nx_(nx), nk_(nx / 2 + 1) {
    if (nx == 0 || ny == 0 || nx % 2 || ny % 2)
      throw ConfigError("RealFft2D: grid sizes must be positive and even");
    std::lock_guard lock(detail::planner_mutex());
    b_.real = fftw_alloc_real(ny * nx);
    b_.spec = fftw_alloc_complex(ny * nk_);
    b_.fwd = fftw_plan_dft_r2c_2d(int(ny), int(nx), b_.real, b_.spec, FFTW_ESTIMATE);
    b_.inv = fftw_plan_dft_c2r_2d(int(ny), int(nx), b_.spec, b_.real, FFTW_ESTIMATE);
  }

  std::size_t ny() const { return ny_; }
  std::size_t nx() const { return nx_; }
  std::size_t spectral_size() const { return ny_ * nk_; }

  void forward(std::span<const double> in, std::span<cplx> out) {
    std::copy(in.begin(), in.end(), b_.real);
    fftw_execute(b_.fwd);
    const auto* s = reinterpret_cast<const cplx*>(b_.spec);
    std::copy(s, s + spectral_size(), out.begin());
  }

  void inverse(std::span<const cplx> in, std::span<double> out) {
    std::copy(in.begin(), in.end(), reinterpret_cast<cplx*>(b_.spec));
    fftw_execute(b_.inv);
    const double scale = 1.0 / double(nx_ * ny_);
    for (std::size_t i = 0; i < nx_ * ny_; ++i) out[i] = b_.real[i] * scale;
  }

  // In-place access for hot loops: fill a buffer, execute, read the other.
  // execute_inverse() is unscaled and overwrites the spectral buffer.
  double* real_data() { return b_.real; }
  cplx* spec_data() { return reinterpret_cast<cplx*>(b_.spec); }
  void execute_forward() { fftw_execute(b_.fwd); }
  void execute_inverse() { fftw_execute(b_.inv); }

 private:
  std::size_t ny_, nx_, nk_;
  detail::FftwBuffers b_;
};

/// 1D real transform of length n to n/2+1 coefficients, both unnormalized.
class RealFft1D {
 public:
  explicit RealFft1D(std::size_t n) : n_(n) {
    if (n == 0 || n % 2) throw ConfigError("RealFft1D: length must be positive and even");
    std::lock_guard lock(detail::planner_mutex());
    b_.real = fftw_alloc_real(n);
    b_.spec = fftw_alloc_complex(n / 2 + 1);
    b_.fwd = fftw_plan_dft_r2c_1d(int(n), b_.real, b_.spec, FFTW_ESTIMATE);
    b_.inv = fftw_plan_dft_c2r_1d(int(n), b_.spec, b_.real, FFTW_ESTIMATE);
  }

  std::size_t size() const { return n_; }

  void forward(std::span<const double> in, std::span<cplx> out) {
    std::copy(in.begin(), in.end(), b_.real);
    fftw_execute(b_.fwd);
    const auto* s = reinterpret_cast<const cplx*>(b_.spec);
    std::copy(s, s + n_ / 2 + 1, out.begin());
  }

  // Sum over the Hermitian extension of `in`; no scaling.
  void inverse(std::span<const cplx> in, std::span<double> out) {
    std::copy(in.begin(), in.end(), reinterpret_cast<cplx*>(b_.spec));
    fftw_execute(b_.inv);
    std::copy(b_.real, b_.real + n_, out.begin());
  }

  double* real_data() { return b_.real; }
  cplx* spec_data() { return reinterpret_cast<cplx*>(b_.spec); }
  void execute_forward() { fftw_execute(b_.fwd); }
  void execute_inverse() { fftw_execute(b_.inv); }

 private:
  std::size_t n_;
  detail::FftwBuffers b_;
};

/// Per-thread plan caches for the free-function transforms.
inline RealFft1D& cached_fft1(std::size_t n) {
  thread_local std::map<std::size_t, RealFft1D> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.try_emplace(n, n).first;
  return it->second;
}

inline RealFft2D& cached_fft2(std::size_t ny, std::size_t nx) {
  thread_local std::map<std::pair<std::size_t, std::size_t>, RealFft2D> cache;
  auto key = std::make_pair(ny, nx);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.try_emplace(key, ny, nx).first;
  return it->second;
}

}  // namespace slt::spectral
