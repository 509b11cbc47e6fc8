#pragma once

#include "slt/autodiff/ops.hpp"

namespace slt::model {

using ad::Tensor;

/// One translation-equivariant pointwise convolution (TEPC) layer.
/// x: (B, Cin, L) real. Modes 0..L/2-1 are kept (the Nyquist mode carries no
/// phase and is dropped). The phase φ of channel 0's first mode aligns every
/// channel, W mixes channels per mode, and φ is restored at the output
/// wavenumbers. W: (min(L/2, modes_out), Cin, Cout, 2); output (B, Cout, out_len).
inline Tensor tepc_forward(const Tensor& x, const Tensor& W, std::size_t modes_out, std::size_t out_len) {
  const std::size_t B = x.dim(0), L = x.dim(2);
  const auto c = ad::rfft_rows(x, L / 2);
  const auto phi = ad::first_mode_phase(ad::reshape(ad::slice(c, 1, 0, 1), {B, L / 2, 2}));
  const auto mixed = ad::complex_mode_mix(ad::phase_rotate(c, phi, +1), W, modes_out);
  return ad::irfft_rows(ad::phase_rotate(mixed, phi, -1), out_len);
}

/// Γ₂ ∘ σ ∘ Γ₁ as used by the encoder and decoder. The nonlinearity acts in
/// the frame aligned by the input phase, so fractional shifts commute with
/// the whole stage exactly; the input phase is restored once at the end.
/// x: (N, L) -> (N, out_len).
inline Tensor tepc_stage(const Tensor& x, const Tensor& W1, const Tensor& W2, std::size_t hidden_modes,
                         std::size_t hidden_len, std::size_t out_modes, std::size_t out_len) {
  const std::size_t N = x.dim(0), L = x.dim(1);
  const auto c = ad::rfft_rows(ad::reshape(x, {N, 1, L}), L / 2);
  const auto phi = ad::first_mode_phase(ad::reshape(c, {N, L / 2, 2}));
  const auto h = ad::irfft_rows(ad::complex_mode_mix(ad::phase_rotate(c, phi, +1), W1, hidden_modes), hidden_len);
  const auto g = ad::gelu(h);
  // Second layer: its own alignment by channel 0, which is shift-invariant here.
  const auto c2 = ad::rfft_rows(g, hidden_len / 2);
  const auto phi2 = ad::first_mode_phase(ad::reshape(ad::slice(c2, 1, 0, 1), {N, hidden_len / 2, 2}));
  auto y = ad::complex_mode_mix(ad::phase_rotate(c2, phi2, +1), W2, out_modes);
  y = ad::phase_rotate(ad::phase_rotate(y, phi2, -1), phi, -1);
  return ad::reshape(ad::irfft_rows(y, out_len), {N, out_len});
}

}  // namespace slt::model
