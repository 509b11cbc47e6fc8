#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <thread>
#include <vector>

#include "slt/core/rng.hpp"
#include "slt/model/slt_model.hpp"

namespace slt::model {

/// Emulated trajectories, row-major (members, horizon, ny), raw units.
struct EnsembleForecast {
  std::size_t members = 0, horizon = 0, ny = 0;
  std::vector<double> U;
  std::vector<long> diverged_step;  // first non-finite step per member, -1 if none

  double at(std::size_t m, std::size_t t, std::size_t j) const { return U[(m * horizon + t) * ny + j]; }
  std::span<const double> row(std::size_t m, std::size_t t) const { return {U.data() + (m * horizon + t) * ny, ny}; }
  std::size_t diverged_count() const {
    return std::size_t(std::count_if(diverged_step.begin(), diverged_step.end(), [](long s) { return s >= 0; }));
  }
};

struct RolloutOptions {
  int threads = 1;
  std::size_t chunk = 16;  // members per batched pass
  bool strict = true;      // throw RolloutDiverged instead of flagging members
};

/// Noise for member `member`: fresh ε ~ N(0, I_D) per step from its own stream.
inline Rng member_rng(std::uint64_t seed, std::size_t member) { return stream_rng(seed, 1000003ULL + member); }

/// Latent autoregression for a batch of rows. hist: (B, S, D) normalized
/// latents; rngs: one stream per row. Returns (B, T, D) values and marks the
/// first non-finite step per row. Rows never interact, so results do not
/// depend on how members are batched.
inline std::vector<double> latent_rollout(const SltModel& model, ad::Tensor hist, std::size_t horizon,
                                          std::vector<Rng>& rngs, std::vector<long>& diverged) {
  const std::size_t B = hist.dim(0), S = model.history(), D = model.latent_dim();
  std::vector<double> out(B * horizon * D);
  diverged.assign(B, -1);
  for (std::size_t t = 0; t < horizon; ++t) {
    std::vector<double> eps(B * D);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t d = 0; d < D; ++d) eps[b * D + d] = standard_normal(rngs[b]);
    const auto z = model.transformer_forward(hist, ad::Tensor::from({B, D}, std::move(eps)));
    for (std::size_t b = 0; b < B; ++b) {
      const double* zr = z.value().data() + b * D;
      if (diverged[b] < 0 && !std::all_of(zr, zr + D, [](double v) { return std::isfinite(v); }))
        diverged[b] = long(t);
      std::copy(zr, zr + D, out.begin() + long((b * horizon + t) * D));
    }
    hist = S > 1 ? ad::concat({ad::slice(hist, 1, 1, S - 1), ad::reshape(z, {B, 1, D})}, 1) : ad::reshape(z, {B, 1, D});
  }
  return out;
}

/// m rollouts of `horizon` unit steps from one raw history (S x ny, oldest
/// first). Member i draws its noise from member_rng(seed, i).
inline EnsembleForecast ensemble_rollout(const SltModel& model, const std::vector<double>& history,
                                         std::size_t horizon, std::size_t members, std::uint64_t seed,
                                         const RolloutOptions& opt = {}) {
  const std::size_t S = model.history(), L = model.ny(), D = model.latent_dim();
  if (history.size() != S * L)
    throw ShapeError("ensemble_rollout: history must hold " + std::to_string(S) + " profiles of length " +
                     std::to_string(L));
  if (horizon < 1 || members < 1) throw ConfigError("ensemble_rollout: horizon and members must be >= 1");
  ad::NoGradGuard no_grad;

  std::vector<double> norm(history.size());
  for (std::size_t i = 0; i < norm.size(); ++i) norm[i] = (history[i] - model.norm_mean) / model.norm_std;
  const auto z_hist = model.encode(ad::Tensor::from({S, L}, norm));

  EnsembleForecast fc;
  fc.members = members;
  fc.horizon = horizon;
  fc.ny = L;
  fc.U.resize(members * horizon * L);
  fc.diverged_step.assign(members, -1);

  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t nchunks = (members + chunk - 1) / chunk;
  auto run_chunk = [&](std::size_t ci) {
    ad::NoGradGuard guard;
    const std::size_t m0 = ci * chunk, B = std::min(chunk, members - m0);
    std::vector<Rng> rngs;
    for (std::size_t b = 0; b < B; ++b) rngs.push_back(member_rng(seed, m0 + b));
    const auto hist = ad::repeat_rows(ad::reshape(z_hist, {1, S, D}), B);
    std::vector<long> div;
    const auto lat = latent_rollout(model, hist, horizon, rngs, div);
    const auto u = model.decode(ad::Tensor::from({B * horizon, D}, lat));
    for (std::size_t i = 0; i < B * horizon * L; ++i)
      fc.U[m0 * horizon * L + i] = u.value()[i] * model.norm_std + model.norm_mean;
    for (std::size_t b = 0; b < B; ++b) fc.diverged_step[m0 + b] = div[b];
  };

  const std::size_t nthreads = std::min<std::size_t>(std::max(1, opt.threads), nchunks);
  if (nthreads <= 1) {
    for (std::size_t ci = 0; ci < nchunks; ++ci) run_chunk(ci);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t ci = t; ci < nchunks; ci += nthreads) run_chunk(ci);
      });
    for (auto& th : pool) th.join();
  }

  if (opt.strict)
    for (std::size_t m = 0; m < members; ++m)
      if (fc.diverged_step[m] >= 0) throw RolloutDiverged(long(m), fc.diverged_step[m]);
  return fc;
}

/// Single trajectory (T, ny): member 0 of an ensemble.
inline EnsembleForecast rollout(const SltModel& model, const std::vector<double>& history, std::size_t horizon,
                                std::uint64_t seed) {
  return ensemble_rollout(model, history, horizon, 1, seed);
}

}  // namespace slt::model
