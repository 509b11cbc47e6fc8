#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "slt/autodiff/ops.hpp"
#include "slt/core/errors.hpp"
#include "slt/core/rng.hpp"
#include "slt/data/dataset.hpp"
#include "slt/model/slt_model.hpp"
#include "slt/spectral/profile.hpp"

namespace slt::training {

using ad::Tensor;

/// The two parts of the ensemble CRPS, averaged over components.
struct CrpsParts {
  double mae = 0.0;        // (1/m) Σ_i |e_i - t|
  double variation = 0.0;  // c Σ_i Σ_j |e_i - e_j|
  double crps() const { return mae - variation; }
};

/// truth: F values; ensemble: m rows of F values, row-major.
inline CrpsParts crps_parts(std::span<const double> truth, std::span<const double> ensemble, bool fair = false) {
  const std::size_t F = truth.size();
  if (F == 0 || ensemble.empty() || ensemble.size() % F)
    throw ConfigError("crps_ensemble: ensemble must hold m >= 1 members of the truth's length");
  const std::size_t m = ensemble.size() / F;
  if (fair && m < 2) throw ConfigError("crps_ensemble: fair estimator needs m >= 2");
  const double c = fair ? 1.0 / (2.0 * double(m) * double(m - 1)) : 1.0 / (2.0 * double(m) * double(m));
  CrpsParts p;
  for (std::size_t f = 0; f < F; ++f) {
    double skill = 0.0, spread = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double ei = ensemble[i * F + f];
      skill += std::abs(ei - truth[f]);
      for (std::size_t j = 0; j < m; ++j) spread += std::abs(ei - ensemble[j * F + f]);
    }
    p.mae += skill / double(m);
    p.variation += c * spread;
  }
  p.mae /= double(F);
  p.variation /= double(F);
  return p;
}

inline double crps_ensemble(std::span<const double> truth, std::span<const double> ensemble, bool fair = false) {
  return crps_parts(truth, ensemble, fair).crps();
}

/// ∫ (F_m(x) - 1{x >= truth})² dx for the empirical CDF F_m of the members.
/// The integrand is piecewise constant between the sorted members and the
/// truth, so summing interval length times the squared gap is exact.
inline double crps_integral_oracle(double truth, std::vector<double> ensemble) {
  if (ensemble.empty()) throw ConfigError("crps_integral_oracle: empty ensemble");
  const double m = double(ensemble.size());
  std::vector<double> knots = ensemble;
  knots.push_back(truth);
  std::sort(knots.begin(), knots.end());
  std::sort(ensemble.begin(), ensemble.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double a = knots[k], b = knots[k + 1];
    if (b == a) continue;
    const double x = 0.5 * (a + b);
    const double F = double(std::upper_bound(ensemble.begin(), ensemble.end(), x) - ensemble.begin()) / m;
    const double H = x >= truth ? 1.0 : 0.0;
    total += (F - H) * (F - H) * (b - a);
  }
  return total;
}

/// Mean over the L/2+1 modes of ||F[u]_k| - |F[û]_k|| with F the
/// amplitude-normalized real DFT.
inline double spectral_mae(std::span<const double> u, std::span<const double> u_hat) {
  if (u.size() != u_hat.size()) throw ConfigError("spectral_mae: profiles differ in length");
  const auto a = spectral::rfft1(u), b = spectral::rfft1(u_hat);
  double s = 0.0;
  for (std::size_t k = 0; k < a.coeffs.size(); ++k) s += std::abs(std::abs(a.coeffs[k]) - std::abs(b.coeffs[k]));
  return s / double(a.coeffs.size());
}

/// Loss terms in normalized units; total is their unweighted sum.
struct LossBreakdown {
  double crps_physical = 0.0;
  double crps_latent = 0.0;
  double mae_identity = 0.0;
  double spectral_mae = 0.0;
  double total = 0.0;

  bool finite() const {
    return std::isfinite(crps_physical) && std::isfinite(crps_latent) && std::isfinite(mae_identity) &&
           std::isfinite(spectral_mae) && std::isfinite(total);
  }
  LossBreakdown& operator+=(const LossBreakdown& o) {
    crps_physical += o.crps_physical;
    crps_latent += o.crps_latent;
    mae_identity += o.mae_identity;
    spectral_mae += o.spectral_mae;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double s) const {
    return {crps_physical * s, crps_latent * s, mae_identity * s, spectral_mae * s, total * s};
  }
};

struct LossTerms {
  Tensor crps_physical, crps_latent, mae_identity, spectral_mae, total;

  LossBreakdown values() const {
    return {crps_physical.item(), crps_latent.item(), mae_identity.item(), spectral_mae.item(), total.item()};
  }
};

struct LossOptions {
  std::size_t members = 4;  // m
  bool fair = false;
};

/// Full objective for a normalized batch with explicit noise (B*m*D values,
/// member-major within each sample). The history and target are encoded in
/// one pass so the latent target shares the encoder graph.
inline LossTerms total_loss(const model::SltModel& model, const data::WindowBatch& batch,
                            const std::vector<double>& noise, const LossOptions& opt) {
  const std::size_t B = batch.batch, S = batch.history, L = batch.ny, D = model.latent_dim(), m = opt.members;
  if (S != model.history() || L != model.ny())
    throw ShapeError("total_loss: batch windows (S=" + std::to_string(S) + ", ny=" + std::to_string(L) +
                     ") do not match the model");
  if (m < 1) throw ConfigError("total_loss: need at least one ensemble member");
  if (noise.size() != B * m * D) throw ShapeError("total_loss: noise must hold B*m*D values");

  std::vector<double> rows;
  rows.reserve(B * (S + 1) * L);
  for (std::size_t b = 0; b < B; ++b) {
    rows.insert(rows.end(), batch.hist.begin() + long(b * S * L), batch.hist.begin() + long((b + 1) * S * L));
    rows.insert(rows.end(), batch.target.begin() + long(b * L), batch.target.begin() + long((b + 1) * L));
  }
  const auto z = ad::reshape(model.encode(Tensor::from({B * (S + 1), L}, std::move(rows))), {B, S + 1, D});
  const auto z_hist = ad::slice(z, 1, 0, S);
  const auto z_now = ad::reshape(ad::slice(z, 1, S - 1, 1), {B, D});
  const auto z_next = ad::reshape(ad::slice(z, 1, S, 1), {B, D});

  const auto z_pred = model.transformer_forward(ad::repeat_rows(z_hist, m), Tensor::from({B * m, D}, noise));
  const auto u_all = model.decode(ad::concat({z_pred, z_now}, 0));
  const auto u_pred = ad::reshape(ad::slice(u_all, 0, 0, B * m), {B, m, L});
  const auto u_back = ad::slice(u_all, 0, B * m, B);

  std::vector<double> now(B * L);
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(batch.hist.begin() + long((b * S + S - 1) * L), L, now.begin() + long(b * L));
  const auto u_now = Tensor::from({B, L}, std::move(now));

  LossTerms t;
  t.crps_physical = ad::crps_ensemble(Tensor::from({B, L}, batch.target), u_pred, opt.fair);
  t.crps_latent = ad::crps_ensemble(z_next, ad::reshape(z_pred, {B, m, D}), opt.fair);
  t.mae_identity = ad::mae(u_back, u_now);
  t.spectral_mae = ad::mae(ad::rfft_modulus(u_back), ad::rfft_modulus(u_now));
  t.total = ad::add(ad::add(t.crps_physical, t.crps_latent), ad::add(t.mae_identity, t.spectral_mae));
  return t;
}

/// Draws fresh N(0, I) noise for every member of every sample.
inline std::vector<double> draw_noise(std::size_t count, Rng& rng) {
  std::vector<double> eps(count);
  for (auto& e : eps) e = standard_normal(rng);
  return eps;
}

inline LossTerms total_loss(const model::SltModel& model, const data::WindowBatch& batch, Rng& rng,
                            const LossOptions& opt) {
  return total_loss(model, batch, draw_noise(batch.batch * opt.members * model.latent_dim(), rng), opt);
}

}  // namespace slt::training
