#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "slt/core/errors.hpp"
#include "slt/core/rng.hpp"
#include "slt/model/rollout.hpp"
#include "slt/spectral/profile.hpp"
#include "slt/training/losses.hpp"

namespace slt::diagnostics {

// ---- ensemble scores -----------------------------------------------------

/// MAE and ensemble-variation parts of the CRPS at each forecast step.
struct CrpsSeries {
  std::vector<double> mae, variation;
  double crps(std::size_t t) const { return mae[t] - variation[t]; }
};

/// truth: (horizon, ny) rows verifying forecast steps 1..horizon.
inline CrpsSeries crps_decomposition_series(const model::EnsembleForecast& f, std::span<const double> truth) {
  if (truth.size() != f.horizon * f.ny)
    throw ConfigError("crps_decomposition_series: truth must hold horizon x ny values");
  CrpsSeries s;
  std::vector<double> ens(f.members * f.ny);
  for (std::size_t t = 0; t < f.horizon; ++t) {
    for (std::size_t m = 0; m < f.members; ++m) std::copy_n(f.row(m, t).begin(), f.ny, ens.begin() + long(m * f.ny));
    const auto p = training::crps_parts(truth.subspan(t * f.ny, f.ny), ens);
    s.mae.push_back(p.mae);
    s.variation.push_back(p.variation);
  }
  return s;
}

/// Mean CRPS when each target is forecast by m states drawn uniformly from
/// `pool` (T_pool, ny), ignoring the initial condition.
inline double climatology_crps(std::span<const double> targets, std::span<const double> pool, std::size_t ny,
                               std::size_t m, Rng& rng) {
  if (ny == 0 || targets.size() % ny || pool.size() % ny || pool.empty())
    throw ConfigError("climatology_crps: inputs must be whole rows");
  const std::size_t T = targets.size() / ny, P = pool.size() / ny;
  std::uniform_int_distribution<std::size_t> pick(0, P - 1);
  std::vector<double> ens(m * ny);
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < m; ++i) std::copy_n(pool.begin() + long(pick(rng) * ny), ny, ens.begin() + long(i * ny));
    total += training::crps_ensemble(targets.subspan(t * ny, ny), ens);
  }
  return total / double(T);
}

// ---- jets ----------------------------------------------------------------

struct JetCensusEntry {
  std::size_t count = 0;
  std::vector<std::size_t> positions;  // increasing grid indices
};

/// Strict local maxima of U with U > 0 (eastward), periodic in y.
inline JetCensusEntry count_jets(std::span<const double> U) {
  JetCensusEntry e;
  const std::size_t n = U.size();
  if (n < 3) return e;
  for (std::size_t j = 0; j < n; ++j) {
    const double l = U[(j + n - 1) % n], r = U[(j + 1) % n];
    if (U[j] > 0.0 && U[j] > l && U[j] > r) e.positions.push_back(j);
  }
  e.count = e.positions.size();
  return e;
}

/// Jet count of every row of a (T, ny) block.
inline std::vector<int> jet_counts(std::span<const double> rows, std::size_t ny) {
  if (ny == 0 || rows.size() % ny) throw ConfigError("jet_counts: rows are not a multiple of ny");
  std::vector<int> c;
  for (std::size_t t = 0; t < rows.size() / ny; ++t) c.push_back(int(count_jets(rows.subspan(t * ny, ny)).count));
  return c;
}

/// Joint frequency of (count at t, change to t+1), with the change bucketed
/// into decrease / constant / increase.
struct TransitionPDF {
  int max_count = 0;
  std::vector<std::array<double, 3>> freq;  // freq[count][0:dec, 1:same, 2:inc]

  double total() const {
    double s = 0.0;
    for (const auto& r : freq) s += r[0] + r[1] + r[2];
    return s;
  }
};

inline TransitionPDF transition_pdf(const std::vector<int>& counts) {
  if (counts.size() < 2) throw ConfigError("transition_pdf: need at least two census entries");
  TransitionPDF p;
  p.max_count = *std::max_element(counts.begin(), counts.end());
  p.freq.assign(std::size_t(p.max_count) + 1, {0.0, 0.0, 0.0});
  const double w = 1.0 / double(counts.size() - 1);
  for (std::size_t t = 0; t + 1 < counts.size(); ++t) {
    const int d = counts[t + 1] - counts[t];
    p.freq[std::size_t(counts[t])][d < 0 ? 0 : d == 0 ? 1 : 2] += w;
  }
  return p;
}

// ---- spectra -------------------------------------------------------------

/// Time-mean power per mode k = 0..ny/2 of the amplitude-normalized
/// transform, with conjugate pairs folded in (weight 2 for 0 < k < ny/2).
/// Σ_k P_k is the time-mean of mean(U²); Σ_{k>=1} P_k the time-mean of the
/// spatial variance.
inline std::vector<double> psd_time_avg(std::span<const double> rows, std::size_t ny) {
  if (ny == 0 || ny % 2 || rows.size() % ny || rows.empty())
    throw ConfigError("psd_time_avg: need whole rows of even length");
  const std::size_t T = rows.size() / ny;
  std::vector<double> P(ny / 2 + 1, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto s = spectral::rfft1(rows.subspan(t * ny, ny));
    for (std::size_t k = 0; k < P.size(); ++k) {
      const double w = (k == 0 || k == ny / 2) ? 1.0 : 2.0;
      P[k] += w * std::norm(s.coeffs[k]);
    }
  }
  for (auto& p : P) p /= double(T);
  return P;
}

// ---- events --------------------------------------------------------------

enum class EventKind { coalescence, nucleation };

struct JetEvent {
  std::size_t index = 0;  // first census entry at the new count
  int from = 0, to = 0;
  EventKind kind() const { return to < from ? EventKind::coalescence : EventKind::nucleation; }
};

/// Changes of the jet count that persist for at least `persistence`
/// consecutive entries. Shorter excursions are treated as flicker and the
/// established count is kept.
inline std::vector<JetEvent> detect_events(const std::vector<int>& counts, std::size_t persistence = 3) {
  if (persistence < 1) throw ConfigError("detect_events: persistence must be >= 1");
  std::vector<JetEvent> ev;
  if (counts.empty()) return ev;
  int established = counts[0];
  for (std::size_t t = 1; t < counts.size(); ++t) {
    if (counts[t] == established) continue;
    if (t + persistence > counts.size()) break;
    bool holds = true;
    for (std::size_t k = 1; k < persistence && holds; ++k) holds = counts[t + k] == counts[t];
    if (!holds) continue;
    ev.push_back({t, established, counts[t]});
    established = counts[t];
  }
  return ev;
}

inline std::optional<std::size_t> first_event(const std::vector<int>& counts, EventKind kind,
                                              std::size_t persistence = 3) {
  for (const auto& e : detect_events(counts, persistence))
    if (e.kind() == kind) return e.index;
  return std::nullopt;
}

/// Linear-interpolation quantile of sorted data.
inline double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * double(sorted.size() - 1);
  const auto i = std::size_t(std::floor(pos));
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + (pos - double(i)) * (sorted[i + 1] - sorted[i]);
}

/// Distribution over members of the time to the first event.
struct EventTimePDF {
  std::vector<double> times;          // uncensored first-event times, sorted
  std::vector<double> edges;          // unit-width bins [0, horizon]
  std::vector<double> density;        // Σ density · width + censored = 1
  double censored = 0.0;              // fraction of members with no event
  std::size_t members = 0;
  std::array<double, 4> quantiles{};  // 5th, 25th, 75th, 95th of `times`
};

/// Each member's census starts with the initial profile (time 0) followed by
/// its forecast rows (times 1..horizon).
inline EventTimePDF time_to_event_pdf(const model::EnsembleForecast& f, std::span<const double> initial,
                                      EventKind kind, std::size_t persistence = 3, double record_interval = 1.0) {
  if (initial.size() != f.ny) throw ConfigError("time_to_event_pdf: initial profile length differs from ny");
  EventTimePDF p;
  p.members = f.members;
  const int c0 = int(count_jets(initial).count);
  for (std::size_t m = 0; m < f.members; ++m) {
    std::vector<int> c{c0};
    const auto rest = jet_counts(std::span(f.U).subspan(m * f.horizon * f.ny, f.horizon * f.ny), f.ny);
    c.insert(c.end(), rest.begin(), rest.end());
    if (const auto t = first_event(c, kind, persistence)) p.times.push_back(double(*t) * record_interval);
  }
  std::sort(p.times.begin(), p.times.end());
  p.censored = f.members ? 1.0 - double(p.times.size()) / double(f.members) : 0.0;
  for (std::size_t i = 0; i <= f.horizon; ++i) p.edges.push_back(double(i) * record_interval);
  p.density.assign(f.horizon, 0.0);
  for (double t : p.times) {
    const auto b = std::min(f.horizon - 1, std::size_t(std::max(0.0, t / record_interval - 1e-9)));
    p.density[b] += 1.0 / (double(f.members) * record_interval);
  }
  const std::array<double, 4> qs{0.05, 0.25, 0.75, 0.95};
  for (std::size_t i = 0; i < 4; ++i) p.quantiles[i] = quantile(p.times, qs[i]);
  return p;
}

inline void event_pdf_csv(const EventTimePDF& p, std::ostream& out) {
  out << "lo,hi,density\n";
  out.precision(17);
  for (std::size_t i = 0; i < p.density.size(); ++i) out << p.edges[i] << ',' << p.edges[i + 1] << ',' << p.density[i] << '\n';
}

inline void event_quantiles_csv(const EventTimePDF& p, std::ostream& out) {
  out << "members,events,censored,q05,q25,q75,q95\n";
  out.precision(17);
  out << p.members << ',' << p.times.size() << ',' << p.censored;
  for (double q : p.quantiles) out << ',' << q;
  out << '\n';
}

}  // namespace slt::diagnostics
