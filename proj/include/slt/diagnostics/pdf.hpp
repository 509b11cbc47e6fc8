#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "slt/core/errors.hpp"
#include "slt/spectral/profile.hpp"

namespace slt::diagnostics {

/// Uniform bins over [lo, hi] on one axis.
struct BinAxis {
  double lo = 0.0, hi = 1.0;
  std::size_t bins = 128;

  double width() const { return (hi - lo) / double(bins); }
  double edge(std::size_t i) const { return lo + double(i) * width(); }
  /// Bin index, or -1 outside [lo, hi] or non-finite. hi falls in the last bin.
  long index(double x) const {
    if (!(x >= lo && x <= hi)) return -1;
    const auto i = std::size_t((x - lo) / width());
    return long(std::min(i, bins - 1));
  }
  bool operator==(const BinAxis&) const = default;
};

/// Histogram density over 1 to 3 axes. Samples outside the grid (or
/// non-finite) are kept as an overflow mass so that
///   Σ density · cell_volume + outside = 1.
struct HistogramPDF {
  std::vector<BinAxis> axes;
  std::vector<double> density;  // row-major over axes
  std::size_t samples = 0;
  double outside = 0.0;

  std::size_t dims() const { return axes.size(); }
  double cell_volume() const {
    double v = 1.0;
    for (const auto& a : axes) v *= a.width();
    return v;
  }
  double integral() const {
    double s = 0.0;
    for (double d : density) s += d;
    return s * cell_volume();
  }
};

/// Expands a degenerate range so that a constant sample still gets a bin.
inline BinAxis axis_over(double lo, double hi, std::size_t bins) {
  if (!(std::isfinite(lo) && std::isfinite(hi))) throw ConfigError("histogram range must be finite");
  if (hi <= lo) {
    const double pad = std::max(1e-12, 1e-9 * std::abs(lo));
    lo -= pad;
    hi += pad;
  }
  return {lo, hi, bins};
}

inline BinAxis axis_for(std::span<const double> x, std::size_t bins = 128) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : x)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!std::isfinite(lo)) throw ConfigError("histogram: no finite samples to set a range");
  return axis_over(lo, hi, bins);
}

/// Joint histogram of columns[d][i] over the given axes.
inline HistogramPDF histogram(const std::vector<std::span<const double>>& columns, std::vector<BinAxis> axes) {
  if (columns.empty() || columns.size() > 3 || columns.size() != axes.size())
    throw ConfigError("histogram: need 1 to 3 columns with one axis each");
  const std::size_t n = columns[0].size();
  for (const auto& c : columns)
    if (c.size() != n) throw ConfigError("histogram: columns differ in length");
  if (n == 0) throw ConfigError("histogram: no samples");
  HistogramPDF h;
  h.axes = std::move(axes);
  std::size_t cells = 1;
  for (const auto& a : h.axes) cells *= a.bins;
  std::vector<double> counts(cells, 0.0);
  double out = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t flat = 0;
    bool in = true;
    for (std::size_t d = 0; d < columns.size() && in; ++d) {
      const long b = h.axes[d].index(columns[d][i]);
      in = b >= 0;
      flat = flat * h.axes[d].bins + std::size_t(std::max(b, 0L));
    }
    if (in)
      counts[flat] += 1.0;
    else
      out += 1.0;
  }
  h.samples = n;
  h.outside = out / double(n);
  const double scale = 1.0 / (double(n) * h.cell_volume());
  h.density.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) h.density[i] = counts[i] * scale;
  return h;
}

inline HistogramPDF histogram(std::span<const double> x, const BinAxis& axis) {
  return histogram(std::vector<std::span<const double>>{x}, std::vector<BinAxis>{axis});
}

/// Sums out every axis except `keep`.
inline HistogramPDF marginal(const HistogramPDF& h, std::size_t keep) {
  if (keep >= h.dims()) throw ConfigError("marginal: axis out of range");
  HistogramPDF m;
  m.axes = {h.axes[keep]};
  m.samples = h.samples;
  m.outside = h.outside;
  m.density.assign(h.axes[keep].bins, 0.0);
  std::size_t inner = 1;
  for (std::size_t d = keep + 1; d < h.dims(); ++d) inner *= h.axes[d].bins;
  const double vol = h.cell_volume() / h.axes[keep].width();
  for (std::size_t i = 0; i < h.density.size(); ++i) m.density[(i / inner) % h.axes[keep].bins] += h.density[i] * vol;
  return m;
}

/// ½ ∫ |p - q|, with the overflow masses compared as one extra cell. This is
/// the total-variation distance, in [0, 1].
inline double hellinger(const HistogramPDF& p, const HistogramPDF& q) {
  if (p.axes != q.axes) throw ConfigError("hellinger: histograms use different bins");
  double s = 0.0;
  for (std::size_t i = 0; i < p.density.size(); ++i) s += std::abs(p.density[i] - q.density[i]);
  return 0.5 * (s * p.cell_volume() + std::abs(p.outside - q.outside));
}

/// Per-point samples of U, ∂yU (spectral) and ∂tU (forward difference over
/// `dt`) from one or more trajectories of (T, ny) rows. The last row of each
/// trajectory has no forward difference and is left out of all three, so
/// the joint and single-variable PDFs share one sample set.
struct FieldSamples {
  std::vector<double> U, dUdy, dUdt;

  void append(std::span<const double> rows, std::size_t ny, double dt) {
    if (ny == 0 || rows.size() % ny) throw ConfigError("FieldSamples: rows are not a multiple of ny");
    const std::size_t T = rows.size() / ny;
    if (T < 2) throw ConfigError("FieldSamples: need at least two rows for the time derivative");
    for (std::size_t t = 0; t + 1 < T; ++t) {
      const auto u = rows.subspan(t * ny, ny);
      const auto uy = spectral::derivative(u, 1);
      for (std::size_t j = 0; j < ny; ++j) {
        U.push_back(u[j]);
        dUdy.push_back(uy[j]);
        dUdt.push_back((rows[(t + 1) * ny + j] - u[j]) / dt);
      }
    }
  }
  std::array<std::span<const double>, 3> columns() const { return {U, dUdy, dUdt}; }
};

/// Bins shared by a reference and any sample compared against it.
struct PdfGrid {
  std::array<BinAxis, 3> axes;  // U, ∂yU, ∂tU

  static PdfGrid from(const FieldSamples& ref, std::size_t bins = 128) {
    return {{axis_for(ref.U, bins), axis_for(ref.dUdy, bins), axis_for(ref.dUdt, bins)}};
  }
};

/// p(U), p(∂yU), p(∂tU), the three pairwise joints and the 3D joint.
struct PdfSet {
  std::array<HistogramPDF, 3> single;
  std::array<HistogramPDF, 3> pair;  // (U,∂yU), (U,∂tU), (∂yU,∂tU)
  HistogramPDF joint;
};

inline PdfSet build_pdfs(const FieldSamples& s, const PdfGrid& g) {
  const auto c = s.columns();
  PdfSet out;
  for (std::size_t d = 0; d < 3; ++d) out.single[d] = histogram(c[d], g.axes[d]);
  const std::array<std::pair<int, int>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto [a, b] = pairs[k];
    out.pair[k] = histogram(std::vector<std::span<const double>>{c[a], c[b]}, std::vector<BinAxis>{g.axes[a], g.axes[b]});
  }
  out.joint = histogram(std::vector<std::span<const double>>(c.begin(), c.end()),
                        std::vector<BinAxis>(g.axes.begin(), g.axes.end()));
  return out;
}

/// lo,hi,density per cell; one column pair per axis.
inline void pdf_csv(const HistogramPDF& h, std::ostream& out) {
  for (std::size_t d = 0; d < h.dims(); ++d) out << (d ? "," : "") << "lo" << d << ",hi" << d;
  out << ",density\n";
  out.precision(17);
  std::vector<std::size_t> idx(h.dims(), 0);
  for (double v : h.density) {
    for (std::size_t d = 0; d < h.dims(); ++d)
      out << (d ? "," : "") << h.axes[d].edge(idx[d]) << ',' << h.axes[d].edge(idx[d] + 1);
    out << ',' << v << '\n';
    for (std::size_t d = h.dims(); d-- > 0;) {
      if (++idx[d] < h.axes[d].bins) break;
      idx[d] = 0;
    }
  }
}

}  // namespace slt::diagnostics
