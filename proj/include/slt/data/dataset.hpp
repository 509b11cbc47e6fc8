#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "slt/core/errors.hpp"
#include "slt/core/rng.hpp"
#include "slt/solver/solver.hpp"

namespace slt::data {

/// Read-only contiguous block of rows of a (T, ny) array. `boundaries` lists
/// rows (relative to this view) that start a new trajectory segment.
struct RecordView {
  const double* data = nullptr;
  std::size_t rows = 0, ny = 0;
  std::size_t first_row = 0;  // offset in the parent record
  std::vector<std::size_t> boundaries;

  RecordView() = default;
  RecordView(const double* d, std::size_t r, std::size_t n, std::size_t first = 0)
      : data(d), rows(r), ny(n), first_row(first) {}
  explicit RecordView(const solver::ZonalRecord& r) : data(r.U.data()), rows(r.rows()), ny(r.ny) {}

  std::span<const double> row(std::size_t t) const { return {data + t * ny, ny}; }
  std::span<const double> all() const { return {data, rows * ny}; }
};

/// Rows of `r` recorded at or after t0 (drops a spin-up transient).
inline RecordView rows_after(const solver::ZonalRecord& r, double t0) {
  const auto it = std::lower_bound(r.times.begin(), r.times.end(), t0 - 1e-9);
  const auto first = std::size_t(it - r.times.begin());
  return RecordView(r.U.data() + first * r.ny, r.rows() - first, r.ny, first);
}

/// Training head and contiguous validation tail.
inline std::pair<RecordView, RecordView> split(const RecordView& r, std::size_t val_len) {
  if (val_len >= r.rows)
    throw ConfigError("split: validation length " + std::to_string(val_len) + " must be below the record length " +
                      std::to_string(r.rows));
  const std::size_t n = r.rows - val_len;
  RecordView head(r.data, n, r.ny, r.first_row), tail(r.data + n * r.ny, val_len, r.ny, r.first_row + n);
  for (std::size_t b : r.boundaries) {
    if (b > 0 && b < n) head.boundaries.push_back(b);
    if (b > n && b < r.rows) tail.boundaries.push_back(b - n);
  }
  return {head, tail};
}

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Global scalar mean and population std over every entry; std >= 1e-12.
inline NormStats normalization_stats(const RecordView& r) {
  if (r.rows == 0 || r.ny == 0) throw ConfigError("normalization_stats: empty record");
  const auto v = r.all();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= double(v.size());
  return {mean, std::max(std::sqrt(var), 1e-12)};
}

/// S consecutive history rows and the row after them.
struct WindowBatch {
  std::size_t batch = 0, history = 0, ny = 0;
  std::vector<double> hist;    // (B, S, ny)
  std::vector<double> target;  // (B, ny)
  std::vector<std::size_t> starts;

  void normalize(const NormStats& s) {
    for (auto& x : hist) x = (x - s.mean) / s.std;
    for (auto& x : target) x = (x - s.mean) / s.std;
  }
};

/// Uniform sampler over window starts. A window occupies S + 1 rows and may
/// not contain a segment boundary (the first row of a new segment, e.g. a
/// file join or a spin-up cut), so it never mixes unrelated trajectories.
class WindowSampler {
 public:
  WindowSampler(RecordView source, std::size_t history, std::uint64_t seed, std::vector<std::size_t> boundaries = {})
      : src_(source), S_(history), rng_(stream_rng(seed, 7)) {
    boundaries.insert(boundaries.end(), src_.boundaries.begin(), src_.boundaries.end());
    if (S_ < 1) throw ConfigError("WindowSampler: history must be >= 1");
    if (src_.rows < S_ + 1)
      throw ConfigError("WindowSampler: record has " + std::to_string(src_.rows) + " rows, windows need " +
                        std::to_string(S_ + 1));
    std::sort(boundaries.begin(), boundaries.end());
    for (std::size_t s = 0; s + S_ < src_.rows; ++s) {
      // Rows s..s+S; a boundary b splits the window when s < b <= s+S.
      auto it = std::upper_bound(boundaries.begin(), boundaries.end(), s);
      if (it != boundaries.end() && *it <= s + S_) continue;
      valid_.push_back(s);
    }
    if (valid_.empty()) throw ConfigError("WindowSampler: no window fits between segment boundaries");
  }

  const std::vector<std::size_t>& valid_starts() const { return valid_; }
  std::size_t history() const { return S_; }

  std::size_t draw_start() {
    return valid_[std::uniform_int_distribution<std::size_t>(0, valid_.size() - 1)(rng_)];
  }

  WindowBatch sample(std::size_t batch_size) {
    std::vector<std::size_t> starts(batch_size);
    for (auto& s : starts) s = draw_start();
    return gather(starts);
  }

  /// Batch from explicit starts (used for fixed validation sets).
  WindowBatch gather(const std::vector<std::size_t>& starts) const {
    WindowBatch b;
    b.batch = starts.size();
    b.history = S_;
    b.ny = src_.ny;
    b.starts = starts;
    b.hist.reserve(b.batch * S_ * b.ny);
    b.target.reserve(b.batch * b.ny);
    for (std::size_t s : starts) {
      if (s + S_ >= src_.rows) throw ConfigError("WindowSampler: start " + std::to_string(s) + " out of range");
      for (std::size_t r = 0; r < S_; ++r) {
        const auto row = src_.row(s + r);
        b.hist.insert(b.hist.end(), row.begin(), row.end());
      }
      const auto tgt = src_.row(s + S_);
      b.target.insert(b.target.end(), tgt.begin(), tgt.end());
    }
    return b;
  }

  /// Up to `count` valid starts spread evenly over the record.
  std::vector<std::size_t> even_starts(std::size_t count) const {
    count = std::min(count, valid_.size());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(valid_[i * valid_.size() / count]);
    return out;
  }

 private:
  RecordView src_;
  std::size_t S_;
  Rng rng_;
  std::vector<std::size_t> valid_;
};

}  // namespace slt::data
