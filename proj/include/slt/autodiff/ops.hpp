#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "slt/autodiff/tensor.hpp"
#include "slt/spectral/fft.hpp"

namespace slt::ad {

namespace detail {

inline void same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

inline void fail(const char* op, const std::string& what, const Shape& a, const Shape& b = {}) {
  throw ShapeError(std::string(op) + ": " + what + " " + shape_str(a) +
                   (b.empty() ? "" : " vs " + shape_str(b)));
}

// cos/sin of 2πkj/L for k < M, j < L, stored [k*L + j].
struct DftTable {
  std::vector<double> c, s;
};

// Shared so a backward rule can outlive the thread that built the graph.
inline std::shared_ptr<const DftTable> dft_table(std::size_t L, std::size_t M) {
  static std::mutex mutex;
  static std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const DftTable>> cache;
  std::lock_guard lock(mutex);
  auto key = std::make_pair(L, M);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  DftTable t;
  t.c.resize(M * L);
  t.s.resize(M * L);
  for (std::size_t k = 0; k < M; ++k)
    for (std::size_t j = 0; j < L; ++j) {
      // Reduce kj mod L first so large tables stay accurate.
      const double th = 2.0 * std::numbers::pi * double((k * j) % L) / double(L);
      t.c[k * L + j] = std::cos(th);
      t.s[k * L + j] = std::sin(th);
    }
  return cache.emplace(key, std::make_shared<const DftTable>(std::move(t))).first->second;
}

// Rows at least this long go through FFTW instead of the cos/sin table. The
// table is kept below it so small transforms stay bit-stable.
inline constexpr std::size_t kFftRowThreshold = 128;

// out[2k], out[2k+1] = scale * Σ_j x_j e^{-2πikj/L}, k < M.
inline void row_r2c(const double* x, std::size_t L, std::size_t M, double scale, double* out) {
  auto& f = spectral::cached_fft1(L);
  std::copy(x, x + L, f.real_data());
  f.execute_forward();
  const auto* s = f.spec_data();
  for (std::size_t k = 0; k < M; ++k) {
    out[2 * k] = s[k].real() * scale;
    out[2 * k + 1] = s[k].imag() * scale;
  }
}

// x_j = scale * Σ_{k<M} w_k Re(c_k e^{2πikj/L}) with w_0 = w_{L/2} = 1, else 2.
inline void row_c2r(const double* c, std::size_t L, std::size_t M, double scale, double* x) {
  auto& f = spectral::cached_fft1(L);
  auto* s = f.spec_data();
  for (std::size_t k = 0; k <= L / 2; ++k) s[k] = k < M ? spectral::cplx(c[2 * k], c[2 * k + 1]) : 0.0;
  f.execute_inverse();
  const double* r = f.real_data();
  for (std::size_t j = 0; j < L; ++j) x[j] = r[j] * scale;
}

}  // namespace detail

// ---- elementwise -------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::same_shape("add", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + b.value()[i];
  return make_result("add", a.shape(), std::move(v), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::same_shape("sub", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] - b.value()[i];
  return make_result("sub", a.shape(), std::move(v), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[std::size_t(k)];
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      const double s = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::same_shape("mul", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * b.value()[i];
  return make_result("mul", a.shape(), std::move(v), {a, b}, [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.value());
  for (auto& x : v) x *= s;
  return make_result("scale", a.shape(), std::move(v), {a}, [s](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

/// a + b where b's shape equals the trailing dimensions of a.
inline Tensor add_bias(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin()))
    detail::fail("add_bias", "bias shape must match trailing dims", as, bs);
  const std::size_t n = b.size();
  std::vector<double> v(a.value());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.value()[i % n];
  return make_result("add_bias", as, std::move(v), {a, b}, [n](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

inline Tensor abs(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(a.value()[i]);
  return make_result("abs", a.shape(), std::move(v), {a}, [](Node& self) {
    Node& A = *self.parents[0];
    auto& g = A.ensure_grad();
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * double((A.value[i] > 0.0) - (A.value[i] < 0.0));
  });
}

/// Exact GELU, x Φ(x).
inline Tensor gelu(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = a.value()[i];
    v[i] = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  }
  return make_result("gelu", a.shape(), std::move(v), {a}, [](Node& self) {
    Node& A = *self.parents[0];
    auto& g = A.ensure_grad();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = A.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      g[i] += self.grad[i] * (cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x));
    }
  });
}

/// Softmax over the last dimension.
inline Tensor softmax_rows(const Tensor& a) {
  if (a.rank() == 0) detail::fail("softmax_rows", "needs rank >= 1", a.shape());
  const std::size_t n = a.dim(-1), rows = a.size() / n;
  std::vector<double> v(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.value().data() + r * n;
    double* y = v.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (y[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < n; ++i) y[i] /= z;
  }
  return make_result("softmax_rows", a.shape(), std::move(v), {a}, [n, rows](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* gy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += gy[i] * y[i];
      for (std::size_t i = 0; i < n; ++i) g[r * n + i] += y[i] * (gy[i] - dot);
    }
  });
}

/// Per-row normalization over the last axis, then gain and bias (both (n)).
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  if (a.rank() == 0) detail::fail("layer_norm", "needs rank >= 1", a.shape());
  const std::size_t n = a.dim(-1), rows = a.size() / n;
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n})
    detail::fail("layer_norm", "gain and bias must match the last axis of", a.shape(), gain.shape());
  std::vector<double> v(a.size()), xhat(a.size()), inv_sd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.value().data() + r * n;
    double mu = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x[i];
    mu /= double(n);
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
    inv_sd[r] = 1.0 / std::sqrt(var / double(n) + eps);
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (x[i] - mu) * inv_sd[r];
      v[r * n + i] = gain.value()[i] * xhat[r * n + i] + bias.value()[i];
    }
  }
  return make_result("layer_norm", a.shape(), std::move(v), {a, gain, bias},
                     [n, rows, xhat = std::move(xhat), inv_sd = std::move(inv_sd)](Node& self) {
    Node& A = *self.parents[0];
    Node& G = *self.parents[1];
    Node& B = *self.parents[2];
    if (G.requires_grad) {
      auto& g = G.ensure_grad();
      for (std::size_t i = 0; i < rows * n; ++i) g[i % n] += self.grad[i] * xhat[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < rows * n; ++i) g[i % n] += self.grad[i];
    }
    if (!A.requires_grad) return;
    auto& g = A.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double gh = self.grad[r * n + i] * G.value[i];
        m1 += gh;
        m2 += gh * xhat[r * n + i];
      }
      m1 /= double(n);
      m2 /= double(n);
      for (std::size_t i = 0; i < n; ++i)
        g[r * n + i] += inv_sd[r] * (self.grad[r * n + i] * G.value[i] - m1 - xhat[r * n + i] * m2);
    }
  });
}

// ---- reductions --------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  return make_result("sum", {}, {s}, {a}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& x : g) x += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) detail::fail("mean", "empty tensor", a.shape());
  return scale(sum(a), 1.0 / double(a.size()));
}

inline Tensor mae(const Tensor& a, const Tensor& b) { return mean(abs(sub(a, b))); }

// ---- linear algebra ----------------------------------------------------

/// (..., K) x (K, N) -> (..., N).
inline Tensor matmul(const Tensor& a, const Tensor& w) {
  if (a.rank() < 1 || w.rank() != 2 || a.dim(-1) != w.dim(0))
    detail::fail("matmul", "incompatible shapes", a.shape(), w.shape());
  const std::size_t K = w.dim(0), N = w.dim(1), R = a.size() / K;
  Shape os = a.shape();
  os.back() = N;
  std::vector<double> v(R * N, 0.0);
  const double* A = a.value().data();
  const double* W = w.value().data();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t k = 0; k < K; ++k) {
      const double x = A[r * K + k];
      const double* wr = W + k * N;
      double* o = v.data() + r * N;
      for (std::size_t n = 0; n < N; ++n) o[n] += x * wr[n];
    }
  return make_result("matmul", os, std::move(v), {a, w}, [K, N, R](Node& self) {
    Node& A = *self.parents[0];
    Node& W = *self.parents[1];
    const double* __restrict G = self.grad.data();
    if (A.requires_grad) {
      double* __restrict ga = A.ensure_grad().data();
      const double* __restrict wv = W.value.data();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t k = 0; k < K; ++k) {
          double acc = 0.0;
          for (std::size_t n = 0; n < N; ++n) acc += G[r * N + n] * wv[k * N + n];
          ga[r * K + k] += acc;
        }
    }
    if (W.requires_grad) {
      double* __restrict gw = W.ensure_grad().data();
      const double* __restrict av = A.value.data();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t k = 0; k < K; ++k) {
          const double x = av[r * K + k];
          double* __restrict row = gw + k * N;
          const double* __restrict g = G + r * N;
          for (std::size_t n = 0; n < N; ++n) row[n] += x * g[n];
        }
    }
  });
}

namespace detail {

// Batched C[b] = op(A[b]) op(B[b]); trans_b selects B^T.
inline Tensor batched(const char* name, const Tensor& a, const Tensor& b, bool trans_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0))
    fail(name, "incompatible shapes", a.shape(), b.shape());
  const std::size_t Bn = a.dim(0), M = a.dim(1), K = a.dim(2);
  const std::size_t N = trans_b ? b.dim(1) : b.dim(2);
  if ((trans_b ? b.dim(2) : b.dim(1)) != K) fail(name, "inner dimension mismatch", a.shape(), b.shape());
  // element (k, n) of op(B[b])
  auto bidx = [=](std::size_t bb, std::size_t k, std::size_t n) {
    return trans_b ? bb * N * K + n * K + k : bb * K * N + k * N + n;
  };
  std::vector<double> v(Bn * M * N, 0.0);
  const double* __restrict A = a.value().data();
  const double* __restrict Bv = b.value().data();
  for (std::size_t bb = 0; bb < Bn; ++bb)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += A[bb * M * K + m * K + k] * Bv[bidx(bb, k, n)];
        v[bb * M * N + m * N + n] = acc;
      }
  return make_result(name, {Bn, M, N}, std::move(v), {a, b}, [=](Node& self) {
    Node& An = *self.parents[0];
    Node& Bn_ = *self.parents[1];
    const double* __restrict G = self.grad.data();
    const double* __restrict av = An.value.data();
    const double* __restrict bv = Bn_.value.data();
    double* __restrict ga = An.requires_grad ? An.ensure_grad().data() : nullptr;
    double* __restrict gb = Bn_.requires_grad ? Bn_.ensure_grad().data() : nullptr;
    for (std::size_t bb = 0; bb < Bn; ++bb)
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t n = 0; n < N; ++n) {
          const double g = G[bb * M * N + m * N + n];
          if (g == 0.0) continue;
          const double* ar = av + bb * M * K + m * K;
          if (ga) {
            double* gr = ga + bb * M * K + m * K;
            for (std::size_t k = 0; k < K; ++k) gr[k] += g * bv[bidx(bb, k, n)];
          }
          if (gb)
            for (std::size_t k = 0; k < K; ++k) gb[bidx(bb, k, n)] += g * ar[k];
        }
  });
}

}  // namespace detail

/// (B, M, K) x (B, K, N) -> (B, M, N).
inline Tensor bmm(const Tensor& a, const Tensor& b) { return detail::batched("bmm", a, b, false); }

/// (B, M, K) x (B, N, K)^T -> (B, M, N).
inline Tensor bmm_nt(const Tensor& a, const Tensor& b) { return detail::batched("bmm_nt", a, b, true); }

/// Swap the last two dimensions.
inline Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) detail::fail("transpose", "needs rank >= 2", a.shape());
  const std::size_t R = a.dim(-2), C = a.dim(-1), B = a.size() / (R * C);
  Shape os = a.shape();
  std::swap(os[os.size() - 1], os[os.size() - 2]);
  std::vector<double> v(a.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) v[b * R * C + c * R + r] = a.value()[b * R * C + r * C + c];
  return make_result("transpose", os, std::move(v), {a}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g[b * R * C + r * C + c] += self.grad[b * R * C + c * R + r];
  });
}

// ---- shape manipulation ------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) detail::fail("reshape", "element count mismatch", a.shape(), shape);
  return make_result("reshape", std::move(shape), a.value(), {a}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

namespace detail {
inline std::pair<std::size_t, std::size_t> outer_inner(const Shape& s, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, inner};
}
}  // namespace detail

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape os = parts[0].shape();
  if (axis >= os.size()) detail::fail("concat", "axis out of range", os);
  os[axis] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != b.size()) detail::fail("concat", "rank mismatch", a, b);
    a[axis] = b[axis] = 0;
    if (a != b) detail::fail("concat", "shape mismatch", p.shape(), parts[0].shape());
    os[axis] += p.dim(int(axis));
  }
  const auto [outer, inner] = detail::outer_inner(os, axis);
  const std::size_t total = os[axis];
  std::vector<double> v(numel(os));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(int(axis));
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.value().data() + o * len * inner, len * inner, v.data() + (o * total + offset) * inner);
    offsets.push_back(offset);
    offset += len;
  }
  auto n = std::make_shared<Node>();
  n->shape = os;
  n->value = std::move(v);
  n->op = "concat";
  n->leaf = false;
  if (grad_mode())
    for (const auto& p : parts) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    for (const auto& p : parts) n->parents.push_back(p.ptr());
    n->backward_fn = [outer, inner, total, offsets, axis](Node& self) {
      for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
        Node& P = *self.parents[pi];
        if (!P.requires_grad) continue;
        auto& g = P.ensure_grad();
        const std::size_t len = P.shape[axis];
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < len * inner; ++i)
            g[o * len * inner + i] += self.grad[(o * total + offsets[pi]) * inner + i];
      }
    };
  }
  return Tensor(std::move(n));
}

inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= a.rank() || start + len > a.dim(int(axis)))
    detail::fail("slice", "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                              ") on axis " + std::to_string(axis) + " out of bounds for",
                 a.shape());
  Shape os = a.shape();
  const std::size_t total = os[axis];
  os[axis] = len;
  const auto [outer, inner] = detail::outer_inner(os, axis);
  std::vector<double> v(numel(os));
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.value().data() + (o * total + start) * inner, len * inner, v.data() + o * len * inner);
  return make_result("slice", os, std::move(v), {a}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < len * inner; ++i) g[(o * total + start) * inner + i] += self.grad[o * len * inner + i];
  });
}

/// (B, ...) -> (B*times, ...), row b*times + i is a copy of row b.
inline Tensor repeat_rows(const Tensor& a, std::size_t times) {
  if (a.rank() < 1) detail::fail("repeat_rows", "needs rank >= 1", a.shape());
  const std::size_t B = a.dim(0), inner = a.size() / std::max<std::size_t>(B, 1);
  Shape os = a.shape();
  os[0] = B * times;
  std::vector<double> v(numel(os));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < times; ++t)
      std::copy_n(a.value().data() + b * inner, inner, v.data() + (b * times + t) * inner);
  return make_result("repeat_rows", os, std::move(v), {a}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < times; ++t)
        for (std::size_t i = 0; i < inner; ++i) g[b * inner + i] += self.grad[(b * times + t) * inner + i];
  });
}

/// (B, S, H*dk) -> (B*H, S, dk).
inline Tensor split_heads(const Tensor& a, std::size_t H) {
  if (a.rank() != 3 || a.dim(2) % H) detail::fail("split_heads", "feature dim not divisible by heads", a.shape());
  const std::size_t B = a.dim(0), S = a.dim(1), D = a.dim(2), dk = D / H;
  std::vector<double> v(a.size());
  auto src = [=](std::size_t b, std::size_t h, std::size_t s, std::size_t k) { return (b * S + s) * D + h * dk + k; };
  auto dst = [=](std::size_t b, std::size_t h, std::size_t s, std::size_t k) { return ((b * H + h) * S + s) * dk + k; };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t k = 0; k < dk; ++k) v[dst(b, h, s, k)] = a.value()[src(b, h, s, k)];
  return make_result("split_heads", {B * H, S, dk}, std::move(v), {a}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t s = 0; s < S; ++s)
          for (std::size_t k = 0; k < dk; ++k) g[src(b, h, s, k)] += self.grad[dst(b, h, s, k)];
  });
}

/// (B*H, S, dk) -> (B, S, H*dk).
inline Tensor merge_heads(const Tensor& a, std::size_t H) {
  if (a.rank() != 3 || a.dim(0) % H) detail::fail("merge_heads", "batch not divisible by heads", a.shape());
  const std::size_t B = a.dim(0) / H, S = a.dim(1), dk = a.dim(2), D = H * dk;
  std::vector<double> v(a.size());
  auto src = [=](std::size_t b, std::size_t h, std::size_t s, std::size_t k) { return ((b * H + h) * S + s) * dk + k; };
  auto dst = [=](std::size_t b, std::size_t h, std::size_t s, std::size_t k) { return (b * S + s) * D + h * dk + k; };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t k = 0; k < dk; ++k) v[dst(b, h, s, k)] = a.value()[src(b, h, s, k)];
  return make_result("merge_heads", {B, S, D}, std::move(v), {a}, [=](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t s = 0; s < S; ++s)
          for (std::size_t k = 0; k < dk; ++k) g[src(b, h, s, k)] += self.grad[dst(b, h, s, k)];
  });
}

// ---- spectral ops ------------------------------------------------------
// Complex arrays carry a trailing dimension of 2 (re, im).

/// (..., L) -> (..., M, 2), c_k = (1/L) Σ_j x_j e^{-2πikj/L}, k < M <= L/2+1.
inline Tensor rfft_rows(const Tensor& a, std::size_t M) {
  const std::size_t L = a.dim(-1), R = a.size() / L;
  if (M > L / 2 + 1) detail::fail("rfft_rows", "too many modes " + std::to_string(M) + " for", a.shape());
  const bool fast = L >= detail::kFftRowThreshold;
  const auto Tp = fast ? nullptr : detail::dft_table(L, M);
  Shape os = a.shape();
  os.back() = M;
  os.push_back(2);
  std::vector<double> v(R * M * 2);
  const double inv = 1.0 / double(L);
  for (std::size_t r = 0; r < R; ++r) {
    const double* x = a.value().data() + r * L;
    if (fast) {
      detail::row_r2c(x, L, M, inv, v.data() + r * M * 2);
      continue;
    }
    const auto& T = *Tp;
    for (std::size_t k = 0; k < M; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        re += x[j] * T.c[k * L + j];
        im -= x[j] * T.s[k * L + j];
      }
      v[(r * M + k) * 2] = re * inv;
      v[(r * M + k) * 2 + 1] = im * inv;
    }
  }
  return make_result("rfft_rows", os, std::move(v), {a}, [L, M, R, inv, fast, Tp](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    if (fast) {
      // g_j += inv Re Σ_k G_k e^{2πikj/L}: halve the modes row_c2r doubles.
      std::vector<double> h(M * 2), x(L);
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t k = 0; k < M; ++k) {
          const double w = (k == 0 || 2 * k == L) ? 1.0 : 0.5;
          h[2 * k] = w * self.grad[(r * M + k) * 2];
          h[2 * k + 1] = w * self.grad[(r * M + k) * 2 + 1];
        }
        detail::row_c2r(h.data(), L, M, inv, x.data());
        for (std::size_t j = 0; j < L; ++j) g[r * L + j] += x[j];
      }
      return;
    }
    const auto& T = *Tp;
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t k = 0; k < M; ++k) {
        const double gr = self.grad[(r * M + k) * 2] * inv, gi = self.grad[(r * M + k) * 2 + 1] * inv;
        for (std::size_t j = 0; j < L; ++j) g[r * L + j] += gr * T.c[k * L + j] - gi * T.s[k * L + j];
      }
  });
}

/// (..., M, 2) -> (..., L): x_j = Σ_k w_k Re(c_k e^{2πikj/L}), w = 1 for k = 0
/// and k = L/2, else 2. Inverse of rfft_rows on band-limited rows.
inline Tensor irfft_rows(const Tensor& c, std::size_t L) {
  if (c.rank() < 2 || c.dim(-1) != 2) detail::fail("irfft_rows", "expects trailing (modes, 2)", c.shape());
  const std::size_t M = c.dim(-2), R = c.size() / (2 * M);
  if (L % 2 || M > L / 2 + 1) detail::fail("irfft_rows", "bad output length " + std::to_string(L) + " for", c.shape());
  const bool fast = L >= detail::kFftRowThreshold;
  const auto Tp = fast ? nullptr : detail::dft_table(L, M);
  Shape os(c.shape().begin(), c.shape().end() - 2);
  os.push_back(L);
  std::vector<double> w(M, 2.0);
  w[0] = 1.0;
  if (M == L / 2 + 1) w[M - 1] = 1.0;
  std::vector<double> v(R * L, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    double* x = v.data() + r * L;
    if (fast) {
      detail::row_c2r(c.value().data() + r * M * 2, L, M, 1.0, x);
      continue;
    }
    const auto& T = *Tp;
    for (std::size_t k = 0; k < M; ++k) {
      const double re = w[k] * c.value()[(r * M + k) * 2], im = w[k] * c.value()[(r * M + k) * 2 + 1];
      for (std::size_t j = 0; j < L; ++j) x[j] += re * T.c[k * L + j] - im * T.s[k * L + j];
    }
  }
  return make_result("irfft_rows", os, std::move(v), {c}, [L, M, R, w, fast, Tp](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    if (fast) {
      std::vector<double> h(M * 2);
      for (std::size_t r = 0; r < R; ++r) {
        detail::row_r2c(self.grad.data() + r * L, L, M, 1.0, h.data());
        for (std::size_t k = 0; k < M; ++k) {
          g[(r * M + k) * 2] += w[k] * h[2 * k];
          g[(r * M + k) * 2 + 1] += w[k] * h[2 * k + 1];
        }
      }
      return;
    }
    const auto& T = *Tp;
    for (std::size_t r = 0; r < R; ++r) {
      const double* gx = self.grad.data() + r * L;
      for (std::size_t k = 0; k < M; ++k) {
        double gr = 0.0, gi = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          gr += gx[j] * T.c[k * L + j];
          gi -= gx[j] * T.s[k * L + j];
        }
        g[(r * M + k) * 2] += w[k] * gr;
        g[(r * M + k) * 2 + 1] += w[k] * gi;
      }
    }
  });
}

/// Crest position φ = -arg(c_1) of each row of a (..., M, 2) spectrum, M >= 2.
/// Rows with |c_1| below `tol` give φ = 0 and no gradient.
inline Tensor first_mode_phase(const Tensor& c, double tol = 1e-12) {
  if (c.rank() < 2 || c.dim(-1) != 2 || c.dim(-2) < 2)
    detail::fail("first_mode_phase", "expects (..., modes>=2, 2)", c.shape());
  const std::size_t M = c.dim(-2), R = c.size() / (2 * M);
  Shape os(c.shape().begin(), c.shape().end() - 2);
  std::vector<double> v(R, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    const double re = c.value()[(r * M + 1) * 2], im = c.value()[(r * M + 1) * 2 + 1];
    if (std::hypot(re, im) > tol) v[r] = -std::atan2(im, re);
  }
  return make_result("first_mode_phase", os, std::move(v), {c}, [M, R, tol](Node& self) {
    Node& C = *self.parents[0];
    auto& g = C.ensure_grad();
    for (std::size_t r = 0; r < R; ++r) {
      const double re = C.value[(r * M + 1) * 2], im = C.value[(r * M + 1) * 2 + 1];
      const double r2 = re * re + im * im;
      if (std::sqrt(r2) <= tol) continue;
      g[(r * M + 1) * 2] += self.grad[r] * im / r2;
      g[(r * M + 1) * 2 + 1] -= self.grad[r] * re / r2;
    }
  });
}

/// c_k e^{i sign k φ}. φ's shape must be a prefix of c's leading dimensions;
/// it is broadcast over the rest. sign = +1 aligns (shifts by -φ), -1 restores.
inline Tensor phase_rotate(const Tensor& c, const Tensor& phi, int sign) {
  if (c.rank() < 2 || c.dim(-1) != 2) detail::fail("phase_rotate", "expects trailing (modes, 2)", c.shape());
  const auto& cs = c.shape();
  const auto& ps = phi.shape();
  if (ps.size() > cs.size() - 2 || !std::equal(ps.begin(), ps.end(), cs.begin()))
    detail::fail("phase_rotate", "phase shape must prefix spectrum shape", ps, cs);
  const std::size_t M = c.dim(-2), R = c.size() / (2 * M), P = phi.size(), rep = R / P;
  std::vector<double> v(c.size());
  for (std::size_t r = 0; r < R; ++r) {
    const double f = phi.value()[r / rep];
    for (std::size_t k = 0; k < M; ++k) {
      const double a = double(sign) * double(k) * f, ca = std::cos(a), sa = std::sin(a);
      const double re = c.value()[(r * M + k) * 2], im = c.value()[(r * M + k) * 2 + 1];
      v[(r * M + k) * 2] = re * ca - im * sa;
      v[(r * M + k) * 2 + 1] = re * sa + im * ca;
    }
  }
  return make_result("phase_rotate", cs, std::move(v), {c, phi}, [M, R, rep, sign](Node& self) {
    Node& C = *self.parents[0];
    Node& F = *self.parents[1];
    for (std::size_t r = 0; r < R; ++r) {
      const double f = F.value[r / rep];
      double gphi = 0.0;
      for (std::size_t k = 0; k < M; ++k) {
        const double a = double(sign) * double(k) * f, ca = std::cos(a), sa = std::sin(a);
        const double gr = self.grad[(r * M + k) * 2], gi = self.grad[(r * M + k) * 2 + 1];
        if (C.requires_grad) {
          auto& g = C.ensure_grad();
          g[(r * M + k) * 2] += gr * ca + gi * sa;
          g[(r * M + k) * 2 + 1] += -gr * sa + gi * ca;
        }
        const double yr = self.value[(r * M + k) * 2], yi = self.value[(r * M + k) * 2 + 1];
        gphi += double(sign) * double(k) * (-gr * yi + gi * yr);
      }
      if (F.requires_grad) F.ensure_grad()[r / rep] += gphi;
    }
  });
}

/// Per-mode complex channel mixing y[b,o,k] = Σ_i W[k,i,o] x[b,i,k].
/// x: (B, Cin, Min, 2); W: (min(Min, Mout), Cin, Cout, 2). Modes of the
/// output beyond Min are zero (padding); input modes beyond Mout are dropped.
inline Tensor complex_mode_mix(const Tensor& x, const Tensor& W, std::size_t Mout) {
  if (x.rank() != 4 || x.dim(3) != 2 || W.rank() != 4 || W.dim(3) != 2 || W.dim(1) != x.dim(1) ||
      W.dim(0) != std::min(x.dim(2), Mout))
    detail::fail("complex_mode_mix", "incompatible input/weight", x.shape(), W.shape());
  const std::size_t B = x.dim(0), Ci = x.dim(1), Mi = x.dim(2), Co = W.dim(2), Mm = W.dim(0);
  auto xi = [=](std::size_t b, std::size_t i, std::size_t k) { return ((b * Ci + i) * Mi + k) * 2; };
  auto wi = [=](std::size_t k, std::size_t i, std::size_t o) { return ((k * Ci + i) * Co + o) * 2; };
  auto yi = [=](std::size_t b, std::size_t o, std::size_t k) { return ((b * Co + o) * Mout + k) * 2; };
  std::vector<double> v(B * Co * Mout * 2, 0.0);
  const double* X = x.value().data();
  const double* Wv = W.value().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < Mm; ++k)
      for (std::size_t o = 0; o < Co; ++o) {
        double re = 0.0, im = 0.0;
        for (std::size_t i = 0; i < Ci; ++i) {
          const double wr = Wv[wi(k, i, o)], wim = Wv[wi(k, i, o) + 1];
          const double xr = X[xi(b, i, k)], xim = X[xi(b, i, k) + 1];
          re += wr * xr - wim * xim;
          im += wr * xim + wim * xr;
        }
        v[yi(b, o, k)] = re;
        v[yi(b, o, k) + 1] = im;
      }
  return make_result("complex_mode_mix", {B, Co, Mout, 2}, std::move(v), {x, W}, [=](Node& self) {
    Node& Xn = *self.parents[0];
    Node& Wn = *self.parents[1];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < Mm; ++k)
        for (std::size_t o = 0; o < Co; ++o) {
          const double gr = self.grad[yi(b, o, k)], gi = self.grad[yi(b, o, k) + 1];
          for (std::size_t i = 0; i < Ci; ++i) {
            const double wr = Wn.value[wi(k, i, o)], wim = Wn.value[wi(k, i, o) + 1];
            const double xr = Xn.value[xi(b, i, k)], xim = Xn.value[xi(b, i, k) + 1];
            // ∂/∂x = conj(w) g, ∂/∂w = conj(x) g
            if (Xn.requires_grad) {
              auto& g = Xn.ensure_grad();
              g[xi(b, i, k)] += wr * gr + wim * gi;
              g[xi(b, i, k) + 1] += wr * gi - wim * gr;
            }
            if (Wn.requires_grad) {
              auto& g = Wn.ensure_grad();
              g[wi(k, i, o)] += xr * gr + xim * gi;
              g[wi(k, i, o) + 1] += xr * gi - xim * gr;
            }
          }
        }
  });
}

/// |c_k| for k = 0..L/2 with c_k = (1/L) Σ x_j e^{-2πikj/L}; (..., L) -> (..., L/2+1).
inline Tensor rfft_modulus(const Tensor& a) {
  const std::size_t L = a.dim(-1), M = L / 2 + 1, R = a.size() / L;
  const auto Tp = detail::dft_table(L, M);
  const auto& T = *Tp;
  Shape os = a.shape();
  os.back() = M;
  std::vector<double> v(R * M), re(R * M), im(R * M);
  const double inv = 1.0 / double(L);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t k = 0; k < M; ++k) {
      double sr = 0.0, si = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        sr += a.value()[r * L + j] * T.c[k * L + j];
        si -= a.value()[r * L + j] * T.s[k * L + j];
      }
      re[r * M + k] = sr * inv;
      im[r * M + k] = si * inv;
      v[r * M + k] = std::hypot(sr * inv, si * inv);
    }
  return make_result("rfft_modulus", os, std::move(v), {a},
                     [L, M, R, inv, re = std::move(re), im = std::move(im), Tp](Node& self) {
                       const auto& T = *Tp;
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t r = 0; r < R; ++r)
                         for (std::size_t k = 0; k < M; ++k) {
                           const double mod = self.value[r * M + k];
                           if (mod == 0.0) continue;  // subgradient 0
                           const double s = self.grad[r * M + k] * inv / mod;
                           const double cr = re[r * M + k] * s, ci = im[r * M + k] * s;
                           for (std::size_t j = 0; j < L; ++j) g[r * L + j] += cr * T.c[k * L + j] - ci * T.s[k * L + j];
                         }
                     });
}

/// Ensemble CRPS averaged over batch and features:
///   (1/m) Σ_i |e_i - t| - c Σ_i Σ_j |e_i - e_j|,
/// c = 1/(2m²), or 1/(2m(m-1)) when `fair` (m >= 2).
/// truth: (B, F); ens: (B, m, F).
inline Tensor crps_ensemble(const Tensor& truth, const Tensor& ens, bool fair = false) {
  if (truth.rank() != 2 || ens.rank() != 3 || ens.dim(0) != truth.dim(0) || ens.dim(2) != truth.dim(1))
    detail::fail("crps_ensemble", "expects truth (B,F) and ensemble (B,m,F)", truth.shape(), ens.shape());
  const std::size_t B = truth.dim(0), F = truth.dim(1), m = ens.dim(1);
  if (m == 0) throw ShapeError("crps_ensemble: empty ensemble");
  if (fair && m < 2) throw ShapeError("crps_ensemble: fair estimator needs m >= 2");
  const double c = fair ? 1.0 / (2.0 * double(m) * double(m - 1)) : 1.0 / (2.0 * double(m) * double(m));
  const double norm = 1.0 / double(B * F);
  const auto& t = truth.value();
  const auto& e = ens.value();
  auto ei = [=](std::size_t b, std::size_t i, std::size_t f) { return (b * m + i) * F + f; };
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f) {
      double skill = 0.0, spread = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        skill += std::abs(e[ei(b, i, f)] - t[b * F + f]);
        for (std::size_t j = 0; j < m; ++j) spread += std::abs(e[ei(b, i, f)] - e[ei(b, j, f)]);
      }
      total += skill / double(m) - c * spread;
    }
  return make_result("crps_ensemble", {}, {total * norm}, {truth, ens}, [=](Node& self) {
    Node& T = *self.parents[0];
    Node& E = *self.parents[1];
    const double g0 = self.grad[0] * norm;
    auto sgn = [](double x) { return double((x > 0.0) - (x < 0.0)); };
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f) {
        const double tv = T.value[b * F + f];
        double gt = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = E.value[ei(b, i, f)];
          gt -= sgn(x - tv) / double(m);
          if (E.requires_grad) {
            double ge = sgn(x - tv) / double(m);
            for (std::size_t j = 0; j < m; ++j) ge -= 2.0 * c * sgn(x - E.value[ei(b, j, f)]);
            E.ensure_grad()[ei(b, i, f)] += g0 * ge;
          }
        }
        if (T.requires_grad) T.ensure_grad()[b * F + f] += g0 * gt;
      }
  });
}

}  // namespace slt::ad
