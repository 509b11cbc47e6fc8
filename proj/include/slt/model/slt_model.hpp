#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "slt/autodiff/ops.hpp"
#include "slt/core/rng.hpp"
#include "slt/model/config.hpp"
#include "slt/model/tepc.hpp"

namespace slt::model {

using ad::Shape;
using ad::Tensor;

enum class ParamGroup { autoencoder, transformer };

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamGroup group;
};

struct BlockParams {
  Tensor wq, wk, wv, wo;  // (D, D), no bias
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;  // only with layer_norm
};

/// Optional capture of intermediate attention maps, one per block, each of
/// shape (B*H, S, S_kv).
struct AttentionTrace {
  std::vector<Tensor> weights;
};

/// Stochastic Latent Transformer. All tensors are in normalized units
/// (z-scores with the stored mean/std); encode/decode of raw profiles apply
/// the normalization.
class SltModel {
 public:
  explicit SltModel(const ModelConfig& cfg) : cfg_((cfg.validate(), cfg)) { init(); }

  const ModelConfig& config() const { return cfg_; }
  std::size_t ny() const { return std::size_t(cfg_.ny); }
  std::size_t latent_dim() const { return std::size_t(cfg_.latent_dim); }
  std::size_t history() const { return std::size_t(cfg_.history); }

  double norm_mean = 0.0;
  double norm_std = 1.0;

  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  Tensor& param(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p.tensor;
    throw ConfigError("model: no parameter '" + name + "'");
  }
  std::vector<Tensor> group(ParamGroup g) const {
    std::vector<Tensor> out;
    for (const auto& p : params_)
      if (p.group == g) out.push_back(p.tensor);
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  /// (N, ny) -> (N, D).
  Tensor encode(const Tensor& u) const {
    check_last("encode", u, ny());
    return tepc_stage(u, enc_w1_, enc_w2_, ny() / 2, ny(), latent_dim() / 2, latent_dim());
  }

  /// (N, D) -> (N, ny).
  Tensor decode(const Tensor& z) const {
    check_last("decode", z, latent_dim());
    return tepc_stage(z, dec_w1_, dec_w2_, ny() / 2, ny(), ny() / 2, ny());
  }

  /// One stochastic latent step. z_hist: (B, S, D) oldest first; eps: (B, D).
  Tensor transformer_forward(const Tensor& z_hist, const Tensor& eps, AttentionTrace* trace = nullptr) const {
    const std::size_t B = z_hist.dim(0), S = history(), D = latent_dim();
    if (z_hist.rank() != 3 || z_hist.dim(1) != S || z_hist.dim(2) != D)
      throw ShapeError("transformer_forward: history must be (B," + std::to_string(S) + "," + std::to_string(D) +
                       "), got " + ad::shape_str(z_hist.shape()));
    if (eps.shape() != Shape{B, D})
      throw ShapeError("transformer_forward: noise must be (B,D), got " + ad::shape_str(eps.shape()));
    const std::size_t M = D / 2;

    // Align every member by the phase of the newest one.
    const auto c = ad::rfft_rows(z_hist, M);
    const auto phi = ad::first_mode_phase(ad::reshape(ad::slice(c, 1, S - 1, 1), {B, M, 2}));
    auto x = ad::irfft_rows(ad::phase_rotate(c, phi, +1), D);
    x = ad::add_bias(x, time_embedding_);

    const auto noise = ad::reshape(eps, {B, 1, D});
    for (std::size_t i = 0; i < blocks_.size(); ++i) x = block_forward(blocks_[i], x, i == 0 ? &noise : nullptr, trace);

    auto h = ad::reshape(ad::slice(x, 1, S - 1, 1), {B, D});
    if (cfg_.layer_norm) h = ad::layer_norm(h, lnf_g_, lnf_b_);
    h = ad::add_bias(ad::matmul(ad::gelu(ad::add_bias(ad::matmul(h, head_w1_), head_b1_)), head_w2_), head_b2_);
    return ad::irfft_rows(ad::phase_rotate(ad::rfft_rows(h, M), phi, -1), D);
  }

 private:
  static void check_last(const char* op, const Tensor& t, std::size_t n) {
    if (t.rank() != 2 || t.dim(1) != n)
      throw ShapeError(std::string(op) + ": expected (N," + std::to_string(n) + "), got " + ad::shape_str(t.shape()));
  }

  // Plain residual block; with layer_norm the attention and feed-forward see
  // normalized inputs (pre-norm). The noise row is never normalized.
  Tensor block_forward(const BlockParams& p, const Tensor& x_in, const Tensor* noise, AttentionTrace* trace) const {
    const std::size_t H = std::size_t(cfg_.heads), dk = latent_dim() / H;
    const auto x = cfg_.layer_norm ? ad::layer_norm(x_in, p.ln1_g, p.ln1_b) : x_in;
    const auto kv = noise ? ad::concat({x, *noise}, 1) : x;
    const auto q = ad::split_heads(ad::matmul(x, p.wq), H);
    const auto k = ad::split_heads(ad::matmul(kv, p.wk), H);
    const auto v = ad::split_heads(ad::matmul(kv, p.wv), H);
    const auto a = ad::softmax_rows(ad::scale(ad::bmm_nt(q, k), 1.0 / std::sqrt(double(dk))));
    if (trace) trace->weights.push_back(a);
    const auto h = ad::add(x_in, ad::matmul(ad::merge_heads(ad::bmm(a, v), H), p.wo));
    const auto hn = cfg_.layer_norm ? ad::layer_norm(h, p.ln2_g, p.ln2_b) : h;
    const auto f = ad::add_bias(ad::matmul(ad::gelu(ad::add_bias(ad::matmul(hn, p.ff_w1), p.ff_b1)), p.ff_w2), p.ff_b2);
    return ad::add(h, f);
  }

  Tensor make(const std::string& name, Shape shape, double scale, ParamGroup g, Rng& rng) {
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = scale == 0.0 ? 0.0 : scale * standard_normal(rng);
    auto t = Tensor::from(std::move(shape), std::move(v), true);
    params_.push_back({name, t, g});
    return t;
  }

  void init() {
    Rng rng = stream_rng(cfg_.init_seed, 0);
    const std::size_t D = latent_dim(), L = ny(), C = std::size_t(cfg_.channels);
    const std::size_t F = std::size_t(cfg_.ff_width()), Hh = std::size_t(cfg_.head_width());
    const auto AE = ParamGroup::autoencoder, TR = ParamGroup::transformer;
    auto tepc_scale = [](std::size_t cin, std::size_t modes_in) { return 1.0 / std::sqrt(double(cin * modes_in)); };

    enc_w1_ = make("encoder.w1", {L / 2, 1, C, 2}, tepc_scale(1, L / 2), AE, rng);
    enc_w2_ = make("encoder.w2", {D / 2, C, 1, 2}, tepc_scale(C, L / 2), AE, rng);
    dec_w1_ = make("decoder.w1", {D / 2, 1, C, 2}, tepc_scale(1, D / 2), AE, rng);
    dec_w2_ = make("decoder.w2", {L / 2, C, 1, 2}, tepc_scale(C, L / 2), AE, rng);

    time_embedding_ = make("transformer.time_embedding", {history(), D}, 0.02, TR, rng);
    const double sd = 1.0 / std::sqrt(double(D));
    for (int b = 0; b < cfg_.blocks; ++b) {
      const std::string pre = "transformer.block" + std::to_string(b) + ".";
      BlockParams p;
      p.wq = make(pre + "wq", {D, D}, sd, TR, rng);
      p.wk = make(pre + "wk", {D, D}, sd, TR, rng);
      p.wv = make(pre + "wv", {D, D}, sd, TR, rng);
      p.wo = make(pre + "wo", {D, D}, sd, TR, rng);
      p.ff_w1 = make(pre + "ff_w1", {D, F}, sd, TR, rng);
      p.ff_b1 = make(pre + "ff_b1", {F}, 0.0, TR, rng);
      p.ff_w2 = make(pre + "ff_w2", {F, D}, 1.0 / std::sqrt(double(F)), TR, rng);
      p.ff_b2 = make(pre + "ff_b2", {D}, 0.0, TR, rng);
      if (cfg_.layer_norm) {
        p.ln1_g = make_const(pre + "ln1_g", D, 1.0, TR);
        p.ln1_b = make_const(pre + "ln1_b", D, 0.0, TR);
        p.ln2_g = make_const(pre + "ln2_g", D, 1.0, TR);
        p.ln2_b = make_const(pre + "ln2_b", D, 0.0, TR);
      }
      blocks_.push_back(p);
    }
    head_w1_ = make("transformer.head_w1", {D, Hh}, sd, TR, rng);
    head_b1_ = make("transformer.head_b1", {Hh}, 0.0, TR, rng);
    head_w2_ = make("transformer.head_w2", {Hh, D}, 1.0 / std::sqrt(double(Hh)), TR, rng);
    head_b2_ = make("transformer.head_b2", {D}, 0.0, TR, rng);
    if (cfg_.layer_norm) {
      lnf_g_ = make_const("transformer.lnf_g", D, 1.0, TR);
      lnf_b_ = make_const("transformer.lnf_b", D, 0.0, TR);
    }
  }

  Tensor make_const(const std::string& name, std::size_t n, double value, ParamGroup g) {
    auto t = Tensor::from({n}, std::vector<double>(n, value), true);
    params_.push_back({name, t, g});
    return t;
  }

  ModelConfig cfg_;
  std::vector<NamedParam> params_;
  Tensor enc_w1_, enc_w2_, dec_w1_, dec_w2_;
  Tensor time_embedding_;
  std::vector<BlockParams> blocks_;
  Tensor head_w1_, head_b1_, head_w2_, head_b2_;
  Tensor lnf_g_, lnf_b_;
};

}  // namespace slt::model
