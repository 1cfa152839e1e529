// seqconf/model.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Small pre-norm transformer encoder-decoder with hand-written backprop.
// Everything is templated on the scalar: experiments run in float, the
// finite-difference gradient suite instantiates double. All operations are
// single-sentence and deterministic; training loops over sentences and
// accumulates gradients, so the training-time forward pass is bit-identical
// to the inference one.

#ifndef SEQCONF_MODEL_HPP_
#define SEQCONF_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "seqconf/common.hpp"

namespace seqconf {

struct ModelConfig {
  int vocab = 0;
  int d = 64;
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 4;
  int d_ff = 128;
  int max_len = 64;  // decoding / teacher-forcing length cap (incl. <bos>)
};

struct TrainConfig {
  int steps = 2000;
  int batch_size = 32;
  double lr = 0.2;
  double clip = 1.0;  // global gradient-norm clip
  std::uint64_t seed = 1;
  int log_every = 0;  // 0 = silent
};

template <typename S>
struct LayerNormParams {
  Vec<S> gain, bias;
};

template <typename S>
struct AttentionParams {
  Mat<S> wq, wk, wv, wo;  // d×d
  Vec<S> bq, bk, bv, bo;
};

template <typename S>
struct FfnParams {
  Mat<S> w1;  // d×d_ff
  Vec<S> b1;
  Mat<S> w2;  // d_ff×d
  Vec<S> b2;
};

template <typename S>
struct EncLayerParams {
  LayerNormParams<S> ln1, ln2;
  AttentionParams<S> attn;
  FfnParams<S> ffn;
};

template <typename S>
struct DecLayerParams {
  LayerNormParams<S> ln1, ln2, ln3;
  AttentionParams<S> self_attn, cross_attn;
  FfnParams<S> ffn;
};

template <typename S>
struct ModelParams {
  ModelConfig config;
  Mat<S> embedding;  // vocab×d, shared by source and target side
  std::vector<EncLayerParams<S>> enc;
  LayerNormParams<S> enc_norm;
  std::vector<DecLayerParams<S>> dec;
  LayerNormParams<S> dec_norm;
  Mat<S> out_proj;  // vocab×d output projection
  Vec<S> out_bias;  // vocab
};

// ---------------------------------------------------------------------------
// Parameter enumeration (SGD step, norm clipping, serialization, fd checks)

template <typename S>
struct TensorView {
  std::string name;
  S* data;
  std::ptrdiff_t size;
};

template <typename S>
void collect_tensors(ModelParams<S>& p, std::vector<TensorView<S>>& out) {
  auto add = [&out](const std::string& name, auto& t) {
    out.push_back({name, t.data(), t.size()});
  };
  auto add_ln = [&](const std::string& pre, LayerNormParams<S>& ln) {
    add(pre + ".gain", ln.gain);
    add(pre + ".bias", ln.bias);
  };
  auto add_attn = [&](const std::string& pre, AttentionParams<S>& a) {
    add(pre + ".wq", a.wq);
    add(pre + ".bq", a.bq);
    add(pre + ".wk", a.wk);
    add(pre + ".bk", a.bk);
    add(pre + ".wv", a.wv);
    add(pre + ".bv", a.bv);
    add(pre + ".wo", a.wo);
    add(pre + ".bo", a.bo);
  };
  auto add_ffn = [&](const std::string& pre, FfnParams<S>& f) {
    add(pre + ".w1", f.w1);
    add(pre + ".b1", f.b1);
    add(pre + ".w2", f.w2);
    add(pre + ".b2", f.b2);
  };
  add("embedding", p.embedding);
  for (std::size_t i = 0; i < p.enc.size(); ++i) {
    std::string pre = "enc" + std::to_string(i);
    add_ln(pre + ".ln1", p.enc[i].ln1);
    add_attn(pre + ".attn", p.enc[i].attn);
    add_ln(pre + ".ln2", p.enc[i].ln2);
    add_ffn(pre + ".ffn", p.enc[i].ffn);
  }
  add_ln("enc_norm", p.enc_norm);
  for (std::size_t i = 0; i < p.dec.size(); ++i) {
    std::string pre = "dec" + std::to_string(i);
    add_ln(pre + ".ln1", p.dec[i].ln1);
    add_attn(pre + ".self", p.dec[i].self_attn);
    add_ln(pre + ".ln2", p.dec[i].ln2);
    add_attn(pre + ".cross", p.dec[i].cross_attn);
    add_ln(pre + ".ln3", p.dec[i].ln3);
    add_ffn(pre + ".ffn", p.dec[i].ffn);
  }
  add_ln("dec_norm", p.dec_norm);
  add("out_proj", p.out_proj);
  add("out_bias", p.out_bias);
}

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

template <typename S>
void fill_uniform(Mat<S>& m, Rng& rng, double limit) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      m(r, c) = static_cast<S>(rng.uniform(-limit, limit));
}

template <typename S>
void init_ln(LayerNormParams<S>& ln, int d) {
  ln.gain = Vec<S>::Ones(d);
  ln.bias = Vec<S>::Zero(d);
}

template <typename S>
void init_attn(AttentionParams<S>& a, int d, Rng& rng) {
  double lim = std::sqrt(6.0 / (d + d));
  a.wq.resize(d, d);
  a.wk.resize(d, d);
  a.wv.resize(d, d);
  a.wo.resize(d, d);
  fill_uniform(a.wq, rng, lim);
  fill_uniform(a.wk, rng, lim);
  fill_uniform(a.wv, rng, lim);
  fill_uniform(a.wo, rng, lim);
  a.bq = Vec<S>::Zero(d);
  a.bk = Vec<S>::Zero(d);
  a.bv = Vec<S>::Zero(d);
  a.bo = Vec<S>::Zero(d);
}

template <typename S>
void init_ffn(FfnParams<S>& f, int d, int d_ff, Rng& rng) {
  double lim = std::sqrt(6.0 / (d + d_ff));
  f.w1.resize(d, d_ff);
  f.w2.resize(d_ff, d);
  fill_uniform(f.w1, rng, lim);
  fill_uniform(f.w2, rng, lim);
  f.b1 = Vec<S>::Zero(d_ff);
  f.b2 = Vec<S>::Zero(d);
}

}  // namespace detail

template <typename S>
ModelParams<S> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  require(cfg.vocab >= 4, "model vocab must include specials");
  require(cfg.d % cfg.heads == 0, "state width must be divisible by head count");
  ModelParams<S> p;
  p.config = cfg;
  Rng rng(seed, "model/init");
  p.embedding.resize(cfg.vocab, cfg.d);
  detail::fill_uniform(p.embedding, rng, std::sqrt(3.0 / cfg.d));
  p.enc.resize(cfg.enc_layers);
  for (auto& layer : p.enc) {
    detail::init_ln(layer.ln1, cfg.d);
    detail::init_attn(layer.attn, cfg.d, rng);
    detail::init_ln(layer.ln2, cfg.d);
    detail::init_ffn(layer.ffn, cfg.d, cfg.d_ff, rng);
  }
  detail::init_ln(p.enc_norm, cfg.d);
  p.dec.resize(cfg.dec_layers);
  for (auto& layer : p.dec) {
    detail::init_ln(layer.ln1, cfg.d);
    detail::init_attn(layer.self_attn, cfg.d, rng);
    detail::init_ln(layer.ln2, cfg.d);
    detail::init_attn(layer.cross_attn, cfg.d, rng);
    detail::init_ln(layer.ln3, cfg.d);
    detail::init_ffn(layer.ffn, cfg.d, cfg.d_ff, rng);
  }
  detail::init_ln(p.dec_norm, cfg.d);
  p.out_proj.resize(cfg.vocab, cfg.d);
  // Kept tiny so an untrained model emits a near-uniform softmax.
  detail::fill_uniform(p.out_proj, rng, 0.002);
  p.out_bias = Vec<S>::Zero(cfg.vocab);
  return p;
}

template <typename S>
ModelParams<S> zeros_like(const ModelParams<S>& p) {
  ModelParams<S> z;
  z.config = p.config;
  z.embedding = Mat<S>::Zero(p.embedding.rows(), p.embedding.cols());
  auto zero_ln = [](const LayerNormParams<S>& ln) {
    return LayerNormParams<S>{Vec<S>::Zero(ln.gain.size()), Vec<S>::Zero(ln.bias.size())};
  };
  auto zero_attn = [](const AttentionParams<S>& a) {
    AttentionParams<S> o;
    o.wq = Mat<S>::Zero(a.wq.rows(), a.wq.cols());
    o.wk = Mat<S>::Zero(a.wk.rows(), a.wk.cols());
    o.wv = Mat<S>::Zero(a.wv.rows(), a.wv.cols());
    o.wo = Mat<S>::Zero(a.wo.rows(), a.wo.cols());
    o.bq = Vec<S>::Zero(a.bq.size());
    o.bk = Vec<S>::Zero(a.bk.size());
    o.bv = Vec<S>::Zero(a.bv.size());
    o.bo = Vec<S>::Zero(a.bo.size());
    return o;
  };
  auto zero_ffn = [](const FfnParams<S>& f) {
    FfnParams<S> o;
    o.w1 = Mat<S>::Zero(f.w1.rows(), f.w1.cols());
    o.w2 = Mat<S>::Zero(f.w2.rows(), f.w2.cols());
    o.b1 = Vec<S>::Zero(f.b1.size());
    o.b2 = Vec<S>::Zero(f.b2.size());
    return o;
  };
  for (const auto& l : p.enc)
    z.enc.push_back({zero_ln(l.ln1), zero_ln(l.ln2), zero_attn(l.attn), zero_ffn(l.ffn)});
  z.enc_norm = zero_ln(p.enc_norm);
  for (const auto& l : p.dec)
    z.dec.push_back({zero_ln(l.ln1), zero_ln(l.ln2), zero_ln(l.ln3), zero_attn(l.self_attn),
                     zero_attn(l.cross_attn), zero_ffn(l.ffn)});
  z.dec_norm = zero_ln(p.dec_norm);
  z.out_proj = Mat<S>::Zero(p.out_proj.rows(), p.out_proj.cols());
  z.out_bias = Vec<S>::Zero(p.out_bias.size());
  return z;
}

// ---------------------------------------------------------------------------
// Primitive forward/backward blocks

namespace detail {

constexpr double kLnEps = 1e-5;

// Sinusoidal position encoding, rows 0..len-1.
template <typename S>
Mat<S> position_encoding(int len, int d) {
  Mat<S> pe(len, d);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < d; i += 2) {
      double rate = std::pow(10000.0, -static_cast<double>(i) / d);
      pe(pos, i) = static_cast<S>(std::sin(pos * rate));
      if (i + 1 < d) pe(pos, i + 1) = static_cast<S>(std::cos(pos * rate));
    }
  }
  return pe;
}

template <typename S>
struct LnCache {
  Mat<S> xhat;     // normalized rows
  Vec<S> inv_std;  // per row
};

template <typename S>
Mat<S> layer_norm_fwd(const Mat<S>& x, const LayerNormParams<S>& ln, LnCache<S>& cache) {
  const Eigen::Index rows = x.rows(), d = x.cols();
  cache.xhat.resize(rows, d);
  cache.inv_std.resize(rows);
  Mat<S> y(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r) {
    S mu = x.row(r).mean();
    auto centered = (x.row(r).array() - mu).eval();
    S var = centered.square().mean();
    S inv = S(1) / std::sqrt(var + static_cast<S>(kLnEps));
    cache.inv_std(r) = inv;
    cache.xhat.row(r) = centered * inv;
    y.row(r) = cache.xhat.row(r).array() * ln.gain.transpose().array() +
               ln.bias.transpose().array();
  }
  return y;
}

template <typename S>
Mat<S> layer_norm_bwd(const Mat<S>& dy, const LayerNormParams<S>& ln, const LnCache<S>& cache,
                      LayerNormParams<S>& grad) {
  const Eigen::Index rows = dy.rows(), d = dy.cols();
  Mat<S> dx(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto xhat = cache.xhat.row(r).array();
    auto dyr = dy.row(r).array();
    grad.gain.array() += (dyr * xhat).transpose();
    grad.bias.array() += dyr.transpose();
    auto dxhat = (dyr * ln.gain.transpose().array()).eval();
    S m1 = dxhat.mean();
    S m2 = (dxhat * xhat).mean();
    dx.row(r) = cache.inv_std(r) * (dxhat - m1 - xhat * m2);
  }
  return dx;
}

// Y = X*W + b (row-wise bias)
template <typename S>
Mat<S> linear_fwd(const Mat<S>& x, const Mat<S>& w, const Vec<S>& b) {
  return (x * w).rowwise() + b.transpose();
}

template <typename S>
Mat<S> linear_bwd(const Mat<S>& x, const Mat<S>& w, const Mat<S>& dy, Mat<S>& dw, Vec<S>& db) {
  dw.noalias() += x.transpose() * dy;
  db.noalias() += dy.colwise().sum().transpose();
  return dy * w.transpose();
}

template <typename S>
struct AttnCache {
  Mat<S> xq, xkv;          // inputs to the projections
  Mat<S> q, k, v;          // projected, heads concatenated
  std::vector<Mat<S>> a;   // per-head softmax, Lq×Lk
  Mat<S> concat;           // pre-output-projection
};

// Multi-head attention; causal masks strictly-future keys of the query row.
template <typename S>
Mat<S> attention_fwd(const Mat<S>& xq, const Mat<S>& xkv, const AttentionParams<S>& p, int heads,
                     bool causal, AttnCache<S>& cache) {
  const Eigen::Index d = xq.cols();
  const Eigen::Index dk = d / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dk)));
  cache.xq = xq;
  cache.xkv = xkv;
  cache.q = linear_fwd(xq, p.wq, p.bq);
  cache.k = linear_fwd(xkv, p.wk, p.bk);
  cache.v = linear_fwd(xkv, p.wv, p.bv);
  const Eigen::Index lq = xq.rows(), lk = xkv.rows();
  cache.a.assign(heads, Mat<S>());
  cache.concat.resize(lq, d);
  for (int h = 0; h < heads; ++h) {
    auto qh = cache.q.middleCols(h * dk, dk);
    auto kh = cache.k.middleCols(h * dk, dk);
    auto vh = cache.v.middleCols(h * dk, dk);
    Mat<S> z = qh * kh.transpose() * scale;
    if (causal) {
      for (Eigen::Index i = 0; i < lq; ++i)
        for (Eigen::Index j = i + 1; j < lk; ++j)
          z(i, j) = -std::numeric_limits<S>::infinity();
    }
    Mat<S>& a = cache.a[h];
    a.resize(lq, lk);
    for (Eigen::Index i = 0; i < lq; ++i) {
      S zmax = z.row(i).maxCoeff();
      auto e = (z.row(i).array() - zmax).exp().eval();
      a.row(i) = e / e.sum();
    }
    cache.concat.middleCols(h * dk, dk).noalias() = a * vh;
  }
  return linear_fwd(cache.concat, p.wo, p.bo);
}

// Returns dXq; accumulates dXkv into its argument (self-attention callers pass
// the same matrix logically, so they add the two).
template <typename S>
Mat<S> attention_bwd(const Mat<S>& dy, const AttentionParams<S>& p, int heads,
                     const AttnCache<S>& cache, AttentionParams<S>& grad, Mat<S>& dxkv) {
  const Eigen::Index d = cache.xq.cols();
  const Eigen::Index dk = d / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dk)));
  Mat<S> dconcat = linear_bwd(cache.concat, p.wo, dy, grad.wo, grad.bo);
  Mat<S> dq = Mat<S>::Zero(cache.q.rows(), d);
  Mat<S> dk_full = Mat<S>::Zero(cache.k.rows(), d);
  Mat<S> dv = Mat<S>::Zero(cache.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    auto qh = cache.q.middleCols(h * dk, dk);
    auto kh = cache.k.middleCols(h * dk, dk);
    auto vh = cache.v.middleCols(h * dk, dk);
    const Mat<S>& a = cache.a[h];
    auto doh = dconcat.middleCols(h * dk, dk);
    Mat<S> da = doh * vh.transpose();
    dv.middleCols(h * dk, dk).noalias() += a.transpose() * doh;
    // softmax backward per row
    Mat<S> dz(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      S dot = a.row(i).dot(da.row(i));
      dz.row(i) = a.row(i).array() * (da.row(i).array() - dot);
    }
    dq.middleCols(h * dk, dk).noalias() += dz * kh * scale;
    dk_full.middleCols(h * dk, dk).noalias() += dz.transpose() * qh * scale;
  }
  Mat<S> dxq = linear_bwd(cache.xq, p.wq, dq, grad.wq, grad.bq);
  dxkv.noalias() += linear_bwd(cache.xkv, p.wk, dk_full, grad.wk, grad.bk);
  dxkv.noalias() += linear_bwd(cache.xkv, p.wv, dv, grad.wv, grad.bv);
  return dxq;
}

template <typename S>
struct FfnCache {
  Mat<S> input;  // LN output fed to w1
  Mat<S> h;      // post-relu
};

template <typename S>
Mat<S> ffn_fwd(const Mat<S>& x, const FfnParams<S>& p, FfnCache<S>& cache) {
  cache.input = x;
  cache.h = linear_fwd(x, p.w1, p.b1).cwiseMax(S(0));
  return linear_fwd(cache.h, p.w2, p.b2);
}

template <typename S>
Mat<S> ffn_bwd(const Mat<S>& dy, const FfnParams<S>& p, const FfnCache<S>& cache,
               FfnParams<S>& grad) {
  Mat<S> dh = linear_bwd(cache.h, p.w2, dy, grad.w2, grad.b2);
  dh = (cache.h.array() > S(0)).select(dh, Mat<S>::Zero(dh.rows(), dh.cols()));
  return linear_bwd(cache.input, p.w1, dh, grad.w1, grad.b1);
}

template <typename S>
struct EncLayerCache {
  LnCache<S> ln1, ln2;
  AttnCache<S> attn;
  FfnCache<S> ffn;
};

template <typename S>
struct DecLayerCache {
  LnCache<S> ln1, ln2, ln3;
  AttnCache<S> self_attn, cross_attn;
  FfnCache<S> ffn;
};

template <typename S>
struct EncTrace {
  std::vector<int> ids;
  std::vector<EncLayerCache<S>> layers;
  LnCache<S> final_ln;
};

template <typename S>
struct DecTrace {
  std::vector<int> ids;  // decoder input ids (<bos> + target prefix)
  std::vector<DecLayerCache<S>> layers;
  LnCache<S> final_ln;
};

template <typename S>
Mat<S> embed_fwd(const ModelParams<S>& p, const std::vector<int>& ids) {
  const int d = p.config.d;
  const S emb_scale = static_cast<S>(std::sqrt(static_cast<double>(d)));
  Mat<S> x(static_cast<Eigen::Index>(ids.size()), d);
  Mat<S> pe = position_encoding<S>(static_cast<int>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < p.config.vocab, "token id out of range");
    x.row(static_cast<Eigen::Index>(i)) =
        p.embedding.row(ids[i]) * emb_scale + pe.row(static_cast<Eigen::Index>(i));
  }
  return x;
}

template <typename S>
void embed_bwd(const ModelParams<S>& p, const std::vector<int>& ids, const Mat<S>& dx,
               ModelParams<S>& grad) {
  const S emb_scale = static_cast<S>(std::sqrt(static_cast<double>(p.config.d)));
  for (std::size_t i = 0; i < ids.size(); ++i)
    grad.embedding.row(ids[i]) += dx.row(static_cast<Eigen::Index>(i)) * emb_scale;
}

template <typename S>
Mat<S> encoder_fwd(const ModelParams<S>& p, const std::vector<int>& ids, EncTrace<S>& trace) {
  trace.ids = ids;
  trace.layers.resize(p.enc.size());
  Mat<S> x = embed_fwd(p, ids);
  for (std::size_t l = 0; l < p.enc.size(); ++l) {
    auto& cache = trace.layers[l];
    const auto& layer = p.enc[l];
    Mat<S> n1 = layer_norm_fwd(x, layer.ln1, cache.ln1);
    x += attention_fwd(n1, n1, layer.attn, p.config.heads, /*causal=*/false, cache.attn);
    Mat<S> n2 = layer_norm_fwd(x, layer.ln2, cache.ln2);
    x += ffn_fwd(n2, layer.ffn, cache.ffn);
  }
  return layer_norm_fwd(x, p.enc_norm, trace.final_ln);
}

// Backward from dE through the encoder stack into parameter grads.
template <typename S>
void encoder_bwd(const ModelParams<S>& p, const EncTrace<S>& trace, const Mat<S>& dE,
                 ModelParams<S>& grad) {
  Mat<S> dx = layer_norm_bwd(dE, p.enc_norm, trace.final_ln, grad.enc_norm);
  for (std::size_t li = p.enc.size(); li-- > 0;) {
    const auto& layer = p.enc[li];
    const auto& cache = trace.layers[li];
    auto& g = grad.enc[li];
    Mat<S> dn2 = ffn_bwd(dx, layer.ffn, cache.ffn, g.ffn);
    dx += layer_norm_bwd(dn2, layer.ln2, cache.ln2, g.ln2);
    Mat<S> dkv = Mat<S>::Zero(dx.rows(), dx.cols());
    Mat<S> dn1 = attention_bwd(dx, layer.attn, p.config.heads, cache.attn, g.attn, dkv);
    dn1 += dkv;
    dx += layer_norm_bwd(dn1, layer.ln1, cache.ln1, g.ln1);
  }
  embed_bwd(p, trace.ids, dx, grad);
}

// Decoder over an explicit encoder-state matrix E (so callers can substitute
// reconstructed states). Returns final-LN states, one per input row.
template <typename S>
Mat<S> decoder_fwd(const ModelParams<S>& p, const Mat<S>& E, const std::vector<int>& ids,
                   DecTrace<S>& trace) {
  require(E.cols() == p.config.d, "encoder state width mismatch");
  trace.ids = ids;
  trace.layers.resize(p.dec.size());
  Mat<S> x = embed_fwd(p, ids);
  for (std::size_t l = 0; l < p.dec.size(); ++l) {
    auto& cache = trace.layers[l];
    const auto& layer = p.dec[l];
    Mat<S> n1 = layer_norm_fwd(x, layer.ln1, cache.ln1);
    x += attention_fwd(n1, n1, layer.self_attn, p.config.heads, /*causal=*/true,
                       cache.self_attn);
    Mat<S> n2 = layer_norm_fwd(x, layer.ln2, cache.ln2);
    x += attention_fwd(n2, E, layer.cross_attn, p.config.heads, /*causal=*/false,
                       cache.cross_attn);
    Mat<S> n3 = layer_norm_fwd(x, layer.ln3, cache.ln3);
    x += ffn_fwd(n3, layer.ffn, cache.ffn);
  }
  return layer_norm_fwd(x, p.dec_norm, trace.final_ln);
}

// Backward from d(states); accumulates dE for the encoder chain.
template <typename S>
void decoder_bwd(const ModelParams<S>& p, const DecTrace<S>& trace, const Mat<S>& dstates,
                 ModelParams<S>& grad, Mat<S>& dE) {
  Mat<S> dx = layer_norm_bwd(dstates, p.dec_norm, trace.final_ln, grad.dec_norm);
  for (std::size_t li = p.dec.size(); li-- > 0;) {
    const auto& layer = p.dec[li];
    const auto& cache = trace.layers[li];
    auto& g = grad.dec[li];
    Mat<S> dn3 = ffn_bwd(dx, layer.ffn, cache.ffn, g.ffn);
    dx += layer_norm_bwd(dn3, layer.ln3, cache.ln3, g.ln3);
    Mat<S> dn2 = attention_bwd(dx, layer.cross_attn, p.config.heads, cache.cross_attn,
                               g.cross_attn, dE);
    dx += layer_norm_bwd(dn2, layer.ln2, cache.ln2, g.ln2);
    Mat<S> dkv = Mat<S>::Zero(dx.rows(), dx.cols());
    Mat<S> dn1 =
        attention_bwd(dx, layer.self_attn, p.config.heads, cache.self_attn, g.self_attn, dkv);
    dn1 += dkv;
    dx += layer_norm_bwd(dn1, layer.ln1, cache.ln1, g.ln1);
  }
  embed_bwd(p, trace.ids, dx, grad);
}

template <typename S>
Vec<S> softmax_row(const Vec<S>& z) {
  S zmax = z.maxCoeff();
  Vec<S> e = (z.array() - zmax).exp();
  return e / e.sum();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations

// Encoder states E, one row per source subword (top layer, final norm).
template <typename S>
Mat<S> encode(const ModelParams<S>& p, const std::vector<int>& src_ids) {
  require(!src_ids.empty(), "encode: empty input");
  require(static_cast<int>(src_ids.size()) <= p.config.max_len,
          "encode: input length exceeds configured maximum");
  detail::EncTrace<S> trace;
  return detail::encoder_fwd(p, src_ids, trace);
}

template <typename S>
struct ForcedDecode {
  Mat<S> states;              // J×d, row i predicts target subword i
  Mat<S> softmax;             // J×vocab, full posterior rows
  std::vector<double> probs;  // realized-token posteriors p_i, in (0,1]
  double eos_prob = 0;        // p(<eos> | source, full target)
  double total_log_prob = 0;  // sum of log p_i plus the <eos> term
};

// Realized-token posteriors for given decoder states; the single softmax
// path shared by plain and reconstruction-substituted scoring.
template <typename S>
void posteriors_from_states(const ModelParams<S>& p, const Mat<S>& states,
                            const std::vector<int>& tgt_ids, Mat<S>& softmax_out,
                            std::vector<double>& probs_out) {
  const Eigen::Index j = states.rows();
  require(j == static_cast<Eigen::Index>(tgt_ids.size()),
          "state row count must match target length");
  softmax_out.resize(j, p.config.vocab);
  probs_out.resize(tgt_ids.size());
  for (Eigen::Index i = 0; i < j; ++i) {
    Vec<S> logits = p.out_proj * states.row(i).transpose() + p.out_bias;
    Vec<S> sm = detail::softmax_row(logits);
    softmax_out.row(i) = sm.transpose();
    probs_out[static_cast<std::size_t>(i)] = static_cast<double>(sm(tgt_ids[i]));
  }
}

// Teacher-forced decode against an explicit encoder-state matrix.
template <typename S>
ForcedDecode<S> decode_forced(const ModelParams<S>& p, const Mat<S>& E,
                              const std::vector<int>& tgt_ids) {
  require(!tgt_ids.empty(), "decode_forced: empty target");
  require(static_cast<int>(tgt_ids.size()) + 1 <= p.config.max_len,
          "decode_forced: target length exceeds configured maximum");
  std::vector<int> input;
  input.reserve(tgt_ids.size() + 1);
  input.push_back(1 /*<bos>*/);
  input.insert(input.end(), tgt_ids.begin(), tgt_ids.end());
  detail::DecTrace<S> trace;
  Mat<S> all_states = detail::decoder_fwd(p, E, input, trace);

  ForcedDecode<S> out;
  const Eigen::Index j = static_cast<Eigen::Index>(tgt_ids.size());
  out.states = all_states.topRows(j);
  posteriors_from_states(p, out.states, tgt_ids, out.softmax, out.probs);
  Vec<S> eos_logits = p.out_proj * all_states.row(j).transpose() + p.out_bias;
  Vec<S> eos_sm = detail::softmax_row(eos_logits);
  out.eos_prob = static_cast<double>(eos_sm(2 /*<eos>*/));
  out.total_log_prob = std::log(out.eos_prob);
  for (double pr : out.probs) out.total_log_prob += std::log(pr);
  return out;
}

struct Hypothesis {
  std::vector<int> token_ids;  // ends with <eos> when reached_eos
  double model_score = 0;      // sum of log-probabilities, no length normalization
  bool reached_eos = false;
  int beam_width = 1;
  std::vector<double> step_probs;  // per emitted token, <eos> included
};

namespace detail {

// Next-token posterior after the given prefix, as doubles (the same values a
// later forced decode of the full hypothesis reproduces bit-exactly).
template <typename S>
Eigen::VectorXd next_token_probs(const ModelParams<S>& p, const Mat<S>& E,
                                 const std::vector<int>& prefix) {
  std::vector<int> input;
  input.reserve(prefix.size() + 1);
  input.push_back(1 /*<bos>*/);
  input.insert(input.end(), prefix.begin(), prefix.end());
  DecTrace<S> trace;
  Mat<S> states = decoder_fwd(p, E, input, trace);
  Vec<S> logits = p.out_proj * states.row(states.rows() - 1).transpose() + p.out_bias;
  return softmax_row(logits).template cast<double>();
}

}  // namespace detail

template <typename S>
Hypothesis greedy_decode(const ModelParams<S>& p, const std::vector<int>& src_ids) {
  Mat<S> E = encode(p, src_ids);
  Hypothesis hyp;
  hyp.beam_width = 1;
  std::vector<int> prefix;
  for (int step = 0; step + 1 < p.config.max_len; ++step) {
    Eigen::VectorXd probs = detail::next_token_probs(p, E, prefix);
    int best = 0;
    for (int v = 1; v < probs.size(); ++v)
      if (probs(v) > probs(best)) best = v;  // ties keep the smaller id
    hyp.model_score += std::log(probs(best));
    hyp.step_probs.push_back(probs(best));
    hyp.token_ids.push_back(best);
    if (best == 2 /*<eos>*/) {
      hyp.reached_eos = true;
      break;
    }
    prefix.push_back(best);
  }
  return hyp;
}

// Beam search without length normalization. The greedy hypothesis is always
// admitted to the completed pool, so beam(w).model_score >= greedy score and
// beam(1) coincides with greedy decoding exactly.
template <typename S>
Hypothesis beam_decode(const ModelParams<S>& p, const std::vector<int>& src_ids, int width) {
  require(width >= 1, "beam width must be >= 1");
  Hypothesis greedy = greedy_decode(p, src_ids);
  if (width == 1) return greedy;

  Mat<S> E = encode(p, src_ids);
  struct Item {
    std::vector<int> ids;
    double score = 0;
    std::vector<double> probs;
  };
  std::vector<Item> active{Item{}};
  std::vector<Item> completed;  // insertion order breaks score ties

  for (int step = 0; step + 1 < p.config.max_len && !active.empty(); ++step) {
    struct Cand {
      double score;
      int item;
      int token;
    };
    std::vector<Cand> cands;
    std::vector<Eigen::VectorXd> probs(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      probs[i] = detail::next_token_probs(p, E, active[i].ids);
      for (int v = 0; v < probs[i].size(); ++v)
        cands.push_back({active[i].score + std::log(probs[i](v)), static_cast<int>(i), v});
    }
    std::size_t keep = std::min<std::size_t>(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.item != b.item) return a.item < b.item;
                        return a.token < b.token;
                      });
    std::vector<Item> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Cand& cand = cands[c];
      Item item = active[cand.item];
      item.ids.push_back(cand.token);
      item.score = cand.score;
      item.probs.push_back(probs[cand.item](cand.token));
      if (cand.token == 2 /*<eos>*/) {
        completed.push_back(std::move(item));
      } else {
        next.push_back(std::move(item));
      }
    }
    active = std::move(next);
    if (!completed.empty()) {
      double best_completed = completed[0].score;
      for (const auto& it : completed) best_completed = std::max(best_completed, it.score);
      bool improvable = false;
      for (const auto& it : active)
        if (it.score > best_completed) improvable = true;
      if (!improvable) break;  // scores only decrease with length
    }
  }

  if (greedy.reached_eos) {
    completed.push_back(Item{greedy.token_ids, greedy.model_score, greedy.step_probs});
  }
  Hypothesis hyp;
  hyp.beam_width = width;
  if (!completed.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < completed.size(); ++i)
      if (completed[i].score > completed[best].score) best = i;
    hyp.token_ids = completed[best].ids;
    hyp.model_score = completed[best].score;
    hyp.step_probs = completed[best].probs;
    hyp.reached_eos = true;
    return hyp;
  }
  // Nothing reached <eos> within max_len: fall back to the better of the
  // truncated beam front and the truncated greedy path.
  const Item* best = nullptr;
  for (const auto& it : active)
    if (!best || it.score > best->score) best = &it;
  if (best && best->score > greedy.model_score) {
    hyp.token_ids = best->ids;
    hyp.model_score = best->score;
    hyp.step_probs = best->probs;
    hyp.reached_eos = false;
    return hyp;
  }
  greedy.beam_width = width;
  return greedy;
}

// ---------------------------------------------------------------------------
// Training

using IdPair = std::pair<std::vector<int>, std::vector<int>>;  // (src, tgt) subword ids

// Mean teacher-forced cross-entropy per predicted token (<eos> included).
template <typename S>
double batch_loss(const ModelParams<S>& p, const std::vector<IdPair>& batch) {
  double total = 0;
  long tokens = 0;
  for (const auto& [src, tgt] : batch) {
    Mat<S> E = encode(p, src);
    ForcedDecode<S> fd = decode_forced(p, E, tgt);
    total -= fd.total_log_prob;
    tokens += static_cast<long>(tgt.size()) + 1;
  }
  return total / static_cast<double>(tokens);
}

// Same loss with gradient accumulation into `grad` (which must be zeroed by
// the caller); returns the loss.
template <typename S>
double batch_loss_and_grad(const ModelParams<S>& p, const std::vector<IdPair>& batch,
                           ModelParams<S>& grad) {
  double total = 0;
  long tokens = 0;
  for (const auto& [src, tgt] : batch) tokens += static_cast<long>(tgt.size()) + 1;
  const S inv_tokens = static_cast<S>(1.0 / static_cast<double>(tokens));

  for (const auto& [src, tgt] : batch) {
    detail::EncTrace<S> enc_trace;
    Mat<S> E = detail::encoder_fwd(p, src, enc_trace);

    std::vector<int> input;
    input.push_back(1 /*<bos>*/);
    input.insert(input.end(), tgt.begin(), tgt.end());
    std::vector<int> targets = tgt;
    targets.push_back(2 /*<eos>*/);

    detail::DecTrace<S> dec_trace;
    Mat<S> states = detail::decoder_fwd(p, E, input, dec_trace);

    Mat<S> dstates(states.rows(), states.cols());
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
      Vec<S> logits = p.out_proj * states.row(i).transpose() + p.out_bias;
      Vec<S> sm = detail::softmax_row(logits);
      total -= std::log(static_cast<double>(sm(targets[i])));
      Vec<S> dlogits = sm * inv_tokens;
      dlogits(targets[i]) -= inv_tokens;
      grad.out_proj.noalias() += dlogits * states.row(i);
      grad.out_bias += dlogits;
      dstates.row(i) = (p.out_proj.transpose() * dlogits).transpose();
    }

    Mat<S> dE = Mat<S>::Zero(E.rows(), E.cols());
    detail::decoder_bwd(p, dec_trace, dstates, grad, dE);
    detail::encoder_bwd(p, enc_trace, dE, grad);
  }
  return total / static_cast<double>(tokens);
}

template <typename S>
struct TrainResult {
  ModelParams<S> params;
  double final_dev_ce = 0;
  std::vector<double> step_losses;
};

// Plain mini-batch gradient descent with a fixed step size and global
// gradient-norm clipping; single-threaded and deterministic per seed.
template <typename S>
TrainResult<S> train_model(const std::vector<IdPair>& train_pairs,
                           const std::vector<IdPair>& dev_pairs, const ModelConfig& mcfg,
                           const TrainConfig& tcfg) {
  require(!train_pairs.empty(), "empty training set");
  TrainResult<S> result;
  result.params = init_model<S>(mcfg, tcfg.seed);
  if (tcfg.steps == 0) {
    if (!dev_pairs.empty()) result.final_dev_ce = batch_loss(result.params, dev_pairs);
    return result;
  }
  ModelParams<S> grad = zeros_like(result.params);
  std::vector<TensorView<S>> grad_views;
  collect_tensors(grad, grad_views);
  std::vector<TensorView<S>> param_views;
  collect_tensors(result.params, param_views);

  Rng order_rng(tcfg.seed, "model/batches");
  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(order);
  std::size_t cursor = 0;

  for (int step = 0; step < tcfg.steps; ++step) {
    std::vector<IdPair> batch;
    for (int b = 0; b < tcfg.batch_size; ++b) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(train_pairs[order[cursor++]]);
    }
    for (auto& view : grad_views) std::fill(view.data, view.data + view.size, S(0));
    double loss = batch_loss_and_grad(result.params, batch, grad);
    require(std::isfinite(loss), "training diverged (non-finite loss) at step " +
                                     std::to_string(step) + "; lower the learning rate");
    result.step_losses.push_back(loss);

    double sq_norm = 0;
    for (const auto& view : grad_views)
      for (std::ptrdiff_t i = 0; i < view.size; ++i)
        sq_norm += static_cast<double>(view.data[i]) * static_cast<double>(view.data[i]);
    double scale = tcfg.lr;
    double norm = std::sqrt(sq_norm);
    if (tcfg.clip > 0 && norm > tcfg.clip) scale *= tcfg.clip / norm;
    for (std::size_t t = 0; t < param_views.size(); ++t)
      for (std::ptrdiff_t i = 0; i < param_views[t].size; ++i)
        param_views[t].data[i] -= static_cast<S>(scale) * grad_views[t].data[i];

    if (tcfg.log_every > 0 && (step + 1) % tcfg.log_every == 0)
      std::fprintf(stderr, "step %d/%d loss %.4f\n", step + 1, tcfg.steps, loss);
  }
  if (!dev_pairs.empty()) result.final_dev_ce = batch_loss(result.params, dev_pairs);
  return result;
}

}  // namespace seqconf

#endif  // SEQCONF_MODEL_HPP_
