#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vdmask/ops.hpp"
#include "vdmask/rng.hpp"

// Desk-scale Vision Transformer. forward() returns the full trace (pre-
// positional embeddings, every hidden state, attention maps, logits) that
// the gating network and attention rollout consume. Pre-layer-norm blocks,
// learned positional embeddings, CLS classification token.

namespace vdm {

struct ViTConfig {
  int image_size = 48;
  int patch_size = 16;
  int channels = 3;
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int mlp_ratio = 4;
  int n_classes = 10;

  int n_patches_side() const { return image_size / patch_size; }
  int n_patches() const { return n_patches_side() * n_patches_side(); }
  int n_tokens() const { return n_patches() + 1; }  // + CLS
  int head_dim() const { return d_model / n_heads; }
  int patch_dim() const { return patch_size * patch_size * channels; }
  int mlp_hidden() const { return mlp_ratio * d_model; }

  void validate() const {
    if (image_size % patch_size != 0) {
      throw ContractError("vit config: image_size " + std::to_string(image_size) +
                          " not divisible by patch_size " +
                          std::to_string(patch_size));
    }
    if (d_model % n_heads != 0) {
      throw ContractError("vit config: d_model not divisible by n_heads");
    }
    if (n_layers < 1) throw ContractError("vit config: n_layers must be >= 1");
  }
};

template <typename S>
struct AttnHeadParamsT {
  TensorT<S> wq, bq, wk, bk, wv, bv;
};

template <typename S>
struct EncoderLayerParamsT {
  TensorT<S> ln1_g, ln1_b;
  std::vector<AttnHeadParamsT<S>> heads;
  TensorT<S> wo, bo;
  TensorT<S> ln2_g, ln2_b;
  TensorT<S> w1, b1, w2, b2;
};

template <typename S>
struct ViTParamsT {
  TensorT<S> patch_w, patch_b;  // [patch_dim, d], [d]
  TensorT<S> cls;               // [1, d]
  TensorT<S> pos;               // [n_tokens, d]
  std::vector<EncoderLayerParamsT<S>> layers;
  TensorT<S> lnf_g, lnf_b;
  TensorT<S> head_w, head_b;  // [d, n_classes], [n_classes]

  void for_each_param(const std::function<void(const std::string&, TensorT<S>&)>& fn) {
    fn("patch_embed.w", patch_w);
    fn("patch_embed.b", patch_b);
    fn("cls", cls);
    fn("pos", pos);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      std::string p = "layers." + std::to_string(i) + ".";
      auto& l = layers[i];
      fn(p + "ln1.g", l.ln1_g);
      fn(p + "ln1.b", l.ln1_b);
      for (std::size_t h = 0; h < l.heads.size(); ++h) {
        std::string q = p + "attn.h" + std::to_string(h) + ".";
        fn(q + "wq", l.heads[h].wq);
        fn(q + "bq", l.heads[h].bq);
        fn(q + "wk", l.heads[h].wk);
        fn(q + "bk", l.heads[h].bk);
        fn(q + "wv", l.heads[h].wv);
        fn(q + "bv", l.heads[h].bv);
      }
      fn(p + "attn.wo", l.wo);
      fn(p + "attn.bo", l.bo);
      fn(p + "ln2.g", l.ln2_g);
      fn(p + "ln2.b", l.ln2_b);
      fn(p + "mlp.w1", l.w1);
      fn(p + "mlp.b1", l.b1);
      fn(p + "mlp.w2", l.w2);
      fn(p + "mlp.b2", l.b2);
    }
    fn("ln_f.g", lnf_g);
    fn("ln_f.b", lnf_b);
    fn("head.w", head_w);
    fn("head.b", head_b);
  }

  void set_requires_grad(bool rg) {
    for_each_param([rg](const std::string&, TensorT<S>& t) { t.set_requires_grad(rg); });
  }
};

template <typename S>
struct ForwardTraceT {
  TensorT<S> hbar0;                            // [N, d] pre-positional, no CLS
  std::vector<TensorT<S>> h;                   // L+1 states, [T, d] with CLS
  std::vector<std::vector<TensorT<S>>> attn;   // [layer][head] of [T, T]
  TensorT<S> logits;                           // [1, n_classes]
  TensorT<S> probs;                            // softmax(logits)
};

namespace detail {

template <typename S>
TensorT<S> trunc_normal(Rng& rng, Shape shape, double std_dev) {
  std::vector<S> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    x = static_cast<S>(z * std_dev);
  }
  return TensorT<S>::param(std::move(shape), std::move(v));
}

}  // namespace detail

template <typename S>
ViTParamsT<S> init_vit_params(const ViTConfig& cfg, Rng rng) {
  cfg.validate();
  const double std_dev = 0.02;
  ViTParamsT<S> p;
  std::int64_t d = cfg.d_model, dh = cfg.head_dim();
  p.patch_w = detail::trunc_normal<S>(rng, {cfg.patch_dim(), d}, std_dev);
  p.patch_b = TensorT<S>::param({d}, std::vector<S>(d, S(0)));
  p.cls = detail::trunc_normal<S>(rng, {1, d}, std_dev);
  p.pos = detail::trunc_normal<S>(rng, {cfg.n_tokens(), d}, std_dev);
  for (int i = 0; i < cfg.n_layers; ++i) {
    EncoderLayerParamsT<S> l;
    l.ln1_g = TensorT<S>::param({d}, std::vector<S>(d, S(1)));
    l.ln1_b = TensorT<S>::param({d}, std::vector<S>(d, S(0)));
    for (int h = 0; h < cfg.n_heads; ++h) {
      AttnHeadParamsT<S> hp;
      hp.wq = detail::trunc_normal<S>(rng, {d, dh}, std_dev);
      hp.bq = TensorT<S>::param({dh}, std::vector<S>(dh, S(0)));
      hp.wk = detail::trunc_normal<S>(rng, {d, dh}, std_dev);
      hp.bk = TensorT<S>::param({dh}, std::vector<S>(dh, S(0)));
      hp.wv = detail::trunc_normal<S>(rng, {d, dh}, std_dev);
      hp.bv = TensorT<S>::param({dh}, std::vector<S>(dh, S(0)));
      l.heads.push_back(std::move(hp));
    }
    l.wo = detail::trunc_normal<S>(rng, {d, d}, std_dev);
    l.bo = TensorT<S>::param({d}, std::vector<S>(d, S(0)));
    l.ln2_g = TensorT<S>::param({d}, std::vector<S>(d, S(1)));
    l.ln2_b = TensorT<S>::param({d}, std::vector<S>(d, S(0)));
    l.w1 = detail::trunc_normal<S>(rng, {d, cfg.mlp_hidden()}, std_dev);
    l.b1 = TensorT<S>::param({cfg.mlp_hidden()}, std::vector<S>(cfg.mlp_hidden(), S(0)));
    l.w2 = detail::trunc_normal<S>(rng, {cfg.mlp_hidden(), d}, std_dev);
    l.b2 = TensorT<S>::param({d}, std::vector<S>(d, S(0)));
    p.layers.push_back(std::move(l));
  }
  p.lnf_g = TensorT<S>::param({d}, std::vector<S>(d, S(1)));
  p.lnf_b = TensorT<S>::param({d}, std::vector<S>(d, S(0)));
  p.head_w = detail::trunc_normal<S>(rng, {d, cfg.n_classes}, std_dev);
  p.head_b = TensorT<S>::param({cfg.n_classes}, std::vector<S>(cfg.n_classes, S(0)));
  return p;
}

// Splits a normalized H*W*C image into row-major patch vectors
// (left-to-right, top-to-bottom; within a patch: row-major pixels, then
// channels). Concatenating the rows reconstructs the image losslessly.
template <typename S>
TensorT<S> patchify(const std::vector<S>& image, const ViTConfig& cfg) {
  std::int64_t hw = static_cast<std::int64_t>(cfg.image_size) * cfg.image_size *
                    cfg.channels;
  if (static_cast<std::int64_t>(image.size()) != hw) {
    throw DimensionError("patchify: image has " + std::to_string(image.size()) +
                         " values, expected " + std::to_string(hw));
  }
  cfg.validate();
  int g = cfg.n_patches_side(), ps = cfg.patch_size, ch = cfg.channels;
  std::vector<S> out(static_cast<std::size_t>(cfg.n_patches()) * cfg.patch_dim());
  std::size_t w = 0;
  for (int py = 0; py < g; ++py) {
    for (int px = 0; px < g; ++px) {
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          std::size_t src =
              (static_cast<std::size_t>(py * ps + y) * cfg.image_size +
               (px * ps + x)) * ch;
          for (int c = 0; c < ch; ++c) out[w++] = image[src + c];
        }
      }
    }
  }
  return TensorT<S>::from({cfg.n_patches(), cfg.patch_dim()}, std::move(out));
}

// Inverse of patchify; used by tests and the perturbation pipeline.
template <typename S>
std::vector<S> unpatchify(const std::vector<S>& patches, const ViTConfig& cfg) {
  int g = cfg.n_patches_side(), ps = cfg.patch_size, ch = cfg.channels;
  std::vector<S> image(static_cast<std::size_t>(cfg.image_size) * cfg.image_size * ch);
  std::size_t r = 0;
  for (int py = 0; py < g; ++py) {
    for (int px = 0; px < g; ++px) {
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          std::size_t dst =
              (static_cast<std::size_t>(py * ps + y) * cfg.image_size +
               (px * ps + x)) * ch;
          for (int c = 0; c < ch; ++c) image[dst + c] = patches[r++];
        }
      }
    }
  }
  return image;
}

// Pre-positional patch embeddings (no CLS row).
template <typename S>
TensorT<S> embed_patches(const TensorT<S>& patches, const ViTParamsT<S>& p) {
  return add(matmul(patches, p.patch_w), p.patch_b);
}

namespace detail {

// [T,1] selector placing `cls` at row 0 and [T,N] selector placing the
// patch rows below it; row stacking expressed through constant matmuls.
template <typename S>
TensorT<S> stack_cls(const TensorT<S>& cls, const TensorT<S>& rows) {
  std::int64_t n = rows.shape()[0];
  std::int64_t t = n + 1;
  std::vector<S> sel_cls(static_cast<std::size_t>(t), S(0));
  sel_cls[0] = S(1);
  std::vector<S> sel_rows(static_cast<std::size_t>(t * n), S(0));
  for (std::int64_t i = 0; i < n; ++i) sel_rows[(i + 1) * n + i] = S(1);
  auto u_cls = TensorT<S>::from({t, 1}, std::move(sel_cls));
  auto u_rows = TensorT<S>::from({t, n}, std::move(sel_rows));
  return add(matmul(u_cls, cls), matmul(u_rows, rows));
}

// Constant [1,T] selector extracting row `idx`.
template <typename S>
TensorT<S> select_row(const TensorT<S>& m, std::int64_t idx) {
  std::int64_t t = m.shape()[0];
  std::vector<S> sel(static_cast<std::size_t>(t), S(0));
  sel[idx] = S(1);
  return matmul(TensorT<S>::from({1, t}, std::move(sel)), m);
}

template <typename S>
ForwardTraceT<S> encode(TensorT<S> hbar0, const ViTParamsT<S>& p,
                        const ViTConfig& cfg) {
  ForwardTraceT<S> trace;
  trace.hbar0 = hbar0;
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  try {
    auto h = add(stack_cls(p.cls, hbar0), p.pos);
    trace.h.push_back(h);
    for (int li = 0; li < cfg.n_layers; ++li) {
      const auto& l = p.layers[static_cast<std::size_t>(li)];
      auto a1 = layer_norm(h, l.ln1_g, l.ln1_b);
      std::vector<TensorT<S>> ctx;
      std::vector<TensorT<S>> layer_attn;
      for (const auto& head : l.heads) {
        auto q = add(matmul(a1, head.wq), head.bq);
        auto k = add(matmul(a1, head.wk), head.bk);
        auto v = add(matmul(a1, head.wv), head.bv);
        auto scores = affine(matmul(q, k, false, true), inv_sqrt_dh, 0.0);
        auto attn = softmax_rows(scores);
        layer_attn.push_back(attn);
        ctx.push_back(matmul(attn, v));
      }
      trace.attn.push_back(std::move(layer_attn));
      auto attn_out = add(matmul(concat_last_dim(ctx), l.wo), l.bo);
      auto x2 = add(h, attn_out);
      auto m1 = layer_norm(x2, l.ln2_g, l.ln2_b);
      auto mlp = add(matmul(gelu(add(matmul(m1, l.w1), l.b1)), l.w2), l.b2);
      h = add(x2, mlp);
      trace.h.push_back(h);
    }
    auto fin = layer_norm(h, p.lnf_g, p.lnf_b);
    trace.logits = add(matmul(select_row(fin, 0), p.head_w), p.head_b);
    trace.probs = softmax_rows(trace.logits);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " (in encoder at depth " +
                       std::to_string(trace.h.size()) + ")");
  }
  return trace;
}

}  // namespace detail

template <typename S>
ForwardTraceT<S> vit_forward(const std::vector<S>& image,
                             const ViTParamsT<S>& p, const ViTConfig& cfg) {
  auto patches = patchify(image, cfg);
  return detail::encode(embed_patches(patches, p), p, cfg);
}

// Eq-style masking at the patch-embedding level, before positional
// embeddings: row i becomes z_i * x_i + (1 - z_i) * b. The CLS token is
// never masked; gradient flows to z and b.
template <typename S>
ForwardTraceT<S> vit_masked_forward_embedded(const TensorT<S>& hbar0,
                                             const TensorT<S>& z,
                                             const TensorT<S>& baseline,
                                             const ViTParamsT<S>& p,
                                             const ViTConfig& cfg) {
  if (z.shape() != Shape{cfg.n_patches(), 1}) {
    throw DimensionError("masked_forward: mask must be [" +
                         std::to_string(cfg.n_patches()) + ",1], got " +
                         shape_str(z.shape()));
  }
  if (baseline.shape() != Shape{1, cfg.d_model}) {
    throw DimensionError("masked_forward: baseline must be [1," +
                         std::to_string(cfg.d_model) + "], got " +
                         shape_str(baseline.shape()));
  }
  auto ones_row = TensorT<S>::full({1, cfg.d_model}, S(1));
  auto z_cols = matmul(z, ones_row);            // [N, d] of z_i
  auto keep = mul(z_cols, hbar0);
  auto fill = matmul(affine(z, -1.0, 1.0), baseline);  // (1-z_i) b
  return detail::encode(add(keep, fill), p, cfg);
}

template <typename S>
ForwardTraceT<S> vit_masked_forward(const std::vector<S>& image,
                                    const TensorT<S>& z,
                                    const TensorT<S>& baseline,
                                    const ViTParamsT<S>& p,
                                    const ViTConfig& cfg) {
  auto hbar0 = embed_patches(patchify(image, cfg), p);
  return vit_masked_forward_embedded(hbar0, z, baseline, p, cfg);
}

// Argmax over logits; ties break toward the lowest class index.
template <typename S>
int classify(const ForwardTraceT<S>& trace) {
  const auto& v = trace.logits.values();
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace vdm
