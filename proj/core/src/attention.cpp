#include "visita/attention.hpp"

#include <cmath>

#include "visita/error.hpp"

namespace visita {

Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
  return m;
}

void AttentionInput::validate() const {
  if (q.rows() == 0 || q.cols() == 0 || k.rows() == 0 || v.cols() == 0) {
    throw ShapeError("attention dimensions must be >= 1 (q " + q.shape_str() + ", k " + k.shape_str() + ", v " +
                     v.shape_str() + ")");
  }
  if (q.cols() != k.cols()) throw ShapeError("query " + q.shape_str() + " and key " + k.shape_str() + " widths differ");
  if (k.rows() != v.rows()) throw ShapeError("key " + k.shape_str() + " and value " + v.shape_str() + " lengths differ");
}

AttentionResult scaled_dot_attention(const AttentionInput& in) {
  in.validate();
  Matrix scores = matmul_nt(in.q, in.k);
  scores *= 1.0 / std::sqrt(static_cast<double>(in.q.cols()));
  AttentionResult r;
  r.weights = softmax_rows(scores);
  r.out = matmul(r.weights, in.v);
  return r;
}

AttentionGrads attention_backward(const AttentionInput& in, const Matrix& upstream) {
  in.validate();
  Matrix scores = matmul_nt(in.q, in.k);
  scores *= 1.0 / std::sqrt(static_cast<double>(in.q.cols()));
  return attention_backward(in, softmax_rows(scores), upstream);
}

AttentionGrads attention_backward(const AttentionInput& in, const Matrix& weights, const Matrix& upstream) {
  if (upstream.rows() != in.q.rows() || upstream.cols() != in.v.cols()) {
    throw ShapeError("upstream gradient " + upstream.shape_str() + " does not match attention output " +
                     std::to_string(in.q.rows()) + "x" + std::to_string(in.v.cols()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(in.q.cols()));
  AttentionGrads g;
  g.v = matmul_tn(weights, upstream);
  Matrix dw = matmul_nt(upstream, in.v);
  // Softmax Jacobian row by row: dS = W ∘ (dW − rowsum(dW ∘ W)).
  for (std::size_t r = 0; r < dw.rows(); ++r) {
    auto wr = weights.row(r);
    auto dr = dw.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < dr.size(); ++c) s += wr[c] * dr[c];
    for (std::size_t c = 0; c < dr.size(); ++c) dr[c] = wr[c] * (dr[c] - s) * scale;
  }
  g.q = matmul(dw, in.k);
  g.k = matmul_tn(dw, in.q);
  return g;
}

// ---------------------------------------------------------------------------

MultiHeadParams MultiHeadParams::init(std::size_t d_model, std::size_t heads, Rng& rng) {
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw ConfigError("head count " + std::to_string(heads) + " does not divide d_model " + std::to_string(d_model));
  }
  const std::size_t d_head = d_model / heads;
  MultiHeadParams p;
  p.heads = heads;
  for (std::size_t i = 0; i < heads; ++i) {
    p.wq.push_back(glorot_uniform(d_model, d_head, rng));
    p.wk.push_back(glorot_uniform(d_model, d_head, rng));
    p.wv.push_back(glorot_uniform(d_model, d_head, rng));
  }
  p.wo = glorot_uniform(heads * d_head, d_model, rng);
  return p;
}

void MultiHeadParams::validate() const {
  if (heads == 0 || wq.size() != heads || wk.size() != heads || wv.size() != heads) {
    throw ConfigError("multi-head parameters need " + std::to_string(heads) + " projections per role");
  }
  const std::size_t dm = wo.cols();
  if (dm == 0 || dm % heads != 0) {
    throw ConfigError("head count " + std::to_string(heads) + " does not divide d_model " + std::to_string(dm));
  }
  const std::size_t dh = dm / heads;
  for (std::size_t i = 0; i < heads; ++i) {
    for (const Matrix* w : {&wq[i], &wk[i], &wv[i]}) {
      if (w->rows() != dm || w->cols() != dh) {
        throw ShapeError("head " + std::to_string(i) + " projection is " + w->shape_str() + ", expected " +
                         std::to_string(dm) + "x" + std::to_string(dh));
      }
    }
  }
  if (wo.rows() != heads * dh) throw ShapeError("output projection is " + wo.shape_str());
}

Matrix multi_head_forward(const Matrix& x, const MultiHeadParams& params, MultiHeadCache& cache) {
  params.validate();
  if (x.cols() != params.d_model()) {
    throw ShapeError("input " + x.shape_str() + " does not match d_model " + std::to_string(params.d_model()));
  }
  const std::size_t n = x.rows(), dh = params.d_head();
  cache.x = x;
  cache.inputs.clear();
  cache.weights.clear();
  cache.concat = Matrix(n, params.heads * dh);
  for (std::size_t h = 0; h < params.heads; ++h) {
    AttentionInput in{matmul(x, params.wq[h]), matmul(x, params.wk[h]), matmul(x, params.wv[h])};
    AttentionResult r = scaled_dot_attention(in);
    for (std::size_t i = 0; i < n; ++i) {
      auto src = r.out.row(i);
      auto dst = cache.concat.row(i).subspan(h * dh, dh);
      std::copy(src.begin(), src.end(), dst.begin());
    }
    cache.inputs.push_back(std::move(in));
    cache.weights.push_back(std::move(r.weights));
  }
  return matmul(cache.concat, params.wo);
}

Matrix multi_head_attention(const Matrix& x, const MultiHeadParams& params) {
  MultiHeadCache cache;
  return multi_head_forward(x, params, cache);
}

Matrix multi_head_backward(const MultiHeadCache& cache, const MultiHeadParams& params, const Matrix& upstream,
                           MultiHeadParams& grads) {
  const std::size_t n = cache.x.rows(), dh = params.d_head();
  if (upstream.rows() != n || upstream.cols() != params.d_model()) {
    throw ShapeError("upstream " + upstream.shape_str() + " does not match multi-head output");
  }
  accumulate_tn(grads.wo, cache.concat, upstream);
  const Matrix d_concat = matmul_nt(upstream, params.wo);
  Matrix dx(n, params.d_model());
  Matrix d_head(n, dh);
  for (std::size_t h = 0; h < params.heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      auto src = d_concat.row(i).subspan(h * dh, dh);
      std::copy(src.begin(), src.end(), d_head.row(i).begin());
    }
    const AttentionGrads g = attention_backward(cache.inputs[h], cache.weights[h], d_head);
    accumulate_tn(grads.wq[h], cache.x, g.q);
    accumulate_tn(grads.wk[h], cache.x, g.k);
    accumulate_tn(grads.wv[h], cache.x, g.v);
    dx += matmul_nt(g.q, params.wq[h]);
    dx += matmul_nt(g.k, params.wk[h]);
    dx += matmul_nt(g.v, params.wv[h]);
  }
  return dx;
}

// ---------------------------------------------------------------------------

PatchGrid extract_patches(const ImageTensor& image, std::size_t patch_size) {
  if (patch_size == 0 || image.height % patch_size != 0 || image.width % patch_size != 0 || image.height == 0 ||
      image.width == 0) {
    throw ShapeError("image H=" + std::to_string(image.height) + " W=" + std::to_string(image.width) +
                     " is not divisible by patch_size=" + std::to_string(patch_size));
  }
  PatchGrid g;
  g.patch_size = patch_size;
  g.height = image.height;
  g.width = image.width;
  g.channels = image.channels;
  const std::size_t gr = image.height / patch_size, gc = image.width / patch_size;
  const std::size_t dim = patch_size * patch_size * image.channels;
  g.patches = Matrix(gr * gc, dim);
  for (std::size_t pr = 0; pr < gr; ++pr) {
    for (std::size_t pc = 0; pc < gc; ++pc) {
      auto row = g.patches.row(pr * gc + pc);
      std::size_t idx = 0;
      for (std::size_t dy = 0; dy < patch_size; ++dy) {
        const double* src = &image.data[((pr * patch_size + dy) * image.width + pc * patch_size) * image.channels];
        for (std::size_t e = 0; e < patch_size * image.channels; ++e) row[idx++] = src[e];
      }
    }
  }
  return g;
}

ImageTensor patch_gradient_to_image(const Matrix& patch_grads, const PatchGrid& layout) {
  const std::size_t p = layout.patch_size, gc = layout.grid_cols();
  if (patch_grads.rows() != layout.grid_rows() * gc || patch_grads.cols() != p * p * layout.channels) {
    throw ShapeError("patch matrix " + patch_grads.shape_str() + " does not match the grid layout");
  }
  ImageTensor img(layout.height, layout.width, layout.channels);
  for (std::size_t pr = 0; pr < layout.grid_rows(); ++pr) {
    for (std::size_t pc = 0; pc < gc; ++pc) {
      auto row = patch_grads.row(pr * gc + pc);
      std::size_t idx = 0;
      for (std::size_t dy = 0; dy < p; ++dy) {
        double* dst = &img.data[((pr * p + dy) * layout.width + pc * p) * layout.channels];
        for (std::size_t e = 0; e < p * layout.channels; ++e) dst[e] = row[idx++];
      }
    }
  }
  return img;
}

ImageTensor assemble_patches(const PatchGrid& grid) { return patch_gradient_to_image(grid.patches, grid); }

PatchEmbedParams PatchEmbedParams::init(std::size_t patch_dim, std::size_t num_patches, std::size_t d_model, Rng& rng) {
  return {glorot_uniform(patch_dim, d_model, rng), glorot_uniform(num_patches, d_model, rng)};
}

Matrix patch_embed(const PatchGrid& grid, const PatchEmbedParams& params) {
  if (params.projection.rows() != grid.patches.cols()) {
    throw ShapeError("patch dimension " + std::to_string(grid.patches.cols()) + " does not match projection " +
                     params.projection.shape_str());
  }
  if (params.positions.rows() != grid.patches.rows() || params.positions.cols() != params.projection.cols()) {
    throw ShapeError("positional table " + params.positions.shape_str() + " does not match " +
                     std::to_string(grid.patches.rows()) + " patches");
  }
  Matrix tokens = matmul(grid.patches, params.projection);
  tokens += params.positions;
  return tokens;
}

Matrix patch_embed(const ImageTensor& image, std::size_t patch_size, const PatchEmbedParams& params) {
  return patch_embed(extract_patches(image, patch_size), params);
}

// ---------------------------------------------------------------------------

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("layer norm parameters " + gain.shape_str() + "/" + bias.shape_str() + " for input " +
                     x.shape_str());
  }
  Matrix y(n, d);
  if (cache) {
    cache->xhat = Matrix(n, d);
    cache->inv_std.assign(n, 0.0);
  }
  for (std::size_t r = 0; r < n; ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    auto yr = y.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (xr[c] - mean) * inv;
      if (cache) cache->xhat(r, c) = xh;
      yr[c] = xh * gain.values()[c] + bias.values()[c];
    }
    if (cache) cache->inv_std[r] = inv;
  }
  return y;
}

Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& gain, const Matrix& upstream, Matrix& d_gain,
                           Matrix& d_bias) {
  const std::size_t n = upstream.rows(), d = upstream.cols();
  const double dd = static_cast<double>(d);
  Matrix dx(n, d);
  auto g = gain.values();
  auto dg = d_gain.values();
  auto db = d_bias.values();
  for (std::size_t r = 0; r < n; ++r) {
    auto up = upstream.row(r);
    auto xh = cache.xhat.row(r);
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dg[c] += up[c] * xh[c];
      db[c] += up[c];
      const double dxh = up[c] * g[c];
      s1 += dxh;
      s2 += dxh * xh[c];
    }
    const double inv = cache.inv_std[r];
    auto out = dx.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const double dxh = up[c] * g[c];
      out[c] = inv / dd * (dd * dxh - s1 - xh[c] * s2);
    }
  }
  return dx;
}

TransformerBlockParams TransformerBlockParams::init(std::size_t d_model, std::size_t heads, std::size_t d_ff,
                                                    Rng& rng) {
  TransformerBlockParams p;
  p.mha = MultiHeadParams::init(d_model, heads, rng);
  p.ffn_w1 = glorot_uniform(d_model, d_ff, rng);
  p.ffn_w2 = glorot_uniform(d_ff, d_model, rng);
  p.ln1_gain = Matrix(1, d_model, 1.0);
  p.ln1_bias = Matrix(1, d_model, 0.0);
  p.ln2_gain = Matrix(1, d_model, 1.0);
  p.ln2_bias = Matrix(1, d_model, 0.0);
  return p;
}

void TransformerBlockParams::validate() const {
  mha.validate();
  const std::size_t d = mha.d_model();
  if (ffn_w1.rows() != d || ffn_w2.cols() != d || ffn_w1.cols() != ffn_w2.rows()) {
    throw ShapeError("feed-forward chain " + ffn_w1.shape_str() + " -> " + ffn_w2.shape_str() +
                     " does not close at d_model " + std::to_string(d));
  }
  for (const Matrix* m : {&ln1_gain, &ln1_bias, &ln2_gain, &ln2_bias}) {
    if (m->size() != d) throw ShapeError("layer norm parameter " + m->shape_str() + " for d_model " + std::to_string(d));
  }
}

Matrix transformer_block_forward(const Matrix& x, const TransformerBlockParams& params, TransformerBlockCache& cache) {
  params.validate();
  if (x.cols() != params.d_model()) {
    throw ShapeError("block input " + x.shape_str() + " does not match d_model " + std::to_string(params.d_model()));
  }
  const Matrix h1 = layer_norm(x, params.ln1_gain, params.ln1_bias, &cache.ln1);
  Matrix y = x;
  y += multi_head_forward(h1, params.mha, cache.mha);
  cache.h2 = layer_norm(y, params.ln2_gain, params.ln2_bias, &cache.ln2);
  cache.hidden_pre = matmul(cache.h2, params.ffn_w1);
  cache.hidden = cache.hidden_pre;
  for (double& v : cache.hidden.values()) v = v > 0.0 ? v : 0.0;
  y += matmul(cache.hidden, params.ffn_w2);
  return y;
}

Matrix transformer_block(const Matrix& x, const TransformerBlockParams& params) {
  TransformerBlockCache cache;
  return transformer_block_forward(x, params, cache);
}

Matrix transformer_block_backward(const TransformerBlockCache& cache, const TransformerBlockParams& params,
                                  const Matrix& upstream, TransformerBlockParams& grads) {
  accumulate_tn(grads.ffn_w2, cache.hidden, upstream);
  Matrix d_hidden = matmul_nt(upstream, params.ffn_w2);
  auto pre = cache.hidden_pre.values();
  auto dh = d_hidden.values();
  for (std::size_t i = 0; i < dh.size(); ++i) {
    if (!(pre[i] > 0.0)) dh[i] = 0.0;
  }
  accumulate_tn(grads.ffn_w1, cache.h2, d_hidden);
  const Matrix d_h2 = matmul_nt(d_hidden, params.ffn_w1);
  Matrix dy = upstream;
  dy += layer_norm_backward(cache.ln2, params.ln2_gain, d_h2, grads.ln2_gain, grads.ln2_bias);

  const Matrix d_h1 = multi_head_backward(cache.mha, params.mha, dy, grads.mha);
  Matrix dx = dy;
  dx += layer_norm_backward(cache.ln1, params.ln1_gain, d_h1, grads.ln1_gain, grads.ln1_bias);
  return dx;
}

}  // namespace visita
