#include "visita/encoders.hpp"

#include <cmath>

#include "visita/error.hpp"

namespace visita {

namespace {

constexpr std::size_t kConvSize = 3;

Matrix im2col(const ImageTensor& img) {
  const std::size_t h = img.height, w = img.width, c = img.channels;
  Matrix cols(h * w, kConvSize * kConvSize * c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      auto row = cols.row(y * w + x);
      for (std::size_t ky = 0; ky < kConvSize; ++ky) {
        const long sy = static_cast<long>(y + ky) - 1;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        for (std::size_t kx = 0; kx < kConvSize; ++kx) {
          const long sx = static_cast<long>(x + kx) - 1;
          if (sx < 0 || sx >= static_cast<long>(w)) continue;
          const double* src = &img.data[(static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c];
          double* dst = &row[(ky * kConvSize + kx) * c];
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
        }
      }
    }
  }
  return cols;
}

Vector project(const Matrix& pooled, const Matrix& proj) {
  Matrix e = matmul(pooled, proj);
  auto v = e.values();
  return Vector(v.begin(), v.end());
}

void check_embedding_grad(std::span<const double> d, const Matrix& proj) {
  if (d.size() != proj.cols()) {
    throw ShapeError("embedding gradient has length " + std::to_string(d.size()) + ", expected " +
                     std::to_string(proj.cols()));
  }
}

// d_pooled = d_emb · projᵀ; d_proj += pooledᵀ · d_emb.
Matrix projection_backward(const Matrix& pooled, const Matrix& proj, std::span<const double> d_emb, Matrix& d_proj) {
  Matrix de = Matrix::row_vector(d_emb);
  accumulate_tn(d_proj, pooled, de);
  return matmul_nt(de, proj);
}

}  // namespace

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(image_size > 0 && channels > 0 && conv_channels > 0, "image_size, channels and conv_channels must be positive");
  need(patch_size > 0 && image_size % patch_size == 0,
       "patch_size " + std::to_string(patch_size) + " must divide image_size " + std::to_string(image_size));
  need(d_model > 0 && d_embed > 0 && ffn_hidden > 0, "d_model, d_embed and ffn_hidden must be positive");
  need(heads > 0 && d_model % heads == 0,
       "heads " + std::to_string(heads) + " must divide d_model " + std::to_string(d_model));
  need(blocks > 0, "blocks must be positive");
  need(caption_len > 0, "caption_len must be positive");
  need(vocab_size > static_cast<std::size_t>(kUnkId), "vocab_size must include the PAD and UNK ids");
  need(std::isfinite(head_init_gain) && head_init_gain > 0.0, "head_init_gain must be positive");
}

MatchModel MatchModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  MatchModel m;
  m.config = config;
  Rng img_rng = Rng(seed).derive(1);
  Rng txt_rng = Rng(seed).derive(2);

  auto& ie = m.image_enc;
  ie.conv_w = glorot_uniform(kConvSize * kConvSize * config.channels, config.conv_channels, img_rng);
  ie.conv_b = Matrix(1, config.conv_channels);
  ie.patch_size = config.patch_size;
  ie.patch = PatchEmbedParams::init(config.patch_dim(), config.num_patches(), config.d_model, img_rng);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    ie.blocks.push_back(TransformerBlockParams::init(config.d_model, config.heads, config.ffn_hidden, img_rng));
  }
  ie.out_proj = glorot_uniform(config.d_model, config.d_embed, img_rng, config.head_init_gain);

  auto& te = m.text_enc;
  te.vocab_size = config.vocab_size;
  te.token_embed = glorot_uniform(config.vocab_size, config.d_model, txt_rng);
  te.block = TransformerBlockParams::init(config.d_model, config.heads, config.ffn_hidden, txt_rng);
  te.out_proj = glorot_uniform(config.d_model, config.d_embed, txt_rng, config.head_init_gain);
  return m;
}

// ---------------------------------------------------------------------------

Vector encode_image(const ImageEncoderParams& params, const ImageTensor& image) {
  ImageEncoderCache cache;
  return encode_image_forward(params, image, cache);
}

Vector encode_image_forward(const ImageEncoderParams& params, const ImageTensor& image, ImageEncoderCache& cache) {
  const std::size_t cin = params.conv_w.rows() / (kConvSize * kConvSize);
  if (image.channels != cin) {
    throw ShapeError("image has " + std::to_string(image.channels) + " channels, encoder expects " +
                     std::to_string(cin));
  }
  if (image.data.size() != image.height * image.width * image.channels || image.data.empty()) {
    throw ShapeError("image tensor " + image.shape_str() + " has " + std::to_string(image.data.size()) + " values");
  }
  cache.cols = im2col(image);
  cache.conv_pre = matmul(cache.cols, params.conv_w);
  const std::size_t cout = params.conv_w.cols();
  ImageTensor feat(image.height, image.width, cout);
  for (std::size_t p = 0; p < cache.conv_pre.rows(); ++p) {
    auto pre = cache.conv_pre.row(p);
    for (std::size_t c = 0; c < cout; ++c) {
      pre[c] += params.conv_b(0, c);
      feat.data[p * cout + c] = pre[c] > 0.0 ? pre[c] : 0.0;
    }
  }
  cache.grid = extract_patches(feat, params.patch_size);
  if (cache.grid.patches.rows() != params.patch.positions.rows()) {
    throw ShapeError("image " + image.shape_str() + " yields " + std::to_string(cache.grid.patches.rows()) +
                     " patches, encoder expects " + std::to_string(params.patch.positions.rows()));
  }
  Matrix x = patch_embed(cache.grid, params.patch);
  cache.blocks.resize(params.blocks.size());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) x = transformer_block_forward(x, params.blocks[b], cache.blocks[b]);
  cache.pooled = column_mean(x);
  return project(cache.pooled, params.out_proj);
}

void encode_image_backward(const ImageEncoderCache& cache, const ImageEncoderParams& params,
                           std::span<const double> d_embedding, ImageEncoderParams& grads) {
  check_embedding_grad(d_embedding, params.out_proj);
  Matrix d_pooled = projection_backward(cache.pooled, params.out_proj, d_embedding, grads.out_proj);
  const std::size_t n = cache.grid.patches.rows();
  Matrix dx(n, d_pooled.cols());
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dx.cols(); ++c) dx(r, c) = d_pooled(0, c) * inv;
  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    dx = transformer_block_backward(cache.blocks[b], params.blocks[b], dx, grads.blocks[b]);
  }
  accumulate_tn(grads.patch.projection, cache.grid.patches, dx);
  grads.patch.positions += dx;
  Matrix d_patches = matmul_nt(dx, params.patch.projection);
  ImageTensor d_feat = patch_gradient_to_image(d_patches, cache.grid);
  const std::size_t cout = params.conv_w.cols();
  Matrix d_pre(cache.conv_pre.rows(), cout);
  for (std::size_t p = 0; p < d_pre.rows(); ++p) {
    for (std::size_t c = 0; c < cout; ++c) {
      const double g = cache.conv_pre(p, c) > 0.0 ? d_feat.data[p * cout + c] : 0.0;
      d_pre(p, c) = g;
      grads.conv_b(0, c) += g;
    }
  }
  accumulate_tn(grads.conv_w, cache.cols, d_pre);
}

// ---------------------------------------------------------------------------

Vector encode_text(const TextEncoderParams& params, std::span<const int> token_ids) {
  TextEncoderCache cache;
  return encode_text_forward(params, token_ids, cache);
}

Vector encode_text_forward(const TextEncoderParams& params, std::span<const int> token_ids, TextEncoderCache& cache) {
  if (token_ids.empty()) throw InvalidInputError("token sequence is empty");
  const std::size_t d = params.token_embed.cols();
  cache.tokens.assign(token_ids.begin(), token_ids.end());
  cache.pooled_rows.clear();
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int id = token_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= params.token_embed.rows()) {
      throw InvalidInputError("token id " + std::to_string(id) + " at position " + std::to_string(i) +
                              " is outside the vocabulary of size " + std::to_string(params.token_embed.rows()));
    }
    if (id != kPadId) cache.pooled_rows.push_back(i);
  }
  if (cache.pooled_rows.empty()) {
    for (std::size_t i = 0; i < token_ids.size(); ++i) cache.pooled_rows.push_back(i);
  }
  // PAD positions are dropped before the block, so they take part neither in
  // attention nor in pooling.
  Matrix x(cache.pooled_rows.size(), d);
  for (std::size_t r = 0; r < cache.pooled_rows.size(); ++r) {
    auto src = params.token_embed.row(static_cast<std::size_t>(token_ids[cache.pooled_rows[r]]));
    std::copy(src.begin(), src.end(), x.row(r).begin());
  }
  const Matrix h = transformer_block_forward(x, params.block, cache.block);
  cache.pooled = column_mean(h);
  return project(cache.pooled, params.out_proj);
}

void encode_text_backward(const TextEncoderCache& cache, const TextEncoderParams& params,
                          std::span<const double> d_embedding, TextEncoderParams& grads) {
  check_embedding_grad(d_embedding, params.out_proj);
  Matrix d_pooled = projection_backward(cache.pooled, params.out_proj, d_embedding, grads.out_proj);
  const std::size_t n = cache.pooled_rows.size();
  Matrix dh(n, d_pooled.cols());
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dh.cols(); ++c) dh(r, c) = d_pooled(0, c) * inv;
  const Matrix dx = transformer_block_backward(cache.block, params.block, dh, grads.block);
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = grads.token_embed.row(static_cast<std::size_t>(cache.tokens[cache.pooled_rows[r]]));
    auto src = dx.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
}

// ---------------------------------------------------------------------------

double similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cannot compare embeddings of length " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

void similarity_backward(std::span<const double> a, std::span<const double> b, double d_sim, std::span<double> da,
                         std::span<double> db) {
  if (a.size() != b.size() || da.size() != a.size() || db.size() != b.size()) {
    throw ShapeError("similarity gradient buffers do not match embedding length " + std::to_string(a.size()));
  }
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return;
  const double s = dot(a, b) / (na * nb);
  // ∂s/∂a = b/(|a||b|) − s·a/|a|²
  for (std::size_t i = 0; i < a.size(); ++i) {
    da[i] += d_sim * (b[i] / (na * nb) - s * a[i] / (na * na));
    db[i] += d_sim * (a[i] / (na * nb) - s * b[i] / (nb * nb));
  }
}

double mse_loss(std::span<const double> sims, std::span<const double> labels) {
  if (sims.empty()) throw InvalidInputError("loss over an empty batch");
  if (sims.size() != labels.size()) {
    throw ShapeError(std::to_string(sims.size()) + " scores but " + std::to_string(labels.size()) + " labels");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < sims.size(); ++i) s += (sims[i] - labels[i]) * (sims[i] - labels[i]);
  return s / static_cast<double>(sims.size());
}

Vector mse_loss_grad(std::span<const double> sims, std::span<const double> labels) {
  if (sims.empty()) throw InvalidInputError("loss over an empty batch");
  if (sims.size() != labels.size()) {
    throw ShapeError(std::to_string(sims.size()) + " scores but " + std::to_string(labels.size()) + " labels");
  }
  Vector g(sims.size());
  const double scale = 2.0 / static_cast<double>(sims.size());
  for (std::size_t i = 0; i < sims.size(); ++i) g[i] = scale * (sims[i] - labels[i]);
  return g;
}

Vector concat(std::span<const double> a, std::span<const double> b) {
  Vector out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double match_score(const MatchModel& model, std::span<const double> image_embedding,
                   std::span<const double> text_embedding, bool use_mkl_head) {
  if (use_mkl_head && model.mkl_head) return decision_function(*model.mkl_head, concat(image_embedding, text_embedding));
  return similarity(image_embedding, text_embedding);
}

}  // namespace visita
