#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "visita/numerics.hpp"
#include "visita/params.hpp"
#include "visita/rng.hpp"

namespace visita {

// ---------------------------------------------------------------------------
// Scaled dot-product attention
// ---------------------------------------------------------------------------

struct AttentionInput {
  Matrix q;  // n_q × d_k
  Matrix k;  // n × d_k
  Matrix v;  // n × d_v

  /// Throws ShapeError unless q.cols == k.cols, k.rows == v.rows, all dims >= 1.
  void validate() const;
};

struct AttentionResult {
  Matrix out;      // n_q × d_v
  Matrix weights;  // n_q × n, rows sum to 1
};

struct AttentionGrads {
  Matrix q, k, v;
};

/// weights = softmax(q·kᵀ / sqrt(d_k)), out = weights · v.
AttentionResult scaled_dot_attention(const AttentionInput& in);

/// Gradients of ⟨upstream, out⟩ with respect to q, k and v.
AttentionGrads attention_backward(const AttentionInput& in, const Matrix& upstream);
/// Same, reusing forward weights.
AttentionGrads attention_backward(const AttentionInput& in, const Matrix& weights, const Matrix& upstream);

// ---------------------------------------------------------------------------
// Multi-head attention
// ---------------------------------------------------------------------------

struct MultiHeadParams {
  std::size_t heads = 0;
  std::vector<Matrix> wq, wk, wv;  // heads × (d_model × d_head)
  Matrix wo;                       // (heads·d_head) × d_model

  /// Glorot-initialized parameters. Throws ConfigError when heads does not
  /// divide d_model.
  static MultiHeadParams init(std::size_t d_model, std::size_t heads, Rng& rng);

  std::size_t d_model() const noexcept { return wo.cols(); }
  std::size_t d_head() const noexcept { return wq.empty() ? 0 : wq.front().cols(); }
  void validate() const;

  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit(Self& s, F& f) {
    for (std::size_t i = 0; i < s.wq.size(); ++i) f("wq." + std::to_string(i), s.wq[i]);
    for (std::size_t i = 0; i < s.wk.size(); ++i) f("wk." + std::to_string(i), s.wk[i]);
    for (std::size_t i = 0; i < s.wv.size(); ++i) f("wv." + std::to_string(i), s.wv[i]);
    f(std::string("wo"), s.wo);
  }
};

struct MultiHeadCache {
  Matrix x;
  std::vector<AttentionInput> inputs;
  std::vector<Matrix> weights;
  Matrix concat;
};

/// Self-attention: head_i = attention(x·wq_i, x·wk_i, x·wv_i), output =
/// concat(heads) · wo.
Matrix multi_head_attention(const Matrix& x, const MultiHeadParams& params);
Matrix multi_head_forward(const Matrix& x, const MultiHeadParams& params, MultiHeadCache& cache);
/// Accumulates parameter gradients into `grads` and returns d/dx.
Matrix multi_head_backward(const MultiHeadCache& cache, const MultiHeadParams& params, const Matrix& upstream,
                           MultiHeadParams& grads);

// ---------------------------------------------------------------------------
// Patch embedding
// ---------------------------------------------------------------------------

struct PatchGrid {
  std::size_t patch_size = 0;
  Matrix patches;  // num_patches × (patch_size² · channels)
  std::size_t height = 0, width = 0, channels = 0;

  std::size_t grid_rows() const noexcept { return patch_size ? height / patch_size : 0; }
  std::size_t grid_cols() const noexcept { return patch_size ? width / patch_size : 0; }
};

/// Row-major patch order; each patch flattened (row, column, channel).
/// Throws ShapeError naming H, W and patch_size when they do not divide.
PatchGrid extract_patches(const ImageTensor& image, std::size_t patch_size);
/// Exact inverse of extract_patches.
ImageTensor assemble_patches(const PatchGrid& grid);
/// Scatters per-patch gradients back onto the source image layout.
ImageTensor patch_gradient_to_image(const Matrix& patch_grads, const PatchGrid& layout);

struct PatchEmbedParams {
  Matrix projection;  // patch_dim × d_model
  Matrix positions;   // num_patches × d_model

  static PatchEmbedParams init(std::size_t patch_dim, std::size_t num_patches, std::size_t d_model, Rng& rng);

  template <class F>
  void for_each(F&& f) {
    f(std::string("projection"), projection);
    f(std::string("positions"), positions);
  }
  template <class F>
  void for_each(F&& f) const {
    f(std::string("projection"), projection);
    f(std::string("positions"), positions);
  }
};

/// patches · projection + positions.
Matrix patch_embed(const ImageTensor& image, std::size_t patch_size, const PatchEmbedParams& params);
Matrix patch_embed(const PatchGrid& grid, const PatchEmbedParams& params);

// ---------------------------------------------------------------------------
// Layer norm and the transformer block
// ---------------------------------------------------------------------------

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Matrix xhat;
  Vector inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache* cache = nullptr);
/// Accumulates into d_gain/d_bias, returns d/dx.
Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& gain, const Matrix& upstream, Matrix& d_gain,
                           Matrix& d_bias);

struct TransformerBlockParams {
  MultiHeadParams mha;
  Matrix ffn_w1;  // d_model × d_ff
  Matrix ffn_w2;  // d_ff × d_model
  Matrix ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 × d_model

  static TransformerBlockParams init(std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng);

  std::size_t d_model() const noexcept { return mha.d_model(); }
  void validate() const;

  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit(Self& s, F& f) {
    s.mha.for_each(prefixed("mha.", f));
    f(std::string("ffn_w1"), s.ffn_w1);
    f(std::string("ffn_w2"), s.ffn_w2);
    f(std::string("ln1_gain"), s.ln1_gain);
    f(std::string("ln1_bias"), s.ln1_bias);
    f(std::string("ln2_gain"), s.ln2_gain);
    f(std::string("ln2_bias"), s.ln2_bias);
  }
};

struct TransformerBlockCache {
  LayerNormCache ln1, ln2;
  MultiHeadCache mha;
  Matrix h2;
  Matrix hidden_pre;  // h2 · w1 before ReLU
  Matrix hidden;      // after ReLU
};

/// Pre-norm residual block: y = x + MHA(LN1(x)); out = y + ReLU(LN2(y)·w1)·w2.
Matrix transformer_block(const Matrix& x, const TransformerBlockParams& params);
Matrix transformer_block_forward(const Matrix& x, const TransformerBlockParams& params, TransformerBlockCache& cache);
Matrix transformer_block_backward(const TransformerBlockCache& cache, const TransformerBlockParams& params,
                                  const Matrix& upstream, TransformerBlockParams& grads);

}  // namespace visita
