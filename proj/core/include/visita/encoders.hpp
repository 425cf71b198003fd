#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "visita/attention.hpp"
#include "visita/mkl_solver.hpp"
#include "visita/numerics.hpp"
#include "visita/params.hpp"

namespace visita {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t patch_size = 4;
  std::size_t conv_channels = 8;
  std::size_t d_model = 64;
  std::size_t d_embed = 64;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t ffn_hidden = 128;
  std::size_t caption_len = 16;
  std::size_t vocab_size = 0;
  /// Scale applied to the Glorot range of the two output projections.
  /// Cosine similarity is invariant to the embedding scale, so a small head
  /// raises the relative step size of the projections under plain SGD.
  double head_init_gain = 0.05;

  /// Throws ConfigError on any inconsistent dimension.
  void validate() const;
  std::size_t num_patches() const noexcept { return (image_size / patch_size) * (image_size / patch_size); }
  std::size_t patch_dim() const noexcept { return patch_size * patch_size * conv_channels; }
};

struct ImageEncoderParams {
  Matrix conv_w;  // (9·channels) × conv_channels, rows ordered (ky, kx, c)
  Matrix conv_b;  // 1 × conv_channels
  std::size_t patch_size = 0;
  PatchEmbedParams patch;
  std::vector<TransformerBlockParams> blocks;
  Matrix out_proj;  // d_model × d_embed

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
    f(std::string("conv_w"), s.conv_w);
    f(std::string("conv_b"), s.conv_b);
    s.patch.for_each(prefixed("patch.", f));
    for (std::size_t i = 0; i < s.blocks.size(); ++i) s.blocks[i].for_each(prefixed("blocks." + std::to_string(i) + ".", f));
    f(std::string("out_proj"), s.out_proj);
  }
};

struct TextEncoderParams {
  std::size_t vocab_size = 0;
  Matrix token_embed;  // vocab_size × d_model
  TransformerBlockParams block;
  Matrix out_proj;  // d_model × d_embed

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
    f(std::string("token_embed"), s.token_embed);
    s.block.for_each(prefixed("block.", f));
    f(std::string("out_proj"), s.out_proj);
  }
};

struct MatchModel {
  ModelConfig config;
  ImageEncoderParams image_enc;
  TextEncoderParams text_enc;
  /// Optional re-scoring head fitted on concatenated (image ‖ text)
  /// embeddings. Not part of the SGD parameter set.
  std::optional<MklModel> mkl_head;

  static MatchModel init(const ModelConfig& config, std::uint64_t seed);

  std::size_t d_embed() const noexcept { return config.d_embed; }

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
    s.image_enc.for_each(prefixed("image.", f));
    s.text_enc.for_each(prefixed("text.", f));
  }
};

// ---------------------------------------------------------------------------

struct ImageEncoderCache {
  Matrix cols;      // im2col, (H·W) × (9·C)
  Matrix conv_pre;  // (H·W) × conv_channels
  PatchGrid grid;   // patches of the post-ReLU feature map
  std::vector<TransformerBlockCache> blocks;
  Matrix pooled;  // 1 × d_model
};

struct TextEncoderCache {
  std::vector<int> tokens;
  TransformerBlockCache block;
  std::vector<std::size_t> pooled_rows;  // positions fed to the block
  Matrix pooled;  // 1 × d_model
};

/// conv stem → patch_embed → blocks → mean-pool → projection.
Vector encode_image(const ImageEncoderParams& params, const ImageTensor& image);
Vector encode_image_forward(const ImageEncoderParams& params, const ImageTensor& image, ImageEncoderCache& cache);
/// Accumulates into `grads`.
void encode_image_backward(const ImageEncoderCache& cache, const ImageEncoderParams& params,
                           std::span<const double> d_embedding, ImageEncoderParams& grads);

/// token embedding of the non-PAD positions (all positions when every token
/// is PAD) → block → mean-pool → projection. Throws InvalidInputError naming the
/// position of an out-of-range id.
Vector encode_text(const TextEncoderParams& params, std::span<const int> token_ids);
Vector encode_text_forward(const TextEncoderParams& params, std::span<const int> token_ids, TextEncoderCache& cache);
void encode_text_backward(const TextEncoderCache& cache, const TextEncoderParams& params,
                          std::span<const double> d_embedding, TextEncoderParams& grads);

/// Cosine similarity; 0 when either vector has zero norm.
double similarity(std::span<const double> a, std::span<const double> b);
/// Adds d_sim · ∂sim/∂a to `da` and d_sim · ∂sim/∂b to `db`.
void similarity_backward(std::span<const double> a, std::span<const double> b, double d_sim, std::span<double> da,
                         std::span<double> db);

/// mean (sim_i − label_i)². Throws InvalidInputError on an empty batch.
double mse_loss(std::span<const double> sims, std::span<const double> labels);
/// ∂loss/∂sim_i = 2 (sim_i − label_i) / n.
Vector mse_loss_grad(std::span<const double> sims, std::span<const double> labels);

/// Final matching score: MKL decision value when `use_mkl_head` and a head is
/// present, cosine similarity otherwise.
double match_score(const MatchModel& model, std::span<const double> image_embedding,
                   std::span<const double> text_embedding, bool use_mkl_head);

Vector concat(std::span<const double> a, std::span<const double> b);

}  // namespace visita
