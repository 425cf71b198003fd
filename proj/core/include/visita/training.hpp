#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "visita/data_io.hpp"
#include "visita/encoders.hpp"
#include "visita/error.hpp"
#include "visita/rng.hpp"

namespace visita {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::uint64_t seed = 42;
  std::size_t negative_ratio = 1;

  /// ConfigError on lr < 0, non-finite lr, batch_size 0 or ratio 0.
  void validate() const;
};

/// One (image, text, label) example. `group` identifies the set of samples
/// that count as matching each other; a negative never pairs two samples of
/// the same group.
struct TrainingPair {
  std::size_t image = 0;
  std::size_t text = 0;
  double label = 1.0;
  std::size_t group = 0;
};

/// For each positive (img_i, txt_i) appends `ratio` pairs (img_i, txt_j, 0)
/// with j drawn uniformly among batch positives of a different group. A
/// positive whose batch holds no other group contributes no negative.
/// Throws InvalidInputError for fewer than two positives.
std::vector<TrainingPair> sample_negatives(std::span<const TrainingPair> positives, Rng& rng, std::size_t ratio = 1);

/// p ← p − lr·g for every tensor. Throws ShapeError naming the first tensor
/// whose gradient shape differs.
template <class P>
void sgd_step(P& params, const P& grads, double lr) {
  if (!(lr >= 0.0)) throw InvalidInputError("learning rate must be nonnegative");
  auto gs = list_tensors(grads);
  std::size_t i = 0;
  params.for_each([&](const std::string& name, Matrix& p) {
    if (i >= gs.size() || gs[i].first != name || !gs[i].second->same_shape(p)) {
      throw ShapeError("gradient for parameter '" + name + "' does not match " + p.shape_str());
    }
    const auto g = gs[i].second->values();
    auto v = p.values();
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= lr * g[k];
    ++i;
  });
  if (i != gs.size()) throw ShapeError("gradient set has " + std::to_string(gs.size() - i) + " extra tensors");
}

/// A self-contained batch: pairs index into `images` and `texts`.
struct MicroBatch {
  std::vector<const ImageTensor*> images;
  std::vector<const std::vector<int>*> texts;
  std::vector<TrainingPair> pairs;
  /// Optional sample ids used in error messages.
  std::vector<std::string> image_ids, text_ids;
};

/// mse_loss over the batch's cosine similarities.
double batch_loss(const MatchModel& model, const MicroBatch& batch);
/// Same loss; adds its gradient with respect to every model tensor into
/// `grads`, which must share the model's layout.
double batch_loss_and_grad(const MatchModel& model, const MicroBatch& batch, MatchModel& grads);

/// Group id per pair: pairs sharing an image or an identical token sequence
/// are linked, transitively.
std::vector<std::size_t> match_groups(const PairDataset& data, std::span<const std::size_t> pair_indices);

struct TrainResult {
  MatchModel model;
  std::vector<double> loss_history;  // mean loss per epoch
};

/// SGD over the label-1 train pairs with in-batch negatives. Fully
/// determined by (model, data, cfg).
TrainResult train(MatchModel model, const PairDataset& data, const TrainConfig& cfg);

}  // namespace visita
