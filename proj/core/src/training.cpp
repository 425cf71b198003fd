#include "visita/training.hpp"

#include <cmath>
#include <map>
#include <numeric>

namespace visita {

void TrainConfig::validate() const {
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) throw ConfigError("learning_rate must be finite and >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (negative_ratio == 0) throw ConfigError("negative ratio must be positive");
}

std::vector<TrainingPair> sample_negatives(std::span<const TrainingPair> positives, Rng& rng, std::size_t ratio) {
  if (positives.size() < 2) throw InvalidInputError("negative sampling needs a batch of at least 2 positives");
  std::vector<TrainingPair> out(positives.begin(), positives.end());
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < positives.size(); ++j)
      if (positives[j].group != positives[i].group) candidates.push_back(j);
    if (candidates.empty()) continue;
    for (std::size_t r = 0; r < ratio; ++r) {
      const auto& other = positives[candidates[rng.below(candidates.size())]];
      out.push_back({positives[i].image, other.text, 0.0, positives[i].group});
    }
  }
  return out;
}

namespace {

std::string image_label(const MicroBatch& b, std::size_t i) {
  return "image " + (i < b.image_ids.size() ? b.image_ids[i] : "#" + std::to_string(i));
}

std::string text_label(const MicroBatch& b, std::size_t i) {
  return "text " + (i < b.text_ids.size() ? b.text_ids[i] : "#" + std::to_string(i));
}

void check_batch(const MicroBatch& b) {
  if (b.pairs.empty()) throw InvalidInputError("loss over an empty batch");
  for (const auto& p : b.pairs) {
    if (p.image >= b.images.size() || p.text >= b.texts.size()) {
      throw InvalidInputError("batch pair references sample outside the batch");
    }
  }
}

double forward(const MatchModel& model, const MicroBatch& b, std::vector<ImageEncoderCache>* icache,
               std::vector<TextEncoderCache>* tcache, std::vector<Vector>& img_emb, std::vector<Vector>& txt_emb,
               Vector& sims, Vector& labels) {
  check_batch(b);
  img_emb.resize(b.images.size());
  txt_emb.resize(b.texts.size());
  if (icache) icache->resize(b.images.size());
  if (tcache) tcache->resize(b.texts.size());
  for (std::size_t i = 0; i < b.images.size(); ++i) {
    try {
      img_emb[i] = icache ? encode_image_forward(model.image_enc, *b.images[i], (*icache)[i])
                          : encode_image(model.image_enc, *b.images[i]);
    } catch (...) {
      rethrow_with_context(image_label(b, i));
    }
  }
  for (std::size_t i = 0; i < b.texts.size(); ++i) {
    try {
      txt_emb[i] = tcache ? encode_text_forward(model.text_enc, *b.texts[i], (*tcache)[i])
                          : encode_text(model.text_enc, *b.texts[i]);
    } catch (...) {
      rethrow_with_context(text_label(b, i));
    }
  }
  sims.resize(b.pairs.size());
  labels.resize(b.pairs.size());
  for (std::size_t k = 0; k < b.pairs.size(); ++k) {
    sims[k] = similarity(img_emb[b.pairs[k].image], txt_emb[b.pairs[k].text]);
    labels[k] = b.pairs[k].label;
  }
  return mse_loss(sims, labels);
}

}  // namespace

double batch_loss(const MatchModel& model, const MicroBatch& batch) {
  std::vector<Vector> ie, te;
  Vector sims, labels;
  return forward(model, batch, nullptr, nullptr, ie, te, sims, labels);
}

double batch_loss_and_grad(const MatchModel& model, const MicroBatch& batch, MatchModel& grads) {
  std::vector<ImageEncoderCache> icache;
  std::vector<TextEncoderCache> tcache;
  std::vector<Vector> ie, te;
  Vector sims, labels;
  const double loss = forward(model, batch, &icache, &tcache, ie, te, sims, labels);
  const Vector dsim = mse_loss_grad(sims, labels);
  const std::size_t d = model.d_embed();
  std::vector<Vector> d_img(ie.size(), Vector(d, 0.0)), d_txt(te.size(), Vector(d, 0.0));
  for (std::size_t k = 0; k < batch.pairs.size(); ++k) {
    const auto& p = batch.pairs[k];
    similarity_backward(ie[p.image], te[p.text], dsim[k], d_img[p.image], d_txt[p.text]);
  }
  for (std::size_t i = 0; i < ie.size(); ++i) encode_image_backward(icache[i], model.image_enc, d_img[i], grads.image_enc);
  for (std::size_t i = 0; i < te.size(); ++i) encode_text_backward(tcache[i], model.text_enc, d_txt[i], grads.text_enc);
  return loss;
}

std::vector<std::size_t> match_groups(const PairDataset& data, std::span<const std::size_t> pair_indices) {
  const std::size_t n = pair_indices.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  std::map<std::size_t, std::size_t> by_image;
  std::map<std::vector<int>, std::size_t> by_tokens;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& p = data.pairs.at(pair_indices[k]);
    auto [ii, fresh_i] = by_image.emplace(p.image, k);
    if (!fresh_i) unite(k, ii->second);
    auto [ti, fresh_t] = by_tokens.emplace(data.texts.at(p.text).tokens, k);
    if (!fresh_t) unite(k, ti->second);
  }
  std::vector<std::size_t> out(n);
  std::map<std::size_t, std::size_t> dense;
  for (std::size_t k = 0; k < n; ++k) out[k] = dense.emplace(find(k), dense.size()).first->second;
  return out;
}

TrainResult train(MatchModel model, const PairDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> positives;
  for (std::size_t i : data.split_indices(Split::train))
    if (data.pairs[i].label == 1) positives.push_back(i);
  if (positives.empty()) throw InvalidInputError("train split has no matching pairs");
  const auto groups = match_groups(data, positives);

  TrainResult result;
  result.loss_history.reserve(cfg.epochs);
  Rng order_rng = Rng(cfg.seed).derive(0x5348);
  Rng neg_rng = Rng(cfg.seed).derive(0x4e45);
  MatchModel grads = zeros_like(model);
  grads.mkl_head.reset();
  std::vector<std::size_t> order(positives.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      MicroBatch mb;
      std::map<std::size_t, std::size_t> local_image;
      std::vector<TrainingPair> pos;
      for (std::size_t k = start; k < end; ++k) {
        const auto& p = data.pairs[positives[order[k]]];
        auto [it, fresh] = local_image.emplace(p.image, mb.images.size());
        if (fresh) {
          mb.images.push_back(&data.images[p.image].pixels);
          mb.image_ids.push_back(data.images[p.image].id);
        }
        mb.texts.push_back(&data.texts[p.text].tokens);
        mb.text_ids.push_back(data.texts[p.text].id);
        pos.push_back({it->second, mb.texts.size() - 1, 1.0, groups[order[k]]});
      }
      // A lone trailing positive has no in-batch negative and trains alone.
      mb.pairs = pos.size() >= 2 ? sample_negatives(pos, neg_rng, cfg.negative_ratio) : pos;
      grads.for_each([](const std::string&, Matrix& m) { m.fill(0.0); });
      const double loss = batch_loss_and_grad(model, mb, grads);
      sgd_step(model, grads, cfg.learning_rate);
      total += loss * static_cast<double>(mb.pairs.size());
      count += mb.pairs.size();
    }
    result.loss_history.push_back(total / static_cast<double>(count));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace visita
