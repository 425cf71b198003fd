#include "visita/retrieval.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "visita/error.hpp"
#include "visita/training.hpp"

namespace visita {

namespace {

std::vector<std::size_t> rank_desc(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

DirectionMetrics direction_metrics(const std::vector<RankedList>& lists, std::span<const std::size_t> ks,
                                   const std::string& name, std::vector<QueryAp>& aps) {
  DirectionMetrics d;
  d.map = mean_average_precision(lists);
  for (std::size_t k : ks) d.recall_at_k[k] = recall_at_k(lists, k);
  for (const auto& l : lists) aps.push_back({name, l.query_id, average_precision(l)});
  return d;
}

}  // namespace

EvalReport evaluate_scores(const ScoredSplit& split, std::span<const std::size_t> ks, double threshold) {
  const std::size_t ni = split.scores.rows(), nt = split.scores.cols();
  if (ni == 0 || nt == 0) throw InvalidInputError("retrieval evaluation over an empty split");
  if (split.image_groups.size() != ni || split.text_groups.size() != nt || split.image_ids.size() != ni ||
      split.text_ids.size() != nt) {
    throw ShapeError("score matrix " + split.scores.shape_str() + " does not match group and id lists");
  }
  if (!all_finite(split.scores)) throw InvalidInputError("retrieval scores contain NaN or infinity");

  std::vector<RankedList> i2t, t2i;
  for (std::size_t i = 0; i < ni; ++i) {
    RankedList l;
    l.query_id = split.image_ids[i];
    for (std::size_t j : rank_desc(split.scores.row(i))) {
      l.candidates.push_back(split.text_ids[j]);
      if (split.text_groups[j] == split.image_groups[i]) l.relevant.insert(split.text_ids[j]);
    }
    i2t.push_back(std::move(l));
  }
  const Matrix st = transpose(split.scores);
  for (std::size_t j = 0; j < nt; ++j) {
    RankedList l;
    l.query_id = split.text_ids[j];
    for (std::size_t i : rank_desc(st.row(j))) {
      l.candidates.push_back(split.image_ids[i]);
      if (split.image_groups[i] == split.text_groups[j]) l.relevant.insert(split.image_ids[i]);
    }
    t2i.push_back(std::move(l));
  }

  EvalReport r;
  r.threshold = threshold;
  r.num_images = ni;
  r.num_texts = nt;
  r.image_to_text = direction_metrics(i2t, ks, "image_to_text", r.per_query_ap);
  r.text_to_image = direction_metrics(t2i, ks, "text_to_image", r.per_query_ap);
  r.map = 0.5 * (r.image_to_text.map + r.text_to_image.map);
  for (std::size_t k : ks) r.recall_at_k[k] = 0.5 * (r.image_to_text.recall_at_k[k] + r.text_to_image.recall_at_k[k]);

  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t j = 0; j < nt; ++j) {
      const bool predicted = split.scores(i, j) >= threshold;
      const bool actual = split.image_groups[i] == split.text_groups[j];
      if (predicted && actual) ++r.counts.tp;
      else if (predicted) ++r.counts.fp;
      else if (actual) ++r.counts.fn;
      else ++r.counts.tn;
    }
  }
  if (r.counts.tp + r.counts.fn > 0) r.recall = recall(r.counts);
  if (r.counts.tp + r.counts.fp > 0) r.precision = precision(r.counts);
  return r;
}

ScoredSplit score_split(const MatchModel& model, const PairDataset& data, Split split, bool use_mkl_head) {
  if (use_mkl_head && !model.mkl_head) throw ConfigError("MKL head requested but the model has none");
  std::vector<std::size_t> pairs;
  for (std::size_t i : data.split_indices(split))
    if (data.pairs[i].label == 1) pairs.push_back(i);
  if (pairs.empty()) throw InvalidInputError(to_string(split) + " split has no matching pairs");
  const auto groups = match_groups(data, pairs);

  ScoredSplit s;
  std::map<std::size_t, std::size_t> local;
  std::vector<Vector> img_emb, txt_emb;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = data.pairs[pairs[k]];
    if (local.emplace(p.image, img_emb.size()).second) {
      const auto& im = data.images.at(p.image);
      try {
        img_emb.push_back(encode_image(model.image_enc, im.pixels));
      } catch (...) {
        rethrow_with_context("image " + im.id);
      }
      s.image_ids.push_back(im.id);
      s.image_groups.push_back(groups[k]);
    }
    const auto& t = data.texts.at(p.text);
    try {
      txt_emb.push_back(encode_text(model.text_enc, t.tokens));
    } catch (...) {
      rethrow_with_context("text " + t.id);
    }
    s.text_ids.push_back(t.id);
    s.text_groups.push_back(groups[k]);
  }
  s.scores = Matrix(img_emb.size(), txt_emb.size());
  for (std::size_t i = 0; i < img_emb.size(); ++i)
    for (std::size_t j = 0; j < txt_emb.size(); ++j) s.scores(i, j) = match_score(model, img_emb[i], txt_emb[j], use_mkl_head);
  return s;
}

EvalReport evaluate_retrieval(const MatchModel& model, const PairDataset& data, Split split,
                              std::span<const std::size_t> ks, bool use_mkl_head) {
  EvalReport r = evaluate_scores(score_split(model, data, split, use_mkl_head), ks, use_mkl_head ? 0.0 : 0.5);
  r.scorer = use_mkl_head ? "mkl" : "cosine";
  return r;
}

MklModel fit_mkl_head(const MatchModel& model, const PairDataset& data, const MklHeadOptions& options) {
  std::vector<std::size_t> pairs;
  for (std::size_t i : data.split_indices(Split::train))
    if (data.pairs[i].label == 1) pairs.push_back(i);
  if (pairs.size() < 2) throw InvalidInputError("MKL head needs at least 2 matching train pairs");
  const auto all_groups = match_groups(data, pairs);

  std::vector<std::size_t> pick(pairs.size());
  std::iota(pick.begin(), pick.end(), 0);
  Rng rng = Rng(options.seed).derive(0x4d4b);
  rng.shuffle(std::span<std::size_t>(pick));
  pick.resize(std::min(pick.size(), options.positives));

  std::vector<Vector> img_emb, txt_emb;
  for (std::size_t k : pick) {
    const auto& p = data.pairs[pairs[k]];
    img_emb.push_back(encode_image(model.image_enc, data.images.at(p.image).pixels));
    txt_emb.push_back(encode_text(model.text_enc, data.texts.at(p.text).tokens));
  }
  MklProblem problem;
  problem.kernel_bank = options.kernel_bank;
  problem.C = options.C;
  std::vector<std::size_t> others;
  for (std::size_t a = 0; a < pick.size(); ++a) {
    problem.xs.push_back(concat(img_emb[a], txt_emb[a]));
    problem.ys.push_back(1);
    others.clear();
    for (std::size_t b = 0; b < pick.size(); ++b)
      if (all_groups[pick[b]] != all_groups[pick[a]]) others.push_back(b);
    if (others.empty()) continue;
    const std::size_t b = others[rng.below(others.size())];
    problem.xs.push_back(concat(img_emb[a], txt_emb[b]));
    problem.ys.push_back(-1);
  }
  return train_mkl(problem, options.mkl);
}

}  // namespace visita
