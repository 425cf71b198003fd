#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "visita/data_io.hpp"
#include "visita/encoders.hpp"
#include "visita/metrics.hpp"
#include "visita/mkl_solver.hpp"
#include "visita/numerics.hpp"

namespace visita {

/// Inputs to a retrieval evaluation: one score per (image, text) and a group
/// id per image and per text. An image and a text are relevant to each
/// other when their groups are equal.
struct ScoredSplit {
  Matrix scores;  // images × texts
  std::vector<std::size_t> image_groups, text_groups;
  std::vector<std::string> image_ids, text_ids;
};

/// Ranks texts for every image query and images for every text query (ties
/// broken by candidate order), reports both directions and their mean, and
/// counts score >= threshold against relevance over all cells.
EvalReport evaluate_scores(const ScoredSplit& split, std::span<const std::size_t> ks, double threshold = 0.5);

/// Encodes the label-1 pairs of `split` once. Images shared between pairs and
/// texts with identical tokens are relevant to each other. Scores are cosine
/// similarities (threshold 0.5) or, with `use_mkl_head`, the head's decision
/// value (threshold 0).
EvalReport evaluate_retrieval(const MatchModel& model, const PairDataset& data, Split split,
                              std::span<const std::size_t> ks, bool use_mkl_head = false);

/// Builds the ScoredSplit used by evaluate_retrieval.
ScoredSplit score_split(const MatchModel& model, const PairDataset& data, Split split, bool use_mkl_head);

struct MklHeadOptions {
  /// Matching pairs drawn from the train split; each contributes one
  /// positive and one mismatched (image ‖ text) point.
  std::size_t positives = 100;
  std::uint64_t seed = 42;
  double C = 1.0;
  std::vector<KernelSpec> kernel_bank = default_kernel_bank();
  MklOptions mkl;
};

/// Fits the re-scoring head on concatenated embeddings of train pairs.
MklModel fit_mkl_head(const MatchModel& model, const PairDataset& data, const MklHeadOptions& options = {});

}  // namespace visita
