#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace visita {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// tp / (tp + fn). UndefinedMetricError when tp + fn = 0.
double recall(const ConfusionCounts& c);
/// tp / (tp + fp). UndefinedMetricError when tp + fp = 0.
double precision(const ConfusionCounts& c);

struct RankedList {
  std::string query_id;
  std::vector<std::string> candidates;  // best first
  std::set<std::string> relevant;

  /// InvalidInputError on duplicate candidates or a relevant id that is not
  /// a candidate.
  void validate() const;
};

/// (1/|R|) Σ_{ranks r holding a relevant item} (relevant items at ranks ≤ r) / r.
/// UndefinedMetricError when the relevant set is empty.
double average_precision(const RankedList& list);
/// Mean of per-list AP. InvalidInputError on an empty collection; an
/// undefined AP is rethrown naming its query id.
double mean_average_precision(std::span<const RankedList> lists);
/// Fraction of lists with a relevant item among the first k candidates.
/// InvalidInputError for k = 0 or an empty collection.
double recall_at_k(std::span<const RankedList> lists, std::size_t k);

struct QueryAp {
  std::string direction;  // "image_to_text" or "text_to_image"
  std::string query_id;
  double ap = 0.0;
};

struct DirectionMetrics {
  double map = 0.0;
  std::map<std::size_t, double> recall_at_k;
};

struct EvalReport {
  std::optional<double> recall;     // null when undefined
  std::optional<double> precision;  // null when undefined
  double map = 0.0;
  std::map<std::size_t, double> recall_at_k;
  DirectionMetrics image_to_text, text_to_image;
  std::vector<QueryAp> per_query_ap;
  ConfusionCounts counts;
  double threshold = 0.5;
  std::string scorer = "cosine";
  std::size_t num_images = 0, num_texts = 0;

  std::string to_json(int indent = 2) const;
  /// Aligned columns: Method, Recall, Precision, mAP, R@k...
  std::string to_table(const std::string& method = "visita") const;
};

}  // namespace visita
