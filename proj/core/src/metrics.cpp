#include "visita/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "visita/error.hpp"

namespace visita {

double recall(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw UndefinedMetricError("recall with tp + fn = 0");
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double precision(const ConfusionCounts& c) {
  if (c.tp + c.fp == 0) throw UndefinedMetricError("precision with tp + fp = 0");
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

void RankedList::validate() const {
  std::set<std::string> seen;
  for (const auto& c : candidates) {
    if (!seen.insert(c).second) throw InvalidInputError("query " + query_id + ": duplicate candidate '" + c + "'");
  }
  for (const auto& r : relevant) {
    if (!seen.count(r)) throw InvalidInputError("query " + query_id + ": relevant id '" + r + "' is not a candidate");
  }
}

double average_precision(const RankedList& list) {
  list.validate();
  if (list.relevant.empty()) throw UndefinedMetricError("average precision of query " + list.query_id + " with no relevant items");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < list.candidates.size(); ++r) {
    if (list.relevant.count(list.candidates[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(list.relevant.size());
}

double mean_average_precision(std::span<const RankedList> lists) {
  if (lists.empty()) throw InvalidInputError("mean average precision over no queries");
  double sum = 0.0;
  for (const auto& l : lists) {
    try {
      sum += average_precision(l);
    } catch (const UndefinedMetricError& e) {
      throw UndefinedMetricError("query " + l.query_id + ": " + e.what());
    }
  }
  return sum / static_cast<double>(lists.size());
}

double recall_at_k(std::span<const RankedList> lists, std::size_t k) {
  if (k == 0) throw InvalidInputError("recall@k needs k >= 1");
  if (lists.empty()) throw InvalidInputError("recall@k over no queries");
  std::size_t hits = 0;
  for (const auto& l : lists) {
    const std::size_t top = std::min(k, l.candidates.size());
    for (std::size_t r = 0; r < top; ++r) {
      if (l.relevant.count(l.candidates[r])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(lists.size());
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

nlohmann::json recall_map_json(const std::map<std::size_t, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << 100.0 * *v;
  return ss.str();
}

}  // namespace

std::string EvalReport::to_json(int indent) const {
  nlohmann::json j;
  j["recall"] = optional_json(recall);
  j["precision"] = optional_json(precision);
  j["map"] = map;
  j["recall_at_k"] = recall_map_json(recall_at_k);
  j["image_to_text"] = {{"map", image_to_text.map}, {"recall_at_k", recall_map_json(image_to_text.recall_at_k)}};
  j["text_to_image"] = {{"map", text_to_image.map}, {"recall_at_k", recall_map_json(text_to_image.recall_at_k)}};
  j["counts"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}, {"tn", counts.tn}};
  j["threshold"] = threshold;
  j["scorer"] = scorer;
  j["num_images"] = num_images;
  j["num_texts"] = num_texts;
  j["definitions"] = {
      {"recall_precision", "score >= threshold over every image-text pair of the split, matched pairs positive"},
      {"map_recall_at_k", "mean of image->text and text->image retrieval"},
  };
  nlohmann::json aps = nlohmann::json::array();
  for (const auto& q : per_query_ap) aps.push_back({{"direction", q.direction}, {"query", q.query_id}, {"ap", q.ap}});
  j["per_query_ap"] = std::move(aps);
  return j.dump(indent);
}

std::string EvalReport::to_table(const std::string& method) const {
  std::vector<std::string> head{"Method", "Recall", "Precision", "mAP"};
  std::vector<std::string> row{method, percent(recall), percent(precision), percent(map)};
  for (const auto& [k, v] : recall_at_k) {
    head.push_back("R@" + std::to_string(k));
    row.push_back(percent(v));
  }
  std::ostringstream ss;
  for (std::size_t i = 0; i < head.size(); ++i) {
    const std::size_t w = std::max(head[i].size(), row[i].size()) + 2;
    ss << std::left << std::setw(static_cast<int>(w)) << head[i];
  }
  ss << "\n";
  for (std::size_t i = 0; i < head.size(); ++i) {
    const std::size_t w = std::max(head[i].size(), row[i].size()) + 2;
    ss << std::left << std::setw(static_cast<int>(w)) << row[i];
  }
  ss << "\n";
  return ss.str();
}

}  // namespace visita
