#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace visita::cli {

struct GradcheckOptions {
  std::uint64_t seed = 42;
  std::size_t instances = 20;
  double h = 1e-5;
  /// Test hook: audits a backward pass with the softmax Jacobian's row-sum
  /// term removed, which must fail.
  bool corrupt_backward = false;
};

struct GradcheckRow {
  std::string name;
  std::size_t instances = 0;
  std::size_t tensors = 0;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::string worst_tensor;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;

  bool pass() const;
  std::string table() const;
  std::string to_json(int indent = 2) const;
};

/// Central-difference audit of scaled_dot_attention, multi_head_attention,
/// transformer_block (threshold 1e-4) and the end-to-end micro-batch loss
/// (threshold 1e-3, two positives plus two negatives, d_embed 4).
GradcheckReport run_gradient_audit(const GradcheckOptions& options = {});

}  // namespace visita::cli
