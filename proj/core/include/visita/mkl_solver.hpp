#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "visita/kernels.hpp"
#include "visita/numerics.hpp"

namespace visita {

struct MklProblem {
  std::vector<Vector> xs;
  std::vector<int> ys;  // ±1
  std::vector<KernelSpec> kernel_bank;
  double C = 1.0;

  /// Throws InvalidInputError / ConfigError when the problem is malformed.
  void validate() const;
};

struct SvmSolution {
  Vector alpha;
  double bias = 0.0;
  double dual_objective = 0.0;
  double kkt_violation = 0.0;
  std::size_t iterations = 0;
  /// Single-class input: α = 0 and bias = that class.
  bool degenerate = false;
};

struct SmoOptions {
  double tol = 1e-3;
  /// Sweep budget; one sweep is N pair updates. 0 means a cap of max(10^7, 100·N)
  /// pair updates.
  std::size_t max_passes = 0;
};

/// Maximizes Σα − ½ΣΣ αᵢαⱼyᵢyⱼKᵢⱼ subject to 0 ≤ α ≤ C and Σαᵢyᵢ = 0 using
/// SMO with maximal-violating-pair selection. Throws ConvergenceError if the
/// KKT residual is still above `tol` once the sweep budget is spent.
SvmSolution solve_smo(const GramMatrix& gram, std::span<const int> ys, double C, const SmoOptions& options = {});

/// Dual objective Σα − ½ (α∘y)ᵀ K (α∘y).
double dual_objective(const Matrix& gram, std::span<const int> ys, std::span<const double> alpha);

/// Largest violation of the KKT conditions, m(α) − M(α) in the
/// maximal-violating-pair formulation. Zero for an optimal point.
double kkt_violation(const Matrix& gram, std::span<const int> ys, std::span<const double> alpha, double C);

/// Closed-form norm-proportional update β_j ∝ β_j·sqrt((α∘y)ᵀ K_j (α∘y)).
/// Returns `old` unchanged when every per-kernel norm is zero.
KernelWeights update_weights(std::span<const GramMatrix> grams, const SvmSolution& solution,
                             std::span<const int> ys, const KernelWeights& old);

struct MklOptions {
  double tol = 1e-4;
  std::size_t max_outer = 50;
  /// Inner SMO tolerance. Tighter than the standalone default so the outer
  /// objective is monotone to well below the reported slack.
  double smo_tol = 1e-7;
  std::size_t smo_max_passes = 0;
};

struct MklModel {
  static constexpr double kSupportThreshold = 1e-8;

  SvmSolution solution;
  KernelWeights weights = KernelWeights::uniform(1);
  std::vector<KernelSpec> kernel_bank;
  std::vector<Vector> support_xs;
  std::vector<int> support_ys;
  Vector support_alpha;
  std::size_t outer_iterations = 0;
  std::vector<KernelWeights> weight_trajectory;
  std::vector<double> objective_trajectory;
  bool converged = false;

  std::size_t dimension() const noexcept { return support_xs.empty() ? 0 : support_xs.front().size(); }
};

/// Alternates solve_smo on Σβ_jK_j with update_weights until
/// ‖β_new − β_old‖∞ < tol. If max_outer is reached first the iterate with the
/// lowest combined dual objective is returned with converged = false.
MklModel train_mkl(const MklProblem& problem, const MklOptions& options = {});

/// Compacts a solution into a model with support data (α > 1e-8).
MklModel make_model(const MklProblem& problem, const SvmSolution& solution, const KernelWeights& weights);

/// f(x) = Σᵢ αᵢyᵢ Σⱼ βⱼ kⱼ(xᵢ, x) + b.
double decision_function(const MklModel& model, std::span<const double> x);

/// Sign of the decision value with 0 mapped to +1.
int sign_label(double decision_value) noexcept;
int predict(const MklModel& model, std::span<const double> x);

}  // namespace visita
