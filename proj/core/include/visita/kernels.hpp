#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visita/numerics.hpp"

namespace visita {

enum class KernelKind { linear, rbf, polynomial, cosine };

struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  double gamma = 1.0;  // rbf
  int degree = 2;      // polynomial
  double coef0 = 0.0;  // polynomial

  static KernelSpec linear() { return {KernelKind::linear}; }
  static KernelSpec rbf(double gamma) { return {KernelKind::rbf, gamma}; }
  static KernelSpec polynomial(int degree, double coef0) {
    return {KernelKind::polynomial, 1.0, degree, coef0};
  }
  static KernelSpec cosine() { return {KernelKind::cosine}; }

  /// Throws ConfigError for gamma <= 0 (rbf) or degree < 1 (polynomial).
  void validate() const;
  /// Inverse of parse_kernel_spec: "linear", "rbf:0.5", "poly:2:1", "cosine".
  std::string to_string() const;

  bool operator==(const KernelSpec&) const = default;
};

KernelSpec parse_kernel_spec(std::string_view text);
/// Comma-separated list of kernel specs, e.g. "linear,rbf:0.5,poly:2:1".
std::vector<KernelSpec> parse_kernel_bank(std::string_view text);
/// {linear, rbf γ=0.5, polynomial degree 2 coef0 1}.
std::vector<KernelSpec> default_kernel_bank();

double eval_kernel(const KernelSpec& spec, std::span<const double> x, std::span<const double> y);

/// Simplex-constrained kernel mixing weights (β).
class KernelWeights {
 public:
  static constexpr double kSimplexTolerance = 1e-10;

  /// Throws InvariantError unless every weight is >= 0 and they sum to 1.
  explicit KernelWeights(std::vector<double> beta);
  static KernelWeights uniform(std::size_t m);

  std::size_t size() const noexcept { return beta_.size(); }
  double operator[](std::size_t i) const noexcept { return beta_[i]; }
  std::span<const double> values() const noexcept { return beta_; }

  bool operator==(const KernelWeights&) const = default;

 private:
  std::vector<double> beta_;
};

/// Symmetric positive semidefinite kernel table. Construction validates both
/// properties; a single +1e-10 diagonal jitter is attempted before failing.
class GramMatrix {
 public:
  static constexpr double kSymmetryTolerance = 1e-10;
  static constexpr double kPsdTolerance = 1e-8;
  static constexpr double kJitter = 1e-10;

  GramMatrix(Matrix values, std::optional<KernelSpec> kernel);

  const Matrix& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.rows(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return values_(i, j); }
  /// The kernel the table was evaluated with; empty for combined tables.
  const std::optional<KernelSpec>& kernel() const noexcept { return kernel_; }
  bool jittered() const noexcept { return jittered_; }

 private:
  Matrix values_;
  std::optional<KernelSpec> kernel_;
  bool jittered_ = false;
};

/// True when min eigenvalue >= -tolerance, decided by attempting a Cholesky
/// factorization of m + tolerance·I.
bool is_positive_semidefinite(const Matrix& m, double tolerance);

GramMatrix gram_matrix(const KernelSpec& spec, std::span<const Vector> xs);

/// Kernel values between every x in `xs` and the single point `y`.
Vector kernel_column(const KernelSpec& spec, std::span<const Vector> xs, std::span<const double> y);

/// Σ β_j K_j entrywise.
GramMatrix combine_grams(std::span<const GramMatrix> grams, const KernelWeights& weights);

}  // namespace visita
