#include "visita/mkl_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "visita/error.hpp"

namespace visita {
namespace {

constexpr double kTau = 1e-12;

void check_labels(std::span<const int> ys) {
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (ys[i] != 1 && ys[i] != -1) {
      throw InvalidInputError("label " + std::to_string(i) + " is " + std::to_string(ys[i]) + ", expected ±1");
    }
  }
}

bool in_up(double a, int y, double C) { return (y == 1 && a < C) || (y == -1 && a > 0.0); }
bool in_low(double a, int y, double C) { return (y == -1 && a < C) || (y == 1 && a > 0.0); }

// Gradient of ½αᵀQα − eᵀα where Q_ij = y_i y_j K_ij.
Vector dual_gradient(const Matrix& k, std::span<const int> ys, std::span<const double> alpha) {
  const std::size_t n = ys.size();
  Vector g(n, -1.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (alpha[j] == 0.0) continue;
    const double ay = alpha[j] * ys[j];
    for (std::size_t i = 0; i < n; ++i) g[i] += ys[i] * k(i, j) * ay;
  }
  return g;
}

double violation_from_gradient(std::span<const double> g, std::span<const int> ys,
                               std::span<const double> alpha, double C) {
  double up = -std::numeric_limits<double>::infinity();
  double low = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < ys.size(); ++t) {
    const double v = -ys[t] * g[t];
    if (in_up(alpha[t], ys[t], C)) up = std::max(up, v);
    if (in_low(alpha[t], ys[t], C)) low = std::min(low, v);
  }
  if (!std::isfinite(up) || !std::isfinite(low)) return 0.0;
  return std::max(0.0, up - low);
}

double compute_bias(const Matrix& k, std::span<const int> ys, std::span<const double> alpha, double C) {
  const std::size_t n = ys.size();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double f = 0.0;
    for (std::size_t j = 0; j < n; ++j) f += alpha[j] * ys[j] * k(i, j);
    const double e = ys[i] - f;
    const bool at_zero = alpha[i] <= 0.0;
    const bool at_c = alpha[i] >= C;
    if (!at_zero && !at_c) {
      free_sum += e;
      ++free_count;
    } else if ((at_zero && ys[i] == 1) || (at_c && ys[i] == -1)) {
      lower = std::max(lower, e);
    } else {
      upper = std::min(upper, e);
    }
  }
  if (free_count > 0) return free_sum / static_cast<double>(free_count);
  if (std::isfinite(lower) && std::isfinite(upper)) return 0.5 * (lower + upper);
  if (std::isfinite(lower)) return lower;
  if (std::isfinite(upper)) return upper;
  return 0.0;
}

}  // namespace

void MklProblem::validate() const {
  if (xs.size() < 2) throw InvalidInputError("MKL problem needs at least 2 samples");
  if (xs.size() != ys.size()) {
    throw InvalidInputError(std::to_string(xs.size()) + " samples but " + std::to_string(ys.size()) + " labels");
  }
  const std::size_t d = xs.front().size();
  if (d == 0) throw InvalidInputError("feature vectors must have dimension >= 1");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != d) {
      throw ShapeError("sample " + std::to_string(i) + " has dimension " + std::to_string(xs[i].size()) +
                       ", expected " + std::to_string(d));
    }
  }
  check_labels(ys);
  if (kernel_bank.empty()) throw ConfigError("kernel bank is empty");
  for (const auto& k : kernel_bank) k.validate();
  if (!(C > 0.0)) throw ConfigError("C must be positive");
}

double dual_objective(const Matrix& gram, std::span<const int> ys, std::span<const double> alpha) {
  const std::size_t n = ys.size();
  double linear = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    linear += alpha[i];
    if (alpha[i] == 0.0) continue;
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += alpha[j] * ys[j] * gram(i, j);
    quad += alpha[i] * ys[i] * row;
  }
  return linear - 0.5 * quad;
}

double kkt_violation(const Matrix& gram, std::span<const int> ys, std::span<const double> alpha, double C) {
  const Vector g = dual_gradient(gram, ys, alpha);
  return violation_from_gradient(g, ys, alpha, C);
}

SvmSolution solve_smo(const GramMatrix& gram, std::span<const int> ys, double C, const SmoOptions& options) {
  const std::size_t n = ys.size();
  if (gram.size() != n) {
    throw ShapeError("gram matrix is " + gram.values().shape_str() + " but there are " + std::to_string(n) +
                     " labels");
  }
  if (!(C > 0.0)) throw InvalidInputError("C must be positive");
  if (!(options.tol > 0.0)) throw InvalidInputError("SMO tolerance must be positive");
  check_labels(ys);

  SvmSolution sol;
  sol.alpha.assign(n, 0.0);
  const bool has_pos = std::find(ys.begin(), ys.end(), 1) != ys.end();
  const bool has_neg = std::find(ys.begin(), ys.end(), -1) != ys.end();
  if (!has_pos || !has_neg) {
    sol.degenerate = true;
    sol.bias = has_pos ? 1.0 : -1.0;
    return sol;
  }

  const Matrix& k = gram.values();
  Vector& alpha = sol.alpha;
  Vector g(n, -1.0);
  // Default cap in pair updates, as LIBSVM: max(10^7, 100·N).
  const std::size_t budget =
      options.max_passes == 0 ? std::max<std::size_t>(10'000'000, 100 * n) : options.max_passes * n;

  double violation = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  while (true) {
    // Maximal violating pair.
    double up = -std::numeric_limits<double>::infinity();
    double low = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -ys[t] * g[t];
      if (in_up(alpha[t], ys[t], C) && v > up) {
        up = v;
        i = t;
      }
      if (in_low(alpha[t], ys[t], C) && v < low) {
        low = v;
        j = t;
      }
    }
    violation = (i == n || j == n) ? 0.0 : up - low;
    if (violation <= options.tol) break;
    if (iter >= budget) {
      throw ConvergenceError("SMO did not reach KKT tolerance " + std::to_string(options.tol) + " after " +
                                 std::to_string(budget) + " pair updates (violation " + std::to_string(violation) + ")",
                             violation);
    }
    ++iter;

    const double yi = ys[i], yj = ys[j];
    const double qii = k(i, i), qjj = k(j, j), qij = yi * yj * k(i, j);
    const double old_ai = alpha[i], old_aj = alpha[j];
    double ai = old_ai, aj = old_aj;
    if (yi != yj) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-g[i] - g[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > C) {
          ai = C;
          aj = C - diff;
        }
      } else if (aj > C) {
        aj = C;
        ai = C + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (g[i] - g[j]) / quad;
      const double total = ai + aj;
      ai -= delta;
      aj += delta;
      if (total > C) {
        if (ai > C) {
          ai = C;
          aj = total - C;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = total;
      }
      if (total > C) {
        if (aj > C) {
          aj = C;
          ai = total - C;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = total;
      }
    }
    alpha[i] = ai;
    alpha[j] = aj;
    const double dai = ai - old_ai, daj = aj - old_aj;
    for (std::size_t t = 0; t < n; ++t) {
      g[t] += ys[t] * (yi * k(t, i) * dai + yj * k(t, j) * daj);
    }
  }

  sol.iterations = iter;
  const Vector fresh = dual_gradient(k, ys, alpha);
  sol.kkt_violation = violation_from_gradient(fresh, ys, alpha, C);
  sol.dual_objective = dual_objective(k, ys, alpha);
  sol.bias = compute_bias(k, ys, alpha, C);
  return sol;
}

KernelWeights update_weights(std::span<const GramMatrix> grams, const SvmSolution& solution,
                             std::span<const int> ys, const KernelWeights& old) {
  if (grams.size() != old.size()) {
    throw ShapeError(std::to_string(grams.size()) + " gram matrices but " + std::to_string(old.size()) +
                     " kernel weights");
  }
  const std::size_t n = ys.size();
  if (solution.alpha.size() != n) {
    throw ShapeError(std::to_string(solution.alpha.size()) + " dual coefficients but " + std::to_string(n) +
                     " labels");
  }
  Vector ay(n);
  for (std::size_t i = 0; i < n; ++i) ay[i] = solution.alpha[i] * ys[i];

  Vector root(grams.size());
  double total = 0.0;
  for (std::size_t j = 0; j < grams.size(); ++j) {
    if (grams[j].size() != n) {
      throw ShapeError("gram matrix " + std::to_string(j) + " does not match " + std::to_string(n) + " labels");
    }
    const Matrix& kj = grams[j].values();
    double q = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (ay[a] == 0.0) continue;
      double row = 0.0;
      for (std::size_t b = 0; b < n; ++b) row += kj(a, b) * ay[b];
      q += ay[a] * row;
    }
    const double s = std::max(0.0, old[j] * old[j] * q);
    root[j] = std::sqrt(s);
    total += root[j];
  }
  if (!(total > 0.0)) return old;
  for (double& r : root) r /= total;
  // Renormalize once more so rounding never leaves the simplex tolerance.
  double check = 0.0;
  for (double r : root) check += r;
  for (double& r : root) r /= check;
  return KernelWeights(std::move(root));
}

MklModel make_model(const MklProblem& problem, const SvmSolution& solution, const KernelWeights& weights) {
  MklModel model;
  model.solution = solution;
  model.weights = weights;
  model.kernel_bank = problem.kernel_bank;
  for (std::size_t i = 0; i < solution.alpha.size(); ++i) {
    if (solution.alpha[i] > MklModel::kSupportThreshold) {
      model.support_xs.push_back(problem.xs[i]);
      model.support_ys.push_back(problem.ys[i]);
      model.support_alpha.push_back(solution.alpha[i]);
    }
  }
  return model;
}

MklModel train_mkl(const MklProblem& problem, const MklOptions& options) {
  problem.validate();
  std::vector<GramMatrix> grams;
  grams.reserve(problem.kernel_bank.size());
  for (const auto& spec : problem.kernel_bank) grams.push_back(gram_matrix(spec, problem.xs));

  const SmoOptions smo{options.smo_tol, options.smo_max_passes};
  KernelWeights beta = KernelWeights::uniform(grams.size());
  std::vector<KernelWeights> trajectory;
  std::vector<double> objectives;

  std::optional<SvmSolution> best_solution;
  KernelWeights best_beta = beta;
  double best_objective = std::numeric_limits<double>::infinity();

  for (std::size_t it = 0; it < options.max_outer; ++it) {
    trajectory.push_back(beta);
    const GramMatrix combined = combine_grams(grams, beta);
    SvmSolution sol = solve_smo(combined, problem.ys, problem.C, smo);
    objectives.push_back(sol.dual_objective);
    if (!best_solution || sol.dual_objective < best_objective) {
      best_objective = sol.dual_objective;
      best_solution = sol;
      best_beta = beta;
    }
    const KernelWeights next = update_weights(grams, sol, problem.ys, beta);
    double delta = 0.0;
    for (std::size_t j = 0; j < beta.size(); ++j) delta = std::max(delta, std::abs(next[j] - beta[j]));
    if (delta < options.tol || sol.degenerate) {
      MklModel model = make_model(problem, sol, beta);
      model.outer_iterations = it + 1;
      model.weight_trajectory = std::move(trajectory);
      model.objective_trajectory = std::move(objectives);
      model.converged = true;
      return model;
    }
    beta = next;
  }

  if (!best_solution) throw ConfigError("max_outer must be at least 1");
  MklModel model = make_model(problem, *best_solution, best_beta);
  model.outer_iterations = options.max_outer;
  model.weight_trajectory = std::move(trajectory);
  model.objective_trajectory = std::move(objectives);
  model.converged = false;
  return model;
}

double decision_function(const MklModel& model, std::span<const double> x) {
  double f = model.solution.bias;
  if (model.support_xs.empty()) return f;
  if (x.size() != model.dimension()) {
    throw ShapeError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(model.dimension()));
  }
  for (std::size_t i = 0; i < model.support_xs.size(); ++i) {
    double k = 0.0;
    for (std::size_t j = 0; j < model.kernel_bank.size(); ++j) {
      if (model.weights[j] == 0.0) continue;
      k += model.weights[j] * eval_kernel(model.kernel_bank[j], model.support_xs[i], x);
    }
    f += model.support_alpha[i] * model.support_ys[i] * k;
  }
  return f;
}

int sign_label(double decision_value) noexcept { return decision_value < 0.0 ? -1 : 1; }

int predict(const MklModel& model, std::span<const double> x) { return sign_label(decision_function(model, x)); }

}  // namespace visita
