#include "visita/kernels.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "visita/error.hpp"

namespace visita {
namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view s, std::string_view context) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("bad number '" + std::string(s) + "' in kernel spec '" + std::string(context) + "'");
  }
  return v;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void KernelSpec::validate() const {
  if (kind == KernelKind::rbf && !(gamma > 0.0)) {
    throw ConfigError("rbf kernel needs gamma > 0, got " + format_number(gamma));
  }
  if (kind == KernelKind::polynomial && degree < 1) {
    throw ConfigError("polynomial kernel needs degree >= 1, got " + std::to_string(degree));
  }
}

std::string KernelSpec::to_string() const {
  switch (kind) {
    case KernelKind::linear: return "linear";
    case KernelKind::rbf: return "rbf:" + format_number(gamma);
    case KernelKind::polynomial: return "poly:" + std::to_string(degree) + ":" + format_number(coef0);
    case KernelKind::cosine: return "cosine";
  }
  return "?";
}

KernelSpec parse_kernel_spec(std::string_view text) {
  const auto parts = split(trim(text), ':');
  const auto name = trim(parts[0]);
  KernelSpec spec;
  if (name == "linear" && parts.size() == 1) {
    spec = KernelSpec::linear();
  } else if (name == "cosine" && parts.size() == 1) {
    spec = KernelSpec::cosine();
  } else if (name == "rbf" && parts.size() == 2) {
    spec = KernelSpec::rbf(parse_number(parts[1], text));
  } else if ((name == "poly" || name == "polynomial") && (parts.size() == 2 || parts.size() == 3)) {
    const double degree = parse_number(parts[1], text);
    if (degree != std::floor(degree)) {
      throw ConfigError("polynomial degree must be an integer in '" + std::string(text) + "'");
    }
    spec = KernelSpec::polynomial(static_cast<int>(degree), parts.size() == 3 ? parse_number(parts[2], text) : 0.0);
  } else {
    throw ConfigError("unknown kernel spec '" + std::string(text) + "'");
  }
  spec.validate();
  return spec;
}

std::vector<KernelSpec> parse_kernel_bank(std::string_view text) {
  std::vector<KernelSpec> bank;
  for (auto part : split(text, ',')) {
    if (trim(part).empty()) throw ConfigError("empty entry in kernel bank '" + std::string(text) + "'");
    bank.push_back(parse_kernel_spec(part));
  }
  return bank;
}

std::vector<KernelSpec> default_kernel_bank() {
  return {KernelSpec::linear(), KernelSpec::rbf(0.5), KernelSpec::polynomial(2, 1.0)};
}

double eval_kernel(const KernelSpec& spec, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("kernel arguments of dimension " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()));
  }
  if (x.empty()) throw ShapeError("kernel arguments must have dimension >= 1");
  switch (spec.kind) {
    case KernelKind::linear:
      return dot(x, y);
    case KernelKind::rbf: {
      double d2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        d2 += d * d;
      }
      return std::exp(-spec.gamma * d2);
    }
    case KernelKind::polynomial:
      return std::pow(dot(x, y) + spec.coef0, spec.degree);
    case KernelKind::cosine: {
      const double nx = norm(x), ny = norm(y);
      if (nx == 0.0 || ny == 0.0) return 0.0;
      if (x.data() == y.data()) return 1.0;
      return dot(x, y) / (nx * ny);
    }
  }
  return 0.0;
}

KernelWeights::KernelWeights(std::vector<double> beta) : beta_(std::move(beta)) {
  if (beta_.empty()) throw InvariantError("kernel weights must be nonempty");
  double total = 0.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    if (!(beta_[i] >= 0.0)) {
      throw InvariantError("kernel weight " + std::to_string(i) + " is negative: " + format_number(beta_[i]));
    }
    total += beta_[i];
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    throw InvariantError("kernel weights sum to " + format_number(total) + ", not 1");
  }
}

KernelWeights KernelWeights::uniform(std::size_t m) {
  if (m == 0) throw InvariantError("kernel weights must be nonempty");
  return KernelWeights(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

bool is_positive_semidefinite(const Matrix& m, double tolerance) {
  const std::size_t n = m.rows();
  if (n != m.cols()) return false;
  // Lower-triangular Cholesky of m + tolerance·I, in place on a copy.
  Matrix l = m;
  for (std::size_t i = 0; i < n; ++i) l(i, i) += tolerance;
  for (std::size_t j = 0; j < n; ++j) {
    double d = l(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = l(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return true;
}

GramMatrix::GramMatrix(Matrix values, std::optional<KernelSpec> kernel)
    : values_(std::move(values)), kernel_(std::move(kernel)) {
  const std::size_t n = values_.rows();
  if (n == 0 || n != values_.cols()) {
    throw ShapeError("gram matrix must be square and nonempty, got " + values_.shape_str());
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(values_(i, j) - values_(j, i)) > kSymmetryTolerance) {
        throw InvariantError("gram matrix is not symmetric at (" + std::to_string(i) + ", " +
                             std::to_string(j) + ")");
      }
    }
  }
  require_finite(values_, "gram matrix");
  if (!is_positive_semidefinite(values_, kPsdTolerance)) {
    for (std::size_t i = 0; i < n; ++i) values_(i, i) += kJitter;
    jittered_ = true;
    if (!is_positive_semidefinite(values_, kPsdTolerance)) {
      throw InvariantError("gram matrix is not positive semidefinite (min eigenvalue < -1e-8)");
    }
  }
}

GramMatrix gram_matrix(const KernelSpec& spec, std::span<const Vector> xs) {
  spec.validate();
  if (xs.empty()) throw InvalidInputError("gram matrix of an empty sample set");
  const std::size_t n = xs.size();
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = eval_kernel(spec, xs[i], xs[j]);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return GramMatrix(std::move(k), spec);
}

Vector kernel_column(const KernelSpec& spec, std::span<const Vector> xs, std::span<const double> y) {
  Vector out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = eval_kernel(spec, xs[i], y);
  return out;
}

GramMatrix combine_grams(std::span<const GramMatrix> grams, const KernelWeights& weights) {
  if (grams.empty()) throw ShapeError("combine_grams needs at least one gram matrix");
  if (grams.size() != weights.size()) {
    throw ShapeError("combining " + std::to_string(grams.size()) + " gram matrices with " +
                     std::to_string(weights.size()) + " weights");
  }
  const std::size_t n = grams[0].size();
  Matrix out(n, n);
  for (std::size_t j = 0; j < grams.size(); ++j) {
    if (grams[j].size() != n) {
      throw ShapeError("gram matrix " + std::to_string(j) + " is " + grams[j].values().shape_str() +
                       ", expected " + out.shape_str());
    }
    const double b = weights[j];
    if (b == 0.0) continue;
    auto dst = out.values();
    auto src = grams[j].values().values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += b * src[i];
  }
  if (grams.size() == 1) return GramMatrix(std::move(out), grams[0].kernel());
  return GramMatrix(std::move(out), std::nullopt);
}

}  // namespace visita
