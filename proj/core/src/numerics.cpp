#include "visita/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "visita/error.hpp"

namespace visita {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  require_finite(*this, "matrix data");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged initializer rows");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix& Matrix::operator+=(const Matrix& o) {
  if (!same_shape(o)) throw ShapeError("cannot add " + o.shape_str() + " to " + shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  if (!same_shape(o)) throw ShapeError("cannot subtract " + o.shape_str() + " from " + shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

namespace {
// C share each streamed row of B; the j loop vectorizes.
// c[n×m] += a[n×k] · b[k×m], all row-major. Inner tiles keep a 4×8 block of c
// in registers across the whole p loop.
typedef double V __attribute__((vector_size(32)));

inline V load(const double* p) {
  V v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void store(double* p, V v) { std::memcpy(p, &v, sizeof v); }

void gemm_acc(std::size_t n, std::size_t k, std::size_t m, const double* __restrict a, const double* __restrict b,
              double* __restrict c) {
  constexpr std::size_t R = 4, W = 8;
  std::size_t i = 0;
  for (; i + R <= n; i += R) {
    const double* a0 = a + i * k;
    std::size_t j = 0;
    for (; j + W <= m; j += W) {
      V acc[R][2] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const V b0 = load(b + p * m + j), b1 = load(b + p * m + j + 4);
        for (std::size_t r = 0; r < R; ++r) {
          const double x = a0[r * k + p];
          acc[r][0] += x * b0;
          acc[r][1] += x * b1;
        }
      }
      for (std::size_t r = 0; r < R; ++r) {
        double* cr = c + (i + r) * m + j;
        store(cr, load(cr) + acc[r][0]);
        store(cr + 4, load(cr + 4) + acc[r][1]);
      }
    }
    for (; j < m; ++j) {
      for (std::size_t r = 0; r < R; ++r) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a0[r * k + p] * b[p * m + j];
        c[(i + r) * m + j] += acc;
      }
    }
  }
  for (; i < n; ++i) {
    double* __restrict ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * m + j];
      ci[j] += acc;
    }
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul " + a.shape_str() + " by " + b.shape_str());
  }
  Matrix c(a.rows(), b.cols());
  gemm_acc(a.rows(), a.cols(), b.cols(), a.data(), b.data(), c.data());
  require_finite(c, "matmul result");
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul " + a.shape_str() + " by transpose of " + b.shape_str());
  }
  const Matrix bt = transpose(b);
  Matrix c(a.rows(), b.rows());
  gemm_acc(a.rows(), a.cols(), b.rows(), a.data(), bt.data(), c.data());
  require_finite(c, "matmul result");
  return c;
}

void accumulate_tn(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw ShapeError("transpose of " + a.shape_str() + " by " + b.shape_str() + " into " +
                     out.shape_str());
  }
  const Matrix at = transpose(a);
  gemm_acc(a.cols(), a.rows(), b.cols(), at.data(), b.data(), out.data());
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul transpose of " + a.shape_str() + " by " + b.shape_str());
  }
  Matrix c(a.cols(), b.cols());
  accumulate_tn(c, a, b);
  require_finite(c, "matmul result");
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("hadamard " + a.shape_str() + " with " + b.shape_str());
  Matrix c = a;
  auto cv = c.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] *= bv[i];
  return c;
}

Matrix softmax_rows(const Matrix& m) {
  if (m.empty()) throw InvalidInputError("softmax of an empty matrix");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto o = out.row(r);
    double mx = in[0];
    for (double v : in) {
      if (std::isnan(v)) throw InvalidInputError("NaN in softmax row " + std::to_string(r));
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    const double inv = 1.0 / z;
    for (double& v : o) v *= inv;
  }
  return out;
}

Matrix column_mean(const Matrix& m) {
  Matrix out(1, m.cols());
  if (m.rows() == 0) return out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += row[c];
  }
  out *= 1.0 / static_cast<double>(m.rows());
  return out;
}

double sum(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v;
  return s;
}

double max_abs(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s = std::max(s, std::abs(v));
  return s;
}

double frobenius_norm(const Matrix& m) { return norm(m.values()); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const Matrix& m) { return all_finite(m.values()); }

void require_finite(const Matrix& m, std::string_view what) {
  if (!all_finite(m)) throw InvalidInputError("non-finite entries in " + std::string(what));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot of lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

Matrix finite_diff_grad(const ScalarFunction& f, const Matrix& at, double h) {
  if (!(h > 0.0)) throw InvalidInputError("finite-difference step must be positive");
  Matrix grad(at.rows(), at.cols());
  Matrix x = at;
  for (std::size_t r = 0; r < at.rows(); ++r) {
    for (std::size_t c = 0; c < at.cols(); ++c) {
      const double orig = x(r, c);
      x(r, c) = orig + h;
      const double fp = f(x);
      x(r, c) = orig - h;
      const double fm = f(x);
      x(r, c) = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        std::ostringstream os;
        os << "function is non-finite when perturbing entry (" << r << ", " << c << ")";
        throw InvalidInputError(os.str());
      }
      grad(r, c) = (fp - fm) / (2.0 * h);
    }
  }
  return grad;
}

double relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
  if (!analytic.same_shape(numeric)) {
    throw ShapeError("relative error of " + analytic.shape_str() + " vs " + numeric.shape_str());
  }
  double diff = 0.0;
  auto a = analytic.values();
  auto n = numeric.values();
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - n[i]));
  if (diff == 0.0) return 0.0;
  const double scale = std::max({max_abs(analytic), max_abs(numeric), floor});
  return diff / scale;
}

std::string ImageTensor::shape_str() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

}  // namespace visita
