#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace visita {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  void fill(double v);

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s) noexcept;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// a · b. Throws ShapeError naming both shapes when a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// aᵀ · b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// out += aᵀ · b (gradient accumulation for weight matrices).
void accumulate_tn(Matrix& out, const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// Row-wise softmax with per-row max subtraction. Throws InvalidInputError on
/// NaN input or an empty matrix.
Matrix softmax_rows(const Matrix& m);

/// Column-wise mean, returned as a 1×cols matrix.
Matrix column_mean(const Matrix& m);

double sum(const Matrix& m);
double max_abs(const Matrix& m);
double frobenius_norm(const Matrix& m);
bool all_finite(const Matrix& m);
bool all_finite(std::span<const double> v);

/// Throws InvalidInputError if any entry is non-finite; `what` names the value.
void require_finite(const Matrix& m, std::string_view what);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

using ScalarFunction = std::function<double(const Matrix&)>;

/// Central differences (f(x+h·e) − f(x−h·e)) / 2h for every entry of `at`.
/// Throws InvalidInputError for h <= 0 and Error(ErrorKind::invalid_input)
/// naming the entry if f is non-finite at a perturbed point.
Matrix finite_diff_grad(const ScalarFunction& f, const Matrix& at, double h);

/// max |a−b| / max(max|a|, max|b|, floor). Zero when both are identically zero.
double relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-12);

/// H×W×C image or feature map stored channel-last in row-major order.
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
    return data[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return data[(y * width + x) * channels + c];
  }
  std::string shape_str() const;
  bool operator==(const ImageTensor&) const = default;
};

}  // namespace visita
