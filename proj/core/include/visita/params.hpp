#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "visita/numerics.hpp"
#include "visita/rng.hpp"

namespace visita {

// Parameter structs expose `for_each(f)` which calls f(name, matrix) for every
// tensor in a fixed order. Gradients use the same struct type as parameters,
// so parallel traversal of the two always lines up.

template <class F>
auto prefixed(std::string prefix, F& f) {
  return [prefix = std::move(prefix), &f](const std::string& name, auto& m) { f(prefix + name, m); };
}

template <class P>
P zeros_like(const P& params) {
  P z = params;
  z.for_each([](const std::string&, Matrix& m) { m.fill(0.0); });
  return z;
}

template <class P>
std::vector<std::pair<std::string, const Matrix*>> list_tensors(const P& params) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  params.for_each([&](const std::string& name, const Matrix& m) { out.emplace_back(name, &m); });
  return out;
}

template <class P>
std::vector<std::pair<std::string, Matrix*>> list_tensors_mut(P& params) {
  std::vector<std::pair<std::string, Matrix*>> out;
  params.for_each([&](const std::string& name, Matrix& m) { out.emplace_back(name, &m); });
  return out;
}

template <class P>
std::size_t parameter_count(const P& params) {
  std::size_t n = 0;
  params.for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

/// Uniform in ±sqrt(6 / (rows + cols)), scaled by `gain`.
Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng, double gain = 1.0);

}  // namespace visita
