#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "visita/data_io.hpp"
#include "visita/numerics.hpp"
#include "visita/rng.hpp"

namespace visita {

enum class Shape { square, circle, cross };
enum class Quadrant { top_left, top_right, bottom_left, bottom_right };

inline constexpr std::size_t kMaxSyntheticClasses = 36;

struct ClassAttributes {
  Shape shape = Shape::square;
  std::size_t intensity = 0;  // 0 dark, 1 medium, 2 bright
  Quadrant quadrant = Quadrant::top_left;

  bool operator==(const ClassAttributes&) const = default;
};

/// Injective for c < 36: shape = c mod 3, quadrant = c mod 4 and the
/// intensity band is shifted by c / 12, so small class counts already vary
/// every attribute.
ClassAttributes class_attributes(std::size_t cls);

/// "a <dark|medium|bright> <square|circle|cross> in the <top left|...>".
std::string class_caption(const ClassAttributes& a);

/// Shape drawn in its quadrant on black with N(0, σ²) noise clamped to [0,1].
ImageTensor render_class(const ClassAttributes& a, std::size_t image_size, Rng& rng, double noise_sigma = 0.05);

struct SyntheticData {
  std::vector<ManifestRow> rows;  // image_path relative to the output directory
  std::vector<ImageTensor> images;
  std::vector<std::size_t> classes;
};

/// Pair k belongs to class k mod n_classes. ConfigError for n_classes < 2,
/// n_classes > 36 or n_pairs < n_classes.
SyntheticData generate_synthetic(std::size_t n_pairs, std::size_t n_classes, std::size_t image_size, Rng& rng);

/// Writes images/<pair_id>.ppm and manifest.csv under `out_dir`, creating it
/// when needed. Returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticData& data, const std::filesystem::path& out_dir);

}  // namespace visita
