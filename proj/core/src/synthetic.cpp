#include "visita/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "visita/error.hpp"

namespace visita {

namespace {

constexpr const char* kShapeWords[] = {"square", "circle", "cross"};
constexpr const char* kIntensityWords[] = {"dark", "medium", "bright"};
constexpr const char* kQuadrantWords[] = {"top left", "top right", "bottom left", "bottom right"};
constexpr double kIntensityLevels[] = {0.35, 0.65, 0.95};

bool inside(Shape shape, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (shape) {
    case Shape::square:
      return ax <= r && ay <= r;
    case Shape::circle:
      return dx * dx + dy * dy <= r * r;
    case Shape::cross:
      return (ax <= r && ay <= r / 3.0) || (ay <= r && ax <= r / 3.0);
  }
  return false;
}

}  // namespace

ClassAttributes class_attributes(std::size_t cls) {
  if (cls >= kMaxSyntheticClasses) {
    throw ConfigError("class " + std::to_string(cls) + " exceeds the " + std::to_string(kMaxSyntheticClasses) +
                      "-class attribute grid");
  }
  ClassAttributes a;
  a.shape = static_cast<Shape>(cls % 3);
  a.quadrant = static_cast<Quadrant>(cls % 4);
  a.intensity = (cls / 12 + cls / 4) % 3;
  return a;
}

std::string class_caption(const ClassAttributes& a) {
  return std::string("a ") + kIntensityWords[a.intensity] + " " + kShapeWords[static_cast<int>(a.shape)] + " in the " +
         kQuadrantWords[static_cast<int>(a.quadrant)];
}

ImageTensor render_class(const ClassAttributes& a, std::size_t image_size, Rng& rng, double noise_sigma) {
  if (image_size < 4) throw ConfigError("synthetic images need size >= 4");
  ImageTensor img(image_size, image_size, 3);
  const double half = static_cast<double>(image_size) / 2.0;
  const auto q = static_cast<int>(a.quadrant);
  const double cx = (q % 2 == 0 ? 0.5 : 1.5) * half;
  const double cy = (q < 2 ? 0.5 : 1.5) * half;
  const double r = 0.35 * half;
  const double level = kIntensityLevels[a.intensity];
  for (std::size_t y = 0; y < image_size; ++y) {
    for (std::size_t x = 0; x < image_size; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const double base = inside(a.shape, dx, dy, r) ? level : 0.0;
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(base + noise_sigma * rng.normal(), 0.0, 1.0);
    }
  }
  return img;
}

SyntheticData generate_synthetic(std::size_t n_pairs, std::size_t n_classes, std::size_t image_size, Rng& rng) {
  if (n_classes < 2) throw ConfigError("need at least 2 classes, got " + std::to_string(n_classes));
  if (n_classes > kMaxSyntheticClasses) {
    throw ConfigError(std::to_string(n_classes) + " classes exceed the 3x3x4 attribute grid of " +
                      std::to_string(kMaxSyntheticClasses));
  }
  if (n_pairs < n_classes) {
    throw ConfigError("need at least one pair per class (" + std::to_string(n_pairs) + " pairs, " +
                      std::to_string(n_classes) + " classes)");
  }
  SyntheticData out;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const std::size_t cls = k % n_classes;
    const auto attrs = class_attributes(cls);
    char id[24];
    std::snprintf(id, sizeof id, "%05zu", k);
    ManifestRow row;
    row.pair_id = id;
    row.image_path = std::string("images/") + id + ".ppm";
    row.caption = class_caption(attrs);
    row.label = 1;
    out.rows.push_back(std::move(row));
    out.images.push_back(render_class(attrs, image_size, rng));
    out.classes.push_back(cls);
  }
  return out;
}

std::filesystem::path write_synthetic(const SyntheticData& data, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());
  for (std::size_t i = 0; i < data.rows.size(); ++i) write_image(out_dir / data.rows[i].image_path, data.images[i]);
  const auto manifest = out_dir / "manifest.csv";
  write_manifest(manifest, data.rows);
  return manifest;
}

}  // namespace visita
