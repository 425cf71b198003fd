#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visita/numerics.hpp"
#include "visita/rng.hpp"

namespace visita {

enum class Split { train, val, test };

std::string to_string(Split s);
/// "train" / "val" / "test". Throws InvalidInputError otherwise.
Split parse_split(std::string_view s);

struct ImageSample {
  std::string id;
  ImageTensor pixels;
  std::string source;
};

struct TextSample {
  std::string id;
  std::string caption;
  std::vector<int> tokens;
};

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  /// Only the reserved entries.
  Vocab();
  /// Tokens in id order starting at id 2. Throws InvalidInputError on
  /// duplicates or reserved spellings.
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  /// UNK for unknown tokens.
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  /// Every token in id order, reserved entries included.
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

/// Lowercased alphanumeric runs.
std::vector<std::string> split_words(std::string_view caption);

/// Frequency-ranked tokens up to cap − 2, ties broken lexicographically.
Vocab build_vocab(std::span<const std::string> captions, std::size_t cap);

/// Exactly `length` ids: unknown words map to UNK, short captions are padded
/// with PAD and long ones truncated.
TextSample tokenize(std::string_view caption, const Vocab& vocab, std::size_t length);

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// Binary P6 / P5 with maxval 255. Pixels scaled to [0,1] and resized by
/// nearest neighbour to size × size (0 keeps the native size).
ImageSample read_image(const std::filesystem::path& path, std::size_t size = 32);
/// Decodes an in-memory PPM/PGM buffer. `what` names the source in errors.
ImageTensor decode_pnm(std::string_view bytes, std::string_view what);
/// P6 for 3 channels, P5 for 1. Values are clamped and rounded to 1/255.
std::string encode_pnm(const ImageTensor& image);
void write_image(const std::filesystem::path& path, const ImageTensor& image);

ImageTensor resize_nearest(const ImageTensor& image, std::size_t height, std::size_t width);
ImageTensor flip_horizontal(const ImageTensor& image);

/// Mirrors with probability flip_prob, then crops a random window covering
/// crop_frac of the area and resizes it back to the input size.
ImageSample augment(const ImageSample& image, Rng& rng, double flip_prob, double crop_frac);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct PairRecord {
  std::string pair_id;
  std::size_t image = 0;  // index into PairDataset::images
  std::size_t text = 0;   // index into PairDataset::texts
  int label = 1;
  Split split = Split::train;
};

struct PairDataset {
  std::vector<ImageSample> images;
  std::vector<TextSample> texts;
  std::vector<PairRecord> pairs;
  Vocab vocab;

  /// Indices into `pairs` assigned to `s`, in pair order.
  std::vector<std::size_t> split_indices(Split s) const;
  /// Throws InvariantError when an index does not resolve.
  void validate() const;
};

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  /// Nonnegative and summing to 1 within 1e-9; ConfigError otherwise.
  void validate() const;
};

/// "0.70,0.15,0.15".
SplitFractions parse_split_fractions(std::string_view text);

/// Seeded shuffle, then contiguous train/val/test blocks of round(N·f) for
/// val and test with the remainder in train. Throws InvalidInputError for
/// n < 3.
std::vector<Split> split_assignment(std::size_t n, std::uint64_t seed, const SplitFractions& fractions = {});
PairDataset split_dataset(PairDataset data, std::uint64_t seed, const SplitFractions& fractions = {});

struct ManifestRow {
  std::string pair_id;
  std::string image_path;
  std::string caption;
  int label = 1;
  std::optional<Split> split;
};

/// CSV with header `pair_id,image_path,caption,label[,split]`; double-quoted
/// fields may contain commas and "" escapes. Errors name the row number
/// (1-based, header is row 1).
std::vector<ManifestRow> parse_manifest(std::string_view text, std::string_view what = "manifest");
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
std::string format_manifest(std::span<const ManifestRow> rows);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows);

struct DataOptions {
  std::size_t image_size = 32;
  std::size_t caption_len = 16;
  std::size_t vocab_cap = 1024;
  std::uint64_t seed = 42;
  SplitFractions fractions;
};

/// Reads a manifest and its images; relative image paths resolve against the
/// manifest's directory. `vocab` overrides the vocabulary (e.g. from a
/// checkpoint).
PairDataset load_dataset(const std::filesystem::path& manifest, const DataOptions& options,
                         const std::optional<Vocab>& vocab = std::nullopt);

/// Rows are sorted by pair_id and rows naming the same image path share one
/// image. When every row carries a split it is kept, otherwise split_dataset
/// assigns one. The vocabulary is built from train-split captions unless
/// given. `row_images[i]` holds the pixels of `rows[i]`.
PairDataset assemble_dataset(std::vector<ManifestRow> rows, std::vector<ImageTensor> row_images,
                             const DataOptions& options, const std::optional<Vocab>& vocab = std::nullopt);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace visita
