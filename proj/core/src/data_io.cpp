#include "visita/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "visita/error.hpp"

namespace visita {

std::string to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InvalidInputError("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

// ---------------------------------------------------------------------------
// Vocabulary and tokenization
// ---------------------------------------------------------------------------

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size() + 2);
  tokens_.push_back(kPadToken);
  tokens_.push_back(kUnkToken);
  ids_.emplace(kPadToken, kPad);
  ids_.emplace(kUnkToken, kUnk);
  for (auto& t : tokens) {
    if (t.empty()) throw InvalidInputError("vocabulary tokens must be nonempty");
    const int id = static_cast<int>(tokens_.size());
    if (!ids_.emplace(t, id).second) throw InvalidInputError("duplicate or reserved vocabulary token '" + t + "'");
    tokens_.push_back(std::move(t));
  }
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InvalidInputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const { return ids_.find(token) != ids_.end(); }

std::vector<std::string> split_words(std::string_view caption) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : caption) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocab build_vocab(std::span<const std::string> captions, std::size_t cap) {
  if (cap < 3) throw InvalidInputError("vocabulary cap must be at least 3, got " + std::to_string(cap));
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions)
    for (auto& w : split_words(c)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> kept;
  for (auto& [w, n] : ranked) {
    if (kept.size() + 2 >= cap) break;
    if (w == kPadToken || w == kUnkToken) continue;
    kept.push_back(w);
  }
  return Vocab(std::move(kept));
}

TextSample tokenize(std::string_view caption, const Vocab& vocab, std::size_t length) {
  if (length == 0) throw InvalidInputError("caption length must be at least 1");
  TextSample t;
  t.caption = std::string(caption);
  t.tokens.assign(length, Vocab::kPad);
  auto words = split_words(caption);
  for (std::size_t i = 0; i < std::min(length, words.size()); ++i) t.tokens[i] = vocab.id(words[i]);
  return t;
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

struct PnmCursor {
  std::string_view bytes;
  std::size_t pos = 0;
  std::string_view what;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw FormatError(std::string(what) + ": missing " + field + " in header");
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(bytes.data() + start, bytes.data() + pos, v);
    if (ec != std::errc()) throw FormatError(std::string(what) + ": bad " + field + " in header");
    (void)p;
    return v;
  }
};

}  // namespace

ImageTensor decode_pnm(std::string_view bytes, std::string_view what) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError(std::string(what) + ": not a PPM/PGM file (bad magic)");
  const char kind = bytes[1];
  if (kind == '1' || kind == '2' || kind == '3' || kind == '4') {
    throw UnsupportedFormatError(std::string(what) + ": magic P" + std::string(1, kind) +
                                 " is not supported (binary P5/P6 only)");
  }
  if (kind != '5' && kind != '6') throw FormatError(std::string(what) + ": not a PPM/PGM file (bad magic)");
  PnmCursor cur{bytes, 2, what};
  const std::size_t w = cur.number("width");
  const std::size_t h = cur.number("height");
  const std::size_t maxval = cur.number("maxval");
  if (w == 0 || h == 0) throw FormatError(std::string(what) + ": zero image dimension");
  if (maxval != 255) {
    throw UnsupportedFormatError(std::string(what) + ": maxval " + std::to_string(maxval) + " (only 255 supported)");
  }
  if (cur.pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[cur.pos]))) {
    throw FormatError(std::string(what) + ": truncated header");
  }
  ++cur.pos;
  const std::size_t c = kind == '6' ? 3 : 1;
  const std::size_t need = w * h * c;
  if (bytes.size() - cur.pos < need) {
    throw FormatError(std::string(what) + ": truncated payload (" + std::to_string(bytes.size() - cur.pos) + " of " +
                      std::to_string(need) + " bytes)");
  }
  ImageTensor img(h, w, c);
  for (std::size_t i = 0; i < need; ++i) img.data[i] = static_cast<unsigned char>(bytes[cur.pos + i]) / 255.0;
  return img;
}

std::string encode_pnm(const ImageTensor& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ShapeError("PNM output needs 1 or 3 channels, image is " + image.shape_str());
  }
  std::string out = (image.channels == 3 ? "P6\n" : "P5\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.data.size());
  for (double v : image.data) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  return out;
}

void write_image(const std::filesystem::path& path, const ImageTensor& image) { write_file(path, encode_pnm(image)); }

ImageTensor resize_nearest(const ImageTensor& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("resize target must be nonzero");
  if (height == image.height && width == image.width) return image;
  ImageTensor out(height, width, image.channels);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * image.height / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = x * image.width / width;
      for (std::size_t c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return out;
}

ImageTensor flip_horizontal(const ImageTensor& image) {
  ImageTensor out(image.height, image.width, image.channels);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) out.at(y, image.width - 1 - x, c) = image.at(y, x, c);
  return out;
}

ImageSample read_image(const std::filesystem::path& path, std::size_t size) {
  ImageSample s;
  s.id = path.string();
  s.source = path.string();
  s.pixels = decode_pnm(read_file(path), s.source);
  if (size != 0) s.pixels = resize_nearest(s.pixels, size, size);
  return s;
}

ImageSample augment(const ImageSample& image, Rng& rng, double flip_prob, double crop_frac) {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw InvalidInputError("flip_prob must lie in [0, 1]");
  if (!(crop_frac > 0.0 && crop_frac <= 1.0)) throw InvalidInputError("crop_frac must lie in (0, 1]");
  ImageSample out = image;
  const auto& src = image.pixels;
  if (rng.bernoulli(flip_prob)) out.pixels = flip_horizontal(src);
  const double side = std::sqrt(crop_frac);
  const auto ch = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * static_cast<double>(src.height))),
                                          1, src.height);
  const auto cw = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * static_cast<double>(src.width))),
                                          1, src.width);
  const std::size_t y0 = rng.below(src.height - ch + 1);
  const std::size_t x0 = rng.below(src.width - cw + 1);
  if (ch == src.height && cw == src.width) return out;
  ImageTensor crop(ch, cw, src.channels);
  for (std::size_t y = 0; y < ch; ++y)
    for (std::size_t x = 0; x < cw; ++x)
      for (std::size_t c = 0; c < src.channels; ++c) crop.at(y, x, c) = out.pixels.at(y0 + y, x0 + x, c);
  out.pixels = resize_nearest(crop, src.height, src.width);
  return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

std::vector<std::size_t> PairDataset::split_indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (pairs[i].split == s) out.push_back(i);
  return out;
}

void PairDataset::validate() const {
  for (const auto& p : pairs) {
    if (p.image >= images.size() || p.text >= texts.size()) {
      throw InvariantError("pair " + p.pair_id + " references a missing sample");
    }
    if (p.label != 0 && p.label != 1) throw InvariantError("pair " + p.pair_id + " has label outside {0,1}");
  }
  for (const auto& t : texts) {
    for (int id : t.tokens) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
        throw InvariantError("text " + t.id + " holds token id " + std::to_string(id) + " outside the vocabulary");
      }
    }
  }
}

void SplitFractions::validate() const {
  if (!(train >= 0.0 && val >= 0.0 && test >= 0.0)) throw ConfigError("split fractions must be nonnegative");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

SplitFractions parse_split_fractions(std::string_view text) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    std::string_view item = text.substr(start, end - start);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) item.remove_prefix(1);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.remove_suffix(1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) {
      throw ConfigError("bad split fraction '" + std::string(item) + "'");
    }
    parts.push_back(v);
    start = end + 1;
  }
  if (parts.size() != 3) throw ConfigError("split needs three fractions train,val,test");
  SplitFractions f{parts[0], parts[1], parts[2]};
  f.validate();
  return f;
}

std::vector<Split> split_assignment(std::size_t n, std::uint64_t seed, const SplitFractions& fractions) {
  fractions.validate();
  if (n < 3) throw InvalidInputError("need at least 3 pairs to split, got " + std::to_string(n));
  const auto count = [n](double f) { return static_cast<std::size_t>(std::llround(static_cast<double>(n) * f)); };
  const std::size_t n_val = std::min(count(fractions.val), n);
  const std::size_t n_test = std::min(count(fractions.test), n - n_val);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<Split> out(n, Split::train);
  const std::size_t n_train = n - n_val - n_test;
  for (std::size_t k = n_train; k < n_train + n_val; ++k) out[order[k]] = Split::val;
  for (std::size_t k = n_train + n_val; k < n; ++k) out[order[k]] = Split::test;
  return out;
}

PairDataset split_dataset(PairDataset data, std::uint64_t seed, const SplitFractions& fractions) {
  auto assignment = split_assignment(data.pairs.size(), seed, fractions);
  for (std::size_t i = 0; i < data.pairs.size(); ++i) data.pairs[i].split = assignment[i];
  return data;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

// Returns false at end of input. Throws on an unterminated quote.
bool next_record(std::string_view text, std::size_t& pos, std::vector<std::string>& fields, std::size_t row,
                 std::string_view what) {
  fields.clear();
  if (pos >= text.size()) return false;
  std::string cur;
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          cur.push_back('"');
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) throw FormatError(std::string(what) + " row " + std::to_string(row) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return true;
}

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// Numeric ids compare by value, everything else lexically.
bool id_less(const std::string& a, const std::string& b) {
  if (all_digits(a) && all_digits(b)) {
    const auto strip = [](const std::string& s) {
      const auto p = s.find_first_not_of('0');
      return p == std::string::npos ? std::string("0") : s.substr(p);
    };
    const std::string x = strip(a), y = strip(b);
    if (x.size() != y.size()) return x.size() < y.size();
    if (x != y) return x < y;
  }
  return a < b;
}

}  // namespace

std::vector<ManifestRow> parse_manifest(std::string_view text, std::string_view what) {
  std::size_t pos = 0;
  std::vector<std::string> fields;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  if (!next_record(text, pos, fields, 1, what)) throw FormatError(std::string(what) + " is empty");
  const std::vector<std::string> base{"pair_id", "image_path", "caption", "label"};
  const bool has_split = fields.size() == 5 && fields[4] == "split";
  if (!(fields.size() == 4 || has_split) || !std::equal(base.begin(), base.end(), fields.begin())) {
    throw FormatError(std::string(what) + " row 1: header must be pair_id,image_path,caption,label[,split]");
  }
  std::vector<ManifestRow> rows;
  std::size_t row = 1;
  while (true) {
    ++row;
    if (!next_record(text, pos, fields, row, what)) break;
    if (fields.size() == 1 && fields[0].empty()) continue;
    const auto fail = [&](const std::string& msg) {
      throw FormatError(std::string(what) + " row " + std::to_string(row) + ": " + msg);
    };
    if (fields.size() != (has_split ? 5u : 4u)) {
      fail("expected " + std::to_string(has_split ? 5 : 4) + " fields, found " + std::to_string(fields.size()));
    }
    ManifestRow r;
    r.pair_id = fields[0];
    r.image_path = fields[1];
    r.caption = fields[2];
    if (r.pair_id.empty()) fail("empty pair_id");
    if (r.image_path.empty()) fail("empty image_path");
    if (fields[3] == "1") {
      r.label = 1;
    } else if (fields[3] == "0") {
      r.label = 0;
    } else {
      fail("label must be 0 or 1, found '" + fields[3] + "'");
    }
    if (has_split && !fields[4].empty()) {
      try {
        r.split = parse_split(fields[4]);
      } catch (const InvalidInputError&) {
        fail("unknown split '" + fields[4] + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!seen.emplace(rows[i].pair_id, i).second) {
      throw FormatError(std::string(what) + " row " + std::to_string(i + 2) + ": duplicate pair_id '" +
                        rows[i].pair_id + "'");
    }
  }
  return rows;
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.string());
}

std::string format_manifest(std::span<const ManifestRow> rows) {
  const bool with_split = !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.split; });
  std::string out = with_split ? "pair_id,image_path,caption,label,split\n" : "pair_id,image_path,caption,label\n";
  for (const auto& r : rows) {
    out += quote_csv(r.pair_id) + "," + quote_csv(r.image_path) + "," + quote_csv(r.caption) + "," +
           std::to_string(r.label);
    if (with_split) out += "," + to_string(*r.split);
    out += "\n";
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows) {
  write_file(path, format_manifest(rows));
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

PairDataset assemble_dataset(std::vector<ManifestRow> rows, std::vector<ImageTensor> row_images,
                             const DataOptions& options, const std::optional<Vocab>& vocab) {
  if (rows.size() != row_images.size()) {
    throw ShapeError(std::to_string(rows.size()) + " manifest rows but " + std::to_string(row_images.size()) +
                     " images");
  }
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return id_less(rows[a].pair_id, rows[b].pair_id); });

  const bool any_split = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.split.has_value(); });
  if (any_split) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].split) throw FormatError("pair " + rows[i].pair_id + " has no split while others do");
    }
  }

  PairDataset ds;
  std::unordered_map<std::string, std::size_t> image_index;
  for (std::size_t k : order) {
    auto& r = rows[k];
    auto [it, inserted] = image_index.emplace(r.image_path, ds.images.size());
    if (inserted) {
      ImageSample s;
      s.id = r.image_path;
      s.source = r.image_path;
      s.pixels = options.image_size ? resize_nearest(row_images[k], options.image_size, options.image_size)
                                    : std::move(row_images[k]);
      ds.images.push_back(std::move(s));
    }
    PairRecord p;
    p.pair_id = r.pair_id;
    p.image = it->second;
    p.text = ds.texts.size();
    p.label = r.label;
    p.split = r.split.value_or(Split::train);
    ds.pairs.push_back(std::move(p));
    TextSample t;
    t.id = r.pair_id;
    t.caption = r.caption;
    ds.texts.push_back(std::move(t));
  }
  if (!any_split) ds = split_dataset(std::move(ds), options.seed, options.fractions);

  if (vocab) {
    ds.vocab = *vocab;
  } else {
    std::vector<std::string> captions;
    for (const auto& p : ds.pairs)
      if (p.split == Split::train) captions.push_back(ds.texts[p.text].caption);
    ds.vocab = build_vocab(captions, options.vocab_cap);
  }
  for (auto& t : ds.texts) {
    TextSample tok = tokenize(t.caption, ds.vocab, options.caption_len);
    t.tokens = std::move(tok.tokens);
  }
  return ds;
}

PairDataset load_dataset(const std::filesystem::path& manifest, const DataOptions& options,
                         const std::optional<Vocab>& vocab) {
  auto rows = read_manifest(manifest);
  const auto base = manifest.parent_path();
  std::unordered_map<std::string, ImageTensor> cache;
  std::vector<ImageTensor> images;
  images.reserve(rows.size());
  for (const auto& r : rows) {
    auto it = cache.find(r.image_path);
    if (it == cache.end()) {
      std::filesystem::path p(r.image_path);
      if (p.is_relative()) p = base / p;
      it = cache.emplace(r.image_path, read_image(p, options.image_size).pixels).first;
    }
    images.push_back(it->second);
  }
  return assemble_dataset(std::move(rows), std::move(images), options, vocab);
}

}  // namespace visita
