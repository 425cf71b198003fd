#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <tuple>

#include <unistd.h>

#include "visita/data_io.hpp"
#include "visita/error.hpp"
#include "visita/synthetic.hpp"

using namespace visita;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("visita_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string bytes_of(std::initializer_list<int> v) {
  std::string s;
  for (int b : v) s.push_back(static_cast<char>(b));
  return s;
}

}  // namespace

TEST(Pnm, P6Pixels) {
  const std::string file = "P6\n2 1\n255\n" + bytes_of({255, 0, 0, 0, 0, 0});
  const ImageTensor img = decode_pnm(file, "mem");
  ASSERT_EQ(img.channels, 3u);
  EXPECT_EQ(img.data, (std::vector<double>{1, 0, 0, 0, 0, 0}));
}

TEST(Pnm, PgmValues) {
  const std::string file = "P5\n3 2\n255\n" + std::string(6, static_cast<char>(128));
  const ImageTensor img = decode_pnm(file, "mem");
  ASSERT_EQ(img.channels, 1u);
  for (double v : img.data) EXPECT_DOUBLE_EQ(v, 128.0 / 255.0);
}

TEST(Pnm, Rejections) {
  EXPECT_THROW(decode_pnm("P3\n1 1\n255\n0 0 0\n", "mem"), UnsupportedFormatError);
  EXPECT_THROW(decode_pnm("GIF89a", "mem"), FormatError);
  EXPECT_THROW(decode_pnm("P6\n2 2\n255\n" + bytes_of({1, 2, 3}), "mem"), FormatError);
  EXPECT_THROW(decode_pnm("P6\n1 1\n65535\n" + bytes_of({0, 0, 0, 0, 0, 0}), "mem"), UnsupportedFormatError);
  try {
    decode_pnm("P6\n2 2\n255\n", "pic.ppm");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("pic.ppm"), std::string::npos);
  }
}

TEST(Pnm, EncodeDecodeRoundTripWithinQuantization) {
  Rng rng(101);
  ImageTensor img(5, 7, 3);
  for (double& v : img.data) v = rng.uniform();
  const ImageTensor back = decode_pnm(encode_pnm(img), "mem");
  ASSERT_EQ(back.data.size(), img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_LE(std::abs(back.data[i] - img.data[i]), 0.5 / 255.0 + 1e-12);
}

TEST(Pnm, ReadImageResizesAndScales) {
  const fs::path dir = scratch_dir("read");
  ImageTensor img(8, 8, 3, 1.0);
  write_image(dir / "a.ppm", img);
  const ImageSample s = read_image(dir / "a.ppm", 4);
  EXPECT_EQ(s.pixels.height, 4u);
  for (double v : s.pixels.data) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(read_image(dir / "missing.ppm"), IoError);
  fs::remove_all(dir);
}

TEST(Tokenize, Rules) {
  Vocab v({"a", "red", "circle"});
  const TextSample t = tokenize("A red circle.", v, 6);
  EXPECT_EQ(t.tokens, (std::vector<int>{2, 3, 4, 0, 0, 0}));
  EXPECT_EQ(split_words("A red circle."), (std::vector<std::string>{"a", "red", "circle"}));
  EXPECT_EQ(tokenize("", v, 4).tokens, std::vector<int>(4, Vocab::kPad));
  EXPECT_EQ(tokenize("a a a a a a a a", v, 3).tokens.size(), 3u);
  EXPECT_EQ(tokenize("blue circle", v, 2).tokens, (std::vector<int>{Vocab::kUnk, 4}));
}

TEST(BuildVocab, FrequencyThenLexicalOrder) {
  const std::vector<std::string> corpus{"a b", "a"};
  const Vocab v = build_vocab(corpus, 10);
  EXPECT_EQ(v.id("a"), 2);
  EXPECT_EQ(v.id("b"), 3);
  EXPECT_EQ(v.token(0), kPadToken);
  EXPECT_EQ(v.token(1), kUnkToken);
  EXPECT_EQ(v, build_vocab(corpus, 10));
}

TEST(BuildVocab, CapKeepsMostFrequent) {
  const std::vector<std::string> corpus{"e d c b a", "c", "c d"};
  const Vocab v = build_vocab(corpus, 3);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_TRUE(v.contains("c"));
  EXPECT_EQ(v.id("d"), Vocab::kUnk);
  EXPECT_THROW(build_vocab(corpus, 2), InvalidInputError);
}

TEST(BuildVocab, IdsDenseAndReservedFixed) {
  Rng rng(102);
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) {
    std::string c;
    for (int w = 0; w < 6; ++w) c += "w" + std::to_string(rng.below(40)) + " ";
    corpus.push_back(c);
  }
  const Vocab v = build_vocab(corpus, 30);
  EXPECT_EQ(v.id(kPadToken), 0);
  EXPECT_EQ(v.id(kUnkToken), 1);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.id(v.token(static_cast<int>(i))), static_cast<int>(i));
}

TEST(Augment, IdentityConfigurationAndInvolution) {
  Rng rng(103);
  ImageSample s{"x", ImageTensor(6, 6, 3), ""};
  for (double& v : s.pixels.data) v = rng.uniform();
  EXPECT_EQ(augment(s, rng, 0.0, 1.0).pixels, s.pixels);
  EXPECT_EQ(flip_horizontal(flip_horizontal(s.pixels)), s.pixels);
  const ImageSample once = augment(s, rng, 1.0, 1.0);
  EXPECT_EQ(once.pixels, flip_horizontal(s.pixels));
  Rng a(7), b(7);
  EXPECT_EQ(augment(s, a, 0.5, 0.6).pixels, augment(s, b, 0.5, 0.6).pixels);
}

TEST(Split, HundredPairsGiveSeventyFifteenFifteen) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto a = split_assignment(100, seed);
    std::size_t c[3] = {0, 0, 0};
    for (Split s : a) ++c[static_cast<int>(s)];
    EXPECT_EQ(c[0], 70u);
    EXPECT_EQ(c[1], 15u);
    EXPECT_EQ(c[2], 15u);
  }
  EXPECT_EQ(split_assignment(100, 5), split_assignment(100, 5));
  EXPECT_NE(split_assignment(100, 5), split_assignment(100, 6));
}

TEST(Split, PartitionForRandomSizes) {
  Rng rng(104);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 3 + rng.below(300);
    const auto a = split_assignment(n, rng.next_u64());
    ASSERT_EQ(a.size(), n);
    std::size_t c[3] = {0, 0, 0};
    for (Split s : a) ++c[static_cast<int>(s)];
    EXPECT_EQ(c[0] + c[1] + c[2], n);
    EXPECT_EQ(c[1], static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n))));
  }
  EXPECT_THROW(split_assignment(2, 1), InvalidInputError);
  EXPECT_THROW(parse_split_fractions("0.5,0.5,0.5"), ConfigError);
  EXPECT_THROW(parse_split_fractions("0.5,0.5"), ConfigError);
}

TEST(Manifest, ParsesQuotedFieldsAndOptionalSplit) {
  const std::string text =
      "pair_id,image_path,caption,label,split\n"
      "p1,images/a.ppm,\"a red, \"\"big\"\" circle\",1,train\n"
      "p2,images/b.ppm,plain,0,test\n";
  const auto rows = parse_manifest(text);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].caption, "a red, \"big\" circle");
  EXPECT_EQ(rows[1].label, 0);
  EXPECT_EQ(*rows[1].split, Split::test);
  EXPECT_EQ(parse_manifest(format_manifest(rows)).size(), 2u);
  EXPECT_EQ(format_manifest(parse_manifest(format_manifest(rows))), format_manifest(rows));
  const auto no_split = parse_manifest("pair_id,image_path,caption,label\np1,a.ppm,x,1\n");
  EXPECT_FALSE(no_split[0].split.has_value());
}

TEST(Manifest, ErrorsNameRow) {
  const std::string header = "pair_id,image_path,caption,label\n";
  auto row_of = [&](const std::string& body) {
    try {
      parse_manifest(header + body);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(row_of("p1,a.ppm,x,1\np2,b.ppm,y,maybe\n").find("row 3"), std::string::npos);
  EXPECT_NE(row_of("p1,a.ppm,x\n").find("row 2"), std::string::npos);
  EXPECT_NE(row_of("p1,a.ppm,x,1\np1,b.ppm,y,1\n").find("duplicate"), std::string::npos);
  EXPECT_THROW(parse_manifest("id,path\n"), FormatError);
}

TEST(Synthetic, BalancedClassesAndCaptions) {
  Rng rng(105);
  const SyntheticData s = generate_synthetic(12, 4, 16, rng);
  std::map<std::size_t, std::size_t> count;
  for (std::size_t c : s.classes) ++count[c];
  for (const auto& [c, n] : count) EXPECT_EQ(n, 3u) << c;
  for (std::size_t i = 0; i < s.rows.size(); ++i)
    for (std::size_t j = 0; j < s.rows.size(); ++j)
      if (s.classes[i] == s.classes[j]) {
        EXPECT_EQ(s.rows[i].caption, s.rows[j].caption);
      }
  for (const auto& img : s.images)
    for (double v : img.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  EXPECT_THROW(generate_synthetic(10, 37, 16, rng), ConfigError);
  EXPECT_THROW(generate_synthetic(3, 4, 16, rng), ConfigError);
}

TEST(Synthetic, ClassAttributesInjective) {
  std::set<std::tuple<int, std::size_t, int>> seen;
  for (std::size_t c = 0; c < kMaxSyntheticClasses; ++c) {
    const auto a = class_attributes(c);
    EXPECT_TRUE(seen.emplace(static_cast<int>(a.shape), a.intensity, static_cast<int>(a.quadrant)).second) << c;
  }
  // Small class counts already vary every attribute.
  std::set<std::string> captions;
  for (std::size_t c = 0; c < 10; ++c) captions.insert(class_caption(class_attributes(c)));
  EXPECT_EQ(captions.size(), 10u);
}

TEST(Synthetic, WriteIsDeterministicAndLoadsBack) {
  const fs::path a = scratch_dir("syn_a"), b = scratch_dir("syn_b");
  Rng r1(106), r2(106);
  const fs::path ma = write_synthetic(generate_synthetic(20, 5, 16, r1), a);
  write_synthetic(generate_synthetic(20, 5, 16, r2), b);
  EXPECT_EQ(read_file(ma), read_file(b / "manifest.csv"));
  for (const auto& e : fs::directory_iterator(a / "images"))
    EXPECT_EQ(read_file(e.path()), read_file(b / "images" / e.path().filename()));

  Rng r3(106);
  const SyntheticData s = generate_synthetic(20, 5, 16, r3);
  DataOptions opt;
  opt.image_size = 16;
  const PairDataset d = load_dataset(ma, opt);
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d.pairs.size(), 20u);
  for (const auto& t : d.texts) EXPECT_EQ(t.tokens.size(), opt.caption_len);
  // Pixels survive the write/read cycle within 8-bit quantization.
  for (std::size_t k = 0; k < d.pairs.size(); ++k) {
    const auto& loaded = d.images[d.pairs[k].image].pixels.data;
    const std::size_t src = std::stoul(d.pairs[k].pair_id);
    for (std::size_t i = 0; i < loaded.size(); ++i) EXPECT_LE(std::abs(loaded[i] - s.images[src].data[i]), 1.0 / 255.0);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, SplitsVocabAndSharedImages) {
  std::vector<ManifestRow> rows;
  std::vector<ImageTensor> images;
  for (int i = 0; i < 20; ++i) {
    rows.push_back({"p" + std::to_string(i), "img" + std::to_string(i % 10) + ".ppm",
                    i < 14 ? "train word" : "heldout only", 1, std::nullopt});
    images.emplace_back(4, 4, 3, 0.1 * (i % 10));
  }
  DataOptions opt;
  opt.image_size = 4;
  const PairDataset d = assemble_dataset(rows, images, opt);
  EXPECT_EQ(d.images.size(), 10u);
  std::size_t total = 0;
  for (Split s : {Split::train, Split::val, Split::test}) total += d.split_indices(s).size();
  EXPECT_EQ(total, 20u);
  EXPECT_EQ(d.split_indices(Split::test).size(), 3u);
  EXPECT_TRUE(std::is_sorted(d.pairs.begin(), d.pairs.end(),
                             [](const PairRecord& a, const PairRecord& b) { return a.pair_id < b.pair_id; }));

  for (auto& r : rows) r.split = Split::train;
  rows[0].split = Split::test;
  const PairDataset kept = assemble_dataset(rows, images, opt);
  EXPECT_EQ(kept.split_indices(Split::test).size(), 1u);
  rows[1].split.reset();
  EXPECT_THROW(assemble_dataset(rows, images, opt), FormatError);
}
