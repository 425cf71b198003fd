#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>

#include "visita/checkpoint.hpp"
#include "visita/error.hpp"
#include "visita/retrieval.hpp"
#include "visita/synthetic.hpp"

using namespace visita;

namespace {

ModelConfig small_config(std::size_t vocab) {
  ModelConfig c;
  c.image_size = 8;
  c.conv_channels = 2;
  c.d_model = 8;
  c.d_embed = 4;
  c.heads = 2;
  c.blocks = 1;
  c.ffn_hidden = 8;
  c.caption_len = 8;
  c.vocab_size = vocab;
  return c;
}

void expect_same_model(const MatchModel& a, const MatchModel& b) {
  EXPECT_EQ(a.config.d_model, b.config.d_model);
  EXPECT_EQ(a.config.vocab_size, b.config.vocab_size);
  EXPECT_EQ(a.config.head_init_gain, b.config.head_init_gain);
  auto ta = list_tensors(a), tb = list_tensors(b);
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].first, tb[i].first);
    EXPECT_EQ(*ta[i].second, *tb[i].second) << ta[i].first;
  }
}

}  // namespace

TEST(TensorContainer, RoundTripAndLayout) {
  const std::vector<NamedTensor> ts{{"s", {}, {-0.0}}, {"v", {3}, {1.5, 1e-300, -2.0}}, {"m", {1, 2}, {7, 8}}};
  const std::string bytes = encode_tensors(ts);
  EXPECT_EQ(bytes.substr(0, 4), "MKVT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  const auto back = decode_tensors(bytes);
  EXPECT_EQ(back, ts);
  EXPECT_TRUE(std::signbit(back[0].values[0]));
}

TEST(TensorContainer, RejectsTruncationMagicAndVersion) {
  const std::string bytes = encode_tensors(std::vector<NamedTensor>{{"v", {2}, {1.0, 2.0}}});
  for (std::size_t cut : {std::size_t{2}, std::size_t{6}, bytes.size() - 1}) {
    try {
      decode_tensors(bytes.substr(0, cut));
      FAIL() << cut;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("MKVT"), std::string::npos) << e.what();
    }
  }
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_tensors(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_tensors(bad), UnsupportedFormatError);
}

TEST(Checkpoint, BitExactRoundTrip) {
  const Vocab vocab({"red", "circle", "top"});
  const MatchModel m = MatchModel::init(small_config(vocab.size()), 11);
  const Checkpoint ck = deserialize_checkpoint(serialize_checkpoint(m, vocab));
  expect_same_model(m, ck.model);
  EXPECT_EQ(ck.vocab, vocab);
  EXPECT_FALSE(ck.model.mkl_head.has_value());
  EXPECT_EQ(serialize_checkpoint(ck.model, ck.vocab), serialize_checkpoint(m, vocab));
}

TEST(Checkpoint, MissingAndUnknownTensorsAreErrors) {
  const Vocab vocab({"a"});
  const MatchModel m = MatchModel::init(small_config(vocab.size()), 12);
  auto ts = checkpoint_tensors(m, vocab);
  auto missing = ts;
  missing.erase(missing.begin() + static_cast<long>(missing.size() / 2));
  EXPECT_THROW(checkpoint_from_tensors(missing), FormatError);
  auto extra = ts;
  extra.push_back({"param.surprise", {1, 1}, {0.0}});
  try {
    checkpoint_from_tensors(extra);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("param.surprise"), std::string::npos);
  }
  for (auto& t : ts)
    if (t.name.rfind("param.", 0) == 0) {
      t.dims = {1, static_cast<std::uint32_t>(t.values.size())};
      break;
    }
  EXPECT_THROW(checkpoint_from_tensors(ts), FormatError);
}

TEST(Checkpoint, MklHeadRoundTrip) {
  Rng rng(13);
  SyntheticData s = generate_synthetic(24, 3, 8, rng);
  DataOptions opt;
  opt.image_size = 8;
  opt.caption_len = 8;
  const PairDataset data = assemble_dataset(s.rows, s.images, opt);
  MatchModel m = MatchModel::init(small_config(data.vocab.size()), 14);
  MklHeadOptions ho;
  ho.positives = 8;
  m.mkl_head = fit_mkl_head(m, data, ho);
  const Checkpoint ck = deserialize_checkpoint(serialize_checkpoint(m, data.vocab));
  ASSERT_TRUE(ck.model.mkl_head.has_value());
  const MklModel &a = *m.mkl_head, &b = *ck.model.mkl_head;
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.kernel_bank, b.kernel_bank);
  EXPECT_EQ(a.support_xs, b.support_xs);
  EXPECT_EQ(a.support_ys, b.support_ys);
  EXPECT_EQ(a.support_alpha, b.support_alpha);
  EXPECT_EQ(a.solution.bias, b.solution.bias);
  const Vector probe(a.dimension(), 0.25);
  EXPECT_EQ(decision_function(a, probe), decision_function(b, probe));
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const Vocab vocab({"x", "y"});
  const MatchModel m = MatchModel::init(small_config(vocab.size()), 15);
  const auto path = std::filesystem::temp_directory_path() / ("visita_ck_" + std::to_string(::getpid()) + ".mkvt");
  save_checkpoint(path, m, vocab);
  expect_same_model(m, load_checkpoint(path).model);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}
