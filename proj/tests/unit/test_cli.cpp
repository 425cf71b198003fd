#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <sstream>

#include "commands.hpp"
#include "json.hpp"
#include "visita/checkpoint.hpp"
#include "visita/data_io.hpp"

using namespace visita;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  json out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "visita");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.err = err.str();
  // Exactly one JSON document: parsing the whole stream must succeed.
  r.out = json::parse(out.str());
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("visita_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string small_data(const std::string& name = "data") {
    const CliRun r = run({"gen-data", "--pairs", "24", "--classes", "4", "--seed", "3", "--image_size", "8", "--out",
                       path(name)});
    EXPECT_EQ(r.code, cli::kExitOk) << r.err;
    return r.out["manifest"].get<std::string>();
  }

  const std::vector<std::string> small_model{"--image_size", "8",  "--d_model", "8", "--d_embed", "4",
                                             "--heads",      "2",  "--blocks",  "1", "--caption_len", "8"};

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenDataContractAndDeterminism) {
  const CliRun a = run({"gen-data", "--pairs", "12", "--classes", "4", "--seed", "7", "--image_size", "8", "--out", path("a")});
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  EXPECT_EQ(a.out["command"], "gen-data");
  EXPECT_EQ(a.out["class_counts"], json::array({3, 3, 3, 3}));
  const auto rows = parse_manifest(read_file(a.out["manifest"].get<std::string>()));
  EXPECT_EQ(rows.size(), 12u);
  for (const auto& r : rows) EXPECT_TRUE(fs::exists(dir_ / "a" / r.image_path)) << r.image_path;

  run({"gen-data", "--pairs", "12", "--classes", "4", "--seed", "7", "--image_size", "8", "--out", path("b")});
  EXPECT_EQ(read_file(path("a/manifest.csv")), read_file(path("b/manifest.csv")));
  for (const auto& r : rows) EXPECT_EQ(read_file(dir_ / "a" / r.image_path), read_file(dir_ / "b" / r.image_path));
}

TEST_F(CliTest, GenDataUnwritableDirectoryIsUsageError) {
  write_file(path("blocker"), "file");
  const CliRun r = run({"gen-data", "--pairs", "4", "--classes", "2", "--out", path("blocker/sub")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.out["error"]["message"].get<std::string>().find("blocker"), std::string::npos);
}

TEST_F(CliTest, GenDataRejectsBadClassCount) {
  EXPECT_EQ(run({"gen-data", "--pairs", "40", "--classes", "37", "--out", path("x")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"gen-data", "--pairs", "ten", "--out", path("x")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"no-such-command"}).code, cli::kExitUsage);
}

TEST_F(CliTest, TrainZeroEpochsWritesLoadableCheckpoint) {
  const std::string manifest = small_data();
  std::vector<std::string> args{"train", "--manifest", manifest, "--out", path("m.mkvt"), "--epochs", "0"};
  args.insert(args.end(), small_model.begin(), small_model.end());
  const CliRun r = run(args);
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(r.out["first_loss"].is_null());
  EXPECT_EQ(read_file(path("m.mkvt.loss.csv")), "epoch,mean_loss\n");
  const Checkpoint ck = load_checkpoint(path("m.mkvt"));
  EXPECT_EQ(ck.model.config.d_model, 8u);
  EXPECT_EQ(ck.vocab.size(), r.out["vocab_size"].get<std::size_t>());
}

TEST_F(CliTest, TrainCorruptManifestNamesRow) {
  small_data();
  std::string bad = read_file(path("data/manifest.csv"));
  // Break the label on file row 6.
  std::size_t pos = 0;
  for (int line = 0; line < 5; ++line) pos = bad.find('\n', pos) + 1;
  const std::size_t label = bad.find_last_of(',', bad.find('\n', pos)) + 1;
  bad.replace(label, bad.find('\n', pos) - label, "maybe");
  write_file(path("data/bad.csv"), bad);
  const CliRun r = run({"train", "--manifest", path("data/bad.csv"), "--out", path("m.mkvt"), "--epochs", "0"});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.out["error"]["message"].get<std::string>().find("row 6"), std::string::npos) << r.out.dump();
}

TEST_F(CliTest, TrainUnknownAndBadConfigKeys) {
  const std::string manifest = small_data();
  EXPECT_EQ(run({"train", "--manifest", manifest, "--out", path("m"), "--bogus", "1"}).code, cli::kExitUsage);
  write_file(path("cfg.txt"), "epochs = 1\nbogus_key = 3\n");
  const CliRun r = run({"train", "--manifest", manifest, "--out", path("m"), "--config", path("cfg.txt")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.out["error"]["message"].get<std::string>().find("bogus_key"), std::string::npos);
  EXPECT_EQ(run({"train", "--manifest", manifest, "--out", path("m"), "--learning_rate", "-1"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--manifest", path("nope.csv"), "--out", path("m")}).code, cli::kExitData);
}

TEST_F(CliTest, EvalRejectsTruncatedCheckpoint) {
  const std::string manifest = small_data();
  std::vector<std::string> args{"train", "--manifest", manifest, "--out", path("m.mkvt"), "--epochs", "0"};
  args.insert(args.end(), small_model.begin(), small_model.end());
  ASSERT_EQ(run(args).code, cli::kExitOk);
  const std::string bytes = read_file(path("m.mkvt"));
  write_file(path("cut.mkvt"), bytes.substr(0, bytes.size() / 2));
  const CliRun r = run({"eval", "--model", path("cut.mkvt"), "--manifest", manifest});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.out["error"]["message"].get<std::string>().find("MKVT"), std::string::npos);
}

TEST_F(CliTest, EvalReportsMetricsAndWritesFiles) {
  const std::string manifest = small_data();
  std::vector<std::string> args{"train", "--manifest", manifest, "--out", path("m.mkvt"), "--epochs", "2"};
  args.insert(args.end(), small_model.begin(), small_model.end());
  ASSERT_EQ(run(args).code, cli::kExitOk);
  const CliRun r = run({"eval", "--model", path("m.mkvt"), "--manifest", manifest, "--ks", "1,2", "--eval-split", "train",
                     "--report", path("report.json"), "--table", path("table.txt")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(r.out["split"], "train");
  EXPECT_EQ(json::parse(read_file(path("report.json"))), r.out);
  EXPECT_NE(read_file(path("table.txt")).find("mAP"), std::string::npos);
  const double map = r.out["map"].get<double>();
  EXPECT_GE(map, 0.0);
  EXPECT_LE(map, 1.0);
  EXPECT_EQ(run({"eval", "--model", path("m.mkvt"), "--manifest", manifest, "--ks", "0"}).code, cli::kExitUsage);
}

TEST_F(CliTest, SolveMklTwoPoints) {
  write_file(path("two.csv"), "x,label\n1,1\n-1,-1\n");
  const CliRun r = run({"solve-mkl", "--csv", path("two.csv"), "--kernels", "linear"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(r.out["weights"], json::array({1.0}));
  EXPECT_NEAR(r.out["dual_objective"].get<double>(), 0.5, 1e-9);
  EXPECT_NEAR(r.out["bias"].get<double>(), 0.0, 1e-9);
}

TEST_F(CliTest, SolveMklDuplicateKernelsShareWeight) {
  std::string csv;
  Rng rng(5);
  for (int i = 0; i < 16; ++i) {
    const double a = rng.normal(), b = rng.normal();
    csv += std::to_string(a) + "," + std::to_string(b) + "," + (a * a + b * b > 1.0 ? "1" : "-1") + "\n";
  }
  write_file(path("dup.csv"), csv);
  const CliRun r = run({"solve-mkl", "--csv", path("dup.csv"), "--kernels", "rbf:0.5,rbf:0.5"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto w = r.out["weights"].get<std::vector<double>>();
  ASSERT_EQ(w.size(), 2u);
  EXPECT_NEAR(w[0], w[1], 1e-6);
}

TEST_F(CliTest, SolveMklMalformedRows) {
  write_file(path("bad.csv"), "1,1\n2,yes\n");
  const CliRun r = run({"solve-mkl", "--csv", path("bad.csv")});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.out["error"]["message"].get<std::string>().find("row 2"), std::string::npos);
  write_file(path("ragged.csv"), "1,2,1\n1,-1\n");
  EXPECT_EQ(run({"solve-mkl", "--csv", path("ragged.csv")}).code, cli::kExitData);
  write_file(path("ok.csv"), "1,1\n-1,-1\n");
  EXPECT_EQ(run({"solve-mkl", "--csv", path("ok.csv"), "--kernels", "sigmoid"}).code, cli::kExitUsage);
}

TEST_F(CliTest, GradcheckPassesAndDetectsCorruption) {
  const CliRun a = run({"gradcheck", "--instances", "3"});
  EXPECT_EQ(a.code, cli::kExitOk) << a.err;
  EXPECT_EQ(run({"gradcheck", "--instances", "3"}).err, a.err);
  const CliRun bad = run({"gradcheck", "--instances", "3", "--corrupt-backward"});
  EXPECT_EQ(bad.code, cli::kExitCheckFailed);
  EXPECT_NE(bad.err.find("failing"), std::string::npos);
}
