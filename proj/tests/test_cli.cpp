#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "fishdreamer/config.hpp"
#include "fishdreamer/dataset.hpp"
#include "fishdreamer/raster.hpp"
#include "fishdreamer/weights_io.hpp"

namespace fd {
namespace {

namespace fs = std::filesystem;

const char* kSmallConfig = R"(dataset = "cli-test"
k1 = 0.15
k2 = 0.0
k3 = 0.0
k4 = 0.0
fov_radius = 12
num_classes = 4
ignore_index = 255
patch = 2
window = 2
widths = [8, 16, 32, 64]
depths = [1, 1, 1, 1]
heads = [1, 2, 2, 4]
decoder_width = 8
n_mask = 2
batch_size = 2
steps = 3
lr = 1e-3
)";

std::string cli() {
  const char* p = std::getenv("FD_CLI");
  return p ? p : "fishdreamer";
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = dir_ / "small.conf";
    std::ofstream(config_) << kSmallConfig;
  }

  // Exit status of the command; output goes to log.txt.
  int run(const std::string& args) {
    const std::string cmd = "\"" + cli() + "\" " + args + " > \"" + (dir_ / "log.txt").string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string log() const { return slurp(dir_ / "log.txt"); }

  static std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  std::string cfg() const { return " --config \"" + config_.string() + "\""; }
  std::string at(const std::string& rel) const { return "\"" + (dir_ / rel).string() + "\""; }

  void make_dataset() {
    ASSERT_EQ(run("synth --output " + at("raw") + " --train 3 --val 2 --width 32 --height 32"), 0) << log();
    ASSERT_EQ(run("derive" + cfg() + " --input " + at("raw") + " --output " + at("data")), 0) << log();
  }

  fs::path dir_;
  fs::path config_;
};

TEST_F(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run(""), 1); }

TEST_F(Cli, UnknownOptionIsUsageError) { EXPECT_EQ(run("derive --bogus"), 1); }

TEST_F(Cli, BadConfigIsUsageError) {
  std::ofstream(dir_ / "bad.conf") << "k1 = 0.1\nfov_radius = 3\n";
  EXPECT_EQ(run("init --config " + at("bad.conf") + " --output " + at("w.fdw")), 1);
  EXPECT_NE(log().find("k2"), std::string::npos);
}

TEST_F(Cli, DeriveWritesManifestWithSplitCounts) {
  make_dataset();
  const auto m = read_manifest(dir_ / "data" / "manifest.jsonl");
  EXPECT_EQ(m.count("train"), 3u);
  EXPECT_EQ(m.count("val"), 2u);
  EXPECT_EQ(m.dataset, "cli-test");
  EXPECT_EQ(m.distortion_hash, hex64(distortion_hash(load_app_config(config_))));
}

TEST_F(Cli, UnpairedInputExitsWithDataError) {
  ASSERT_EQ(run("synth --output " + at("raw") + " --train 2 --val 0 --width 32 --height 32"), 0);
  fs::remove(dir_ / "raw" / "labels" / "train" / "000001.png");
  EXPECT_EQ(run("derive" + cfg() + " --input " + at("raw") + " --output " + at("data")), 2);
  EXPECT_NE(log().find("images/train/000001.png"), std::string::npos);
  EXPECT_EQ(read_manifest(dir_ / "data" / "manifest.jsonl").count("train"), 1u);
}

TEST_F(Cli, StatsCsvSumsToHundredPerSplit) {
  make_dataset();
  ASSERT_EQ(run("stats" + cfg() + " --manifest " + at("data/manifest.jsonl") + " --output " + at("stats.csv")), 0)
      << log();
  std::istringstream csv(slurp(dir_ / "stats.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "split,class,pixels,percent");
  std::map<std::string, double> sums;
  while (std::getline(csv, line)) {
    const auto c1 = line.find(',');
    const auto c3 = line.rfind(',');
    sums[line.substr(0, c1)] += std::stod(line.substr(c3 + 1));
  }
  EXPECT_NEAR(sums["train"], 100.0, 1e-6);
  EXPECT_NEAR(sums["val"], 100.0, 1e-6);
}

TEST_F(Cli, DemoWithFreshWeightsCopiesFovAndWritesValidLabels) {
  make_dataset();
  ASSERT_EQ(run("init" + cfg() + " --width 32 --height 32 --output " + at("w.fdw")), 0) << log();
  const auto m = read_manifest(dir_ / "data" / "manifest.jsonl");
  const auto& r = m.samples.front();
  ASSERT_EQ(run("demo" + cfg() + " --weights " + at("w.fdw") + " --image " + at("data/" + r.image) +
                " --mask " + at("data/" + r.mask) + " --output-dir " + at("demo")),
            0)
      << log();
  const Image in = read_png(dir_ / "data" / r.image);
  const Image mask = read_png(dir_ / "data" / r.mask);
  const Image rgb = read_png(dir_ / "demo" / "rgb.png");
  const Image label = read_png(dir_ / "demo" / "label.png");
  ASSERT_TRUE(rgb.same_size(in));
  ASSERT_TRUE(label.same_size(in));
  for (std::size_t p = 0; p < in.width * in.height; ++p) {
    if (!mask.pixels[p]) continue;
    for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(rgb.pixels[p * 3 + c], in.pixels[p * 3 + c]);
  }
  for (auto v : label.pixels) ASSERT_LT(v, 4);
  const auto report = nlohmann::json::parse(slurp(dir_ / "demo" / "report.json"));
  EXPECT_EQ(report["rgb"], nlohmann::json::array({32, 32, 3}));
  EXPECT_EQ(report["logits"], nlohmann::json::array({32, 32, 4}));
}

TEST_F(Cli, TrainAndEvalAreDeterministic) {
  make_dataset();
  const std::string train_args = "train" + cfg() + " --manifest " + at("data/manifest.jsonl");
  ASSERT_EQ(run(train_args + " --output " + at("a.fdw") + " --curve " + at("a.csv")), 0) << log();
  ASSERT_EQ(run(train_args + " --output " + at("b.fdw") + " --curve " + at("b.csv")), 0) << log();
  EXPECT_EQ(slurp(dir_ / "a.fdw"), slurp(dir_ / "b.fdw"));
  EXPECT_EQ(slurp(dir_ / "a.csv"), slurp(dir_ / "b.csv"));
  const std::string curve = slurp(dir_ / "a.csv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 4);

  const std::string eval_args = "eval" + cfg() + " --manifest " + at("data/manifest.jsonl");
  ASSERT_EQ(run(eval_args + " --weights " + at("a.fdw") + " --output " + at("a.json")), 0) << log();
  ASSERT_EQ(run(eval_args + " --weights " + at("b.fdw") + " --output " + at("b.json")), 0) << log();
  EXPECT_EQ(slurp(dir_ / "a.json"), slurp(dir_ / "b.json"));
  const auto j = nlohmann::json::parse(slurp(dir_ / "a.json"));
  EXPECT_EQ(j["samples"], 2);
  EXPECT_EQ(j["split"], "val");
  EXPECT_EQ(j["iou"].size(), 4u);
}

TEST_F(Cli, CorruptWeightsAreDataError) {
  make_dataset();
  std::ofstream(dir_ / "junk.fdw") << "JUNKJUNK";
  EXPECT_EQ(run("eval" + cfg() + " --manifest " + at("data/manifest.jsonl") + " --weights " + at("junk.fdw")), 2);
  EXPECT_NE(log().find("magic"), std::string::npos);
}

TEST_F(Cli, NanWeightsAbortTrainingWithNumericExit) {
  make_dataset();
  const auto app = load_app_config(config_);
  const auto cfg_model = model_config(app, 32, 32);
  auto w = init_weights(cfg_model);
  w.get("seg.classifier.b").mutable_data()[1] = std::numeric_limits<float>::quiet_NaN();
  save_weights(w, dir_ / "nan.fdw");
  EXPECT_EQ(run("train" + cfg() + " --manifest " + at("data/manifest.jsonl") + " --init " + at("nan.fdw") +
                " --output " + at("out.fdw")),
            3);
  EXPECT_NE(log().find("step 0"), std::string::npos);
}

}  // namespace
}  // namespace fd
