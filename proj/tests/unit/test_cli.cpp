#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "mambair/checkpoint.hpp"
#include "mambair/config.hpp"
#include "mambair/image_io.hpp"
#include "mambair/model.hpp"

namespace fs = std::filesystem;
using namespace mambair;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mambair_cli_" + std::string(
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Exit status of the tool; stderr goes to err.txt.
  int run(const std::string& args) const {
    const std::string cmd = std::string(MAMBAIR_CLI_PATH) + " " + args + " > " + path("out.txt") + " 2> " +
                            path("err.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const std::string& name) const {
    std::ifstream in(path(name), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("selftest --no-such-flag"), 2);
  EXPECT_EQ(run("bench --variant conv"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, UnknownConfigKeyIsNamed) {
  EXPECT_EQ(run("train --set colour=red"), 2);
  EXPECT_NE(slurp("err.txt").find("colour"), std::string::npos);
  std::ofstream(path("bad.cfg")) << "channels = 16\nwidth = 3\n";
  EXPECT_EQ(run("erf --config " + path("bad.cfg")), 2);
  EXPECT_NE(slurp("err.txt").find("width"), std::string::npos);
  EXPECT_EQ(run("erf --set channels=banana"), 2);
}

TEST_F(Cli, MissingFilesExitThree) {
  EXPECT_EQ(run("infer --input " + path("none.ppm") + " --out " + path("o.ppm")), 3);
  EXPECT_EQ(run("erf --config " + path("none.cfg")), 3);
  EXPECT_EQ(run("erf --set checkpoint=" + path("none.mirc")), 3);
  EXPECT_EQ(run("train --input " + path("empty")), 3);
}

TEST_F(Cli, NonFiniteTrainingExitsFour) {
  ModelConfig model;
  ModelState params = init_model(model, 0);
  params.at("head.w").data_mut()[0] = std::numeric_limits<double>::quiet_NaN();
  save_checkpoint(path("nan.mirc"), params);
  EXPECT_EQ(run("train --set synthetic_images=2 --set eval_images=1 --set total_steps=1 --set checkpoint=" +
                path("nan.mirc") + " --out " + path("m.mirc")),
            4);
}

TEST_F(Cli, IdentityDenoiserInferReturnsInput) {
  Rng rng(1);
  image_write(path("in.ppm"), testing_util::random_tensor(rng, {9, 11, 3}, 0, 1));
  ASSERT_EQ(run("infer --set identity_init=true --input " + path("in.ppm") + " --out " + path("out.ppm")), 0);
  EXPECT_EQ(slurp("out.ppm"), slurp("in.ppm"));

  fs::create_directories(dir_ / "batch");
  image_write(path("batch/a.pgm"), testing_util::random_tensor(rng, {6, 6, 1}, 0, 1));
  ASSERT_EQ(run("infer --set identity_init=true --set in_channels=1 --ensemble --input " + path("batch") +
                " --out " + path("restored")),
            0);
  EXPECT_EQ(slurp("restored/a.pgm"), slurp("batch/a.pgm"));
}

TEST_F(Cli, ZeroStepTrainingWritesInitialization) {
  ASSERT_EQ(run("train --seed 7 --set total_steps=0 --set synthetic_images=2 --set eval_images=1 --out " +
                path("init.mirc")),
            0);
  RunConfig config;
  config.train.seed = 7;
  const Checkpoint saved = load_checkpoint(path("init.mirc"));
  EXPECT_EQ(encode_checkpoint(saved.params, {}), encode_checkpoint(init_model(config.model, 7), {}));
  EXPECT_TRUE(fs::exists(path("init.mirc.cfg")));
  EXPECT_EQ(parse_config(slurp("init.mirc.cfg")).train.seed, 7u);
  EXPECT_EQ(slurp("init.mirc.metrics.csv").substr(0, 20), "step,loss,psnr,ssim\n");
}

TEST_F(Cli, SeededRunsAreByteIdentical) {
  const std::string train_args =
      "train --seed 3 --set total_steps=2 --set eval_every=1 --set synthetic_images=2 --set eval_images=1 "
      "--set channels=8 --set groups=1 --set blocks_per_group=1 --set ca_reduction=4 --set patch_size=12 "
      "--set synthetic_size=16 --out ";
  ASSERT_EQ(run(train_args + path("a.mirc")), 0);
  ASSERT_EQ(run(train_args + path("b.mirc")), 0);
  EXPECT_EQ(slurp("a.mirc"), slurp("b.mirc"));
  EXPECT_EQ(slurp("a.mirc.metrics.csv"), slurp("b.mirc.metrics.csv"));

  ASSERT_EQ(run("erf --seed 3 --set erf_size=8 --set erf_mode=averaged --out " + path("e1")), 0);
  ASSERT_EQ(run("erf --seed 3 --set erf_size=8 --set erf_mode=averaged --out " + path("e2")), 0);
  EXPECT_EQ(slurp("e1.pgm"), slurp("e2.pgm"));
  EXPECT_EQ(slurp("e1.csv"), slurp("e2.csv"));

  ASSERT_EQ(run("channels --seed 3 --set synthetic_size=8 --set eval_images=2 --out " + path("c1.csv")), 0);
  ASSERT_EQ(run("channels --seed 3 --set synthetic_size=8 --set eval_images=2 --out " + path("c2.csv")), 0);
  EXPECT_EQ(slurp("c1.csv"), slurp("c2.csv"));
  EXPECT_EQ(slurp("c1.csv").substr(0, 19), "channel,activation\n");
}

TEST_F(Cli, BenchPrintsCsvAndSlopes) {
  ASSERT_EQ(run("bench --sizes 4,6,8,10 --variant ssm"), 0);
  const std::string out = slurp("out.txt");
  EXPECT_EQ(out.substr(0, out.find('\n')), "side,pixels,variant,ms_median,bytes");
  EXPECT_NE(out.find("slope ssm"), std::string::npos);
  EXPECT_EQ(run("bench --sizes 4,6,8"), 2);
  EXPECT_EQ(run("bench --sizes 4,x,8,10"), 2);
}

TEST_F(Cli, SelftestPasses) {
  EXPECT_EQ(run("selftest"), 0) << slurp("out.txt");
  EXPECT_NE(slurp("out.txt").find("checks passed"), std::string::npos);
}
