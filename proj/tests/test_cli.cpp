#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "oplanes_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(OPLANES_CLI_PATH) + " " + args + " > " + (kWork / "out.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string output() {
  std::ifstream in(kWork / "out.txt");
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("gen-data --n 1"), 2) << output();
  EXPECT_EQ(run("no-such-command"), 2) << output();
  EXPECT_EQ(run("infer --ckpt " + (kWork / "missing.opck").string() + " --sample " + kWork.string()), 2) << output();
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, EndToEndOnOneTinySample) {
  const auto data = kWork / "data";
  ASSERT_EQ(run("gen-data --spec sphere --n 1 --seed 3 --res 128 --out " + data.string()), 0) << output();
  ASSERT_TRUE(fs::exists(data / "manifest.txt"));
  const auto sample = data / "0000_sphere";
  ASSERT_TRUE(fs::exists(sample / "mesh.obj")) << output();

  EXPECT_EQ(run("gt-oplanes --sample " + sample.string() + " --planes 16 --res 64 --out " +
                (kWork / "gt.opln").string()),
            0)
      << output();
  EXPECT_TRUE(fs::exists(kWork / "gt.opln"));

  const auto runs = kWork / "run";
  ASSERT_EQ(run("train --data " + data.string() + " --out " + runs.string() +
                " --desk --iters 2 --batch 1 --planes 2 --seed 1 --quiet"),
            0)
      << output();
  ASSERT_TRUE(fs::exists(runs / "model.opck")) << output();
  EXPECT_TRUE(fs::exists(runs / "loss.csv"));

  const auto mesh = kWork / "pred.obj";
  EXPECT_EQ(run("infer --ckpt " + (runs / "model.opck").string() + " --sample " + sample.string() +
                " --planes 8 --out " + mesh.string()),
            0)
      << output();
  if (fs::exists(mesh)) {
    EXPECT_EQ(run("eval --pred " + mesh.string() + " --sample " + sample.string() + " --samples 2000"), 0)
        << output();
  }
  EXPECT_EQ(run("visibility --sample " + sample.string() + " --samples 2000"), 0) << output();
  EXPECT_NE(output().find('1'), std::string::npos);
}

TEST_F(Cli, BadInputFilesExitWithOne) {
  const auto bad = kWork / "bad";
  fs::create_directories(bad);
  std::ofstream(bad / "model.opck") << "not a checkpoint";
  EXPECT_EQ(run("infer --ckpt " + (bad / "model.opck").string() + " --sample " + bad.string()), 1) << output();
}
