#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "support/toy_kg.hpp"

using sacn::testing::read_file;
using sacn::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run sacn_cli(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli.log";
  const std::string cmd = std::string("\"") + SACN_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(log)};
}

std::string toy(const std::string& name) { return std::string(SACN_TOY_DATA) + "/" + name; }

class CliTest : public ::testing::Test {
 protected:
  TempDir dir{"cli"};
  std::string data() const { return (dir / "data").string(); }

  void prepare() {
    const auto r = sacn_cli("prepare --train " + toy("train.tsv") + " --valid " + toy("valid.tsv") + " --test " +
                                toy("test.tsv") + " --attributes " + toy("attributes.tsv") + " --out " + data(),
                            dir.path());
    ASSERT_EQ(r.code, 0) << r.out;
  }

  void train(const std::string& out, const std::string& extra = "") {
    const auto r = sacn_cli("train --data " + data() + " --out " + (dir / out).string() +
                                " --set embedding_size=8 --set kernel_count=4 --set epochs=3 --set batch_size=16 " + extra,
                            dir.path());
    ASSERT_EQ(r.code, 0) << r.out;
  }
};

}  // namespace

TEST_F(CliTest, PrepareWritesDatasetDirectory) {
  prepare();
  for (const char* f : {"entities.txt", "relations.txt", "triples.tsv", "stats.txt", "stats.csv"})
    EXPECT_TRUE(fs::exists(dir / "data" / f)) << f;
  EXPECT_NE(read_file(dir / "data" / "entities.txt").find("attr:"), std::string::npos);
}

TEST_F(CliTest, TrainEvaluatePredict) {
  prepare();
  train("run");
  EXPECT_TRUE(fs::exists(dir / "run" / "best.ckpt"));
  const auto metrics = read_file(dir / "run" / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "epoch,loss,mrr,hits1,hits3,hits10");

  const auto ev = sacn_cli("evaluate --checkpoint " + (dir / "run" / "best.ckpt").string() + " --data " + data() +
                               " --split test --out " + (dir / "eval").string(),
                           dir.path());
  ASSERT_EQ(ev.code, 0) << ev.out;
  EXPECT_NE(read_file(dir / "eval" / "report.txt").find("MRR"), std::string::npos);
  EXPECT_EQ(read_file(dir / "eval" / "indegree.csv").substr(0, 9), "bucket_lo");

  const auto pr = sacn_cli("predict --checkpoint " + (dir / "run" / "best.ckpt").string() + " --data " + data() +
                               " --subject paris --relation capital_of --topk 3",
                           dir.path());
  ASSERT_EQ(pr.code, 0) << pr.out;
  EXPECT_FALSE(pr.out.empty());

  const auto unknown = sacn_cli("predict --checkpoint " + (dir / "run" / "best.ckpt").string() + " --data " + data() +
                                    " --subject nowhere --relation capital_of",
                                dir.path());
  EXPECT_EQ(unknown.code, 1) << unknown.out;
}

TEST_F(CliTest, SameSeedRunsAreIdentical) {
  prepare();
  train("a", "--seed 5");
  train("b", "--seed 5");
  EXPECT_EQ(read_file(dir / "a" / "metrics.csv"), read_file(dir / "b" / "metrics.csv"));
  EXPECT_EQ(read_file(dir / "a" / "last.ckpt"), read_file(dir / "b" / "last.ckpt"));
  EXPECT_NE(read_file(dir / "a" / "config.txt").find("seed=5"), std::string::npos);
}

TEST_F(CliTest, Gradcheck) {
  const auto r = sacn_cli("gradcheck --toy-size 5", dir.path());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("max rel err"), std::string::npos);
}

TEST_F(CliTest, Sweep) {
  prepare();
  {
    std::ofstream grid(dir / "grid.txt");
    grid << "learning_rate=0.01,0.003\nepochs=1\nembedding_size=8\nkernel_count=4\n";
  }
  const auto r = sacn_cli("sweep --grid " + (dir / "grid.txt").string() + " --data " + data() + " --out " +
                              (dir / "sweep").string(),
                          dir.path());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto csv = read_file(dir / "sweep" / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(sacn_cli("prepare --train /nonexistent.tsv --valid x --test y --out " + data(), dir.path()).code, 2);
  EXPECT_EQ(sacn_cli("train --out x --bogus", dir.path()).code, 1);
  EXPECT_EQ(sacn_cli("", dir.path()).code, 1);
  prepare();
  EXPECT_EQ(sacn_cli("train --data " + data() + " --out " + (dir / "bad").string() + " --set dropout=2", dir.path()).code,
            1);
  EXPECT_EQ(sacn_cli("train --data " + data() + " --out " + (dir / "bad").string() + " --set nope=2", dir.path()).code, 1);
  EXPECT_EQ(sacn_cli("evaluate --checkpoint /nonexistent.ckpt --data " + data(), dir.path()).code, 2);
  EXPECT_EQ(sacn_cli("gradcheck --toy-size 5 --tolerance 1e-30", dir.path()).code, 3);
}
