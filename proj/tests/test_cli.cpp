#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <regex>
#include <sstream>
#include <sys/wait.h>

#include "slowsem/cli.hpp"
#include "slowsem/pipeline.hpp"
#include "test_support.hpp"

using namespace slowsem;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

double field(const std::string& text, const std::string& key) {
  std::smatch m;
  const std::regex re(key + "=([-+0-9.eE]+)");
  REQUIRE(std::regex_search(text, m, re));
  return std::stod(m[1].str());
}

struct CliFixture {
  testing::TempDir dir{"cli"};
  std::string config;
  CliFixture() {
    testing::write_file(dir / "tiny.cfg", testing::kTinyConfig);
    config = (dir / "tiny.cfg").string();
  }
  std::string out(const std::string& name) const { return (dir / name).string(); }
};

// A corpus with enough segments for the switch rate to be measured to +-0.02.
const char* kManySegments = R"(synth.n_contexts = 8
synth.categories_per_context = 2
synth.instances_per_category = 40
synth.test_instances_per_category = 2
synth.frames_per_clip = 30
synth.image_size = 16
sequence.gamma = 2
)";

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("synth writes a corpus and refuses a non-empty directory") {
  CliFixture f;
  CliRun r = cli({"synth", "--config", f.config, "--out", f.out("c1")});
  REQUIRE(r.code == kExitOk);
  CHECK(std::filesystem::exists(f.dir / "c1/manifest.csv"));
  CHECK(std::filesystem::exists(f.dir / "c1/contexts.csv"));
  CHECK(std::filesystem::exists(f.dir / "c1/config.cfg"));
  CHECK(std::filesystem::exists(f.dir / "c1/images/0/0.bmp"));

  CliRun again = cli({"synth", "--config", f.config, "--out", f.out("c1")});
  CHECK(again.code == kExitConfig);
  CHECK(again.err.find("not empty") != std::string::npos);
  CHECK(cli({"synth", "--config", f.config, "--out", f.out("c1"), "--force"}).code == kExitOk);

  REQUIRE(cli({"synth", "--config", f.config, "--out", f.out("c2")}).code == kExitOk);
  CHECK(testing::read_file(f.dir / "c1/manifest.csv") == testing::read_file(f.dir / "c2/manifest.csv"));
  CHECK(testing::read_file(f.dir / "c1/images/3/2.bmp") == testing::read_file(f.dir / "c2/images/3/2.bmp"));
}

TEST_CASE("a synthesized corpus directory can be used as input") {
  CliFixture f;
  REQUIRE(cli({"synth", "--config", f.config, "--out", f.out("c")}).code == kExitOk);
  CliRun from_dir = cli({"seqgen", "--config", f.config, "--corpus", f.out("c"), "--out", f.out("s1")});
  CliRun direct = cli({"seqgen", "--config", f.config, "--out", f.out("s2")});
  REQUIRE(from_dir.code == kExitOk);
  REQUIRE(direct.code == kExitOk);
  CHECK(testing::read_file(f.dir / "s1/sequence.csv") == testing::read_file(f.dir / "s2/sequence.csv"));
}

TEST_CASE("seqgen reports the empirical switch rate") {
  CliFixture f;
  testing::write_file(f.dir / "many.cfg", kManySegments);
  const std::string cfg = (f.dir / "many.cfg").string();
  CliRun low = cli({"seqgen", "--config", cfg, "--out", f.out("low"), "--pc", "0.1"});
  REQUIRE(low.code == kExitOk);
  CHECK(field(low.out, "boundaries") - field(low.out, "forced") >= 5000);
  CHECK(std::abs(field(low.out, "switch_rate") - 0.1) <= 0.02);
  CHECK(testing::read_file(f.dir / "low/stats.txt") == low.out);

  CliRun all = cli({"seqgen", "--config", cfg, "--out", f.out("all"), "--pc", "1.0"});
  REQUIRE(all.code == kExitOk);
  CHECK(field(all.out, "switch_rate") == 1.0);
}

TEST_CASE("seqgen with the same seed writes identical sequence files") {
  CliFixture f;
  REQUIRE(cli({"seqgen", "--config", f.config, "--out", f.out("a"), "--pc", "0.1", "--seed", "7"}).code == 0);
  REQUIRE(cli({"seqgen", "--config", f.config, "--out", f.out("b"), "--pc", "0.1", "--seed", "7"}).code == 0);
  REQUIRE(cli({"seqgen", "--config", f.config, "--out", f.out("c"), "--pc", "0.1", "--seed", "8"}).code == 0);
  const std::string a = testing::read_file(f.dir / "a/sequence.csv");
  CHECK(a == testing::read_file(f.dir / "b/sequence.csv"));
  CHECK(a != testing::read_file(f.dir / "c/sequence.csv"));
}

TEST_CASE("train lowers the loss and records its artifacts") {
  CliFixture f;
  CliRun r = cli({"train", "--config", f.config, "--out", f.out("t"), "--loss", "both", "--set", "train.epochs=12"});
  REQUIRE(r.code == kExitOk);
  CHECK(field(r.out, "final_loss") < field(r.out, "initial_loss"));
  for (const char* name : {"config.cfg", "sequence.csv", "stats.txt", "train_log.csv", "checkpoint.bin"})
    CHECK(std::filesystem::exists(f.dir / "t" / name));
  const RunConfig saved = load_run_config(f.dir / "t/config.cfg");
  CHECK(saved.train.epochs == 12);
  CHECK(format_run_config(saved) == testing::read_file(f.dir / "t/config.cfg"));
}

TEST_CASE("vla-only training zeroes the temporal loss column") {
  CliFixture f;
  REQUIRE(cli({"train", "--config", f.config, "--out", f.out("t"), "--loss", "vla"}).code == kExitOk);
  std::istringstream log(testing::read_file(f.dir / "t/train_log.csv"));
  std::string line;
  std::getline(log, line);
  CHECK(line == "step,ssltt_loss,vla_loss,total_loss,seconds");
  int rows = 0;
  while (std::getline(log, line)) {
    std::istringstream fields(line);
    std::string step, ssltt;
    std::getline(fields, step, ',');
    std::getline(fields, ssltt, ',');
    CHECK(std::stod(ssltt) == 0.0);
    ++rows;
  }
  CHECK(rows > 0);
}

TEST_CASE("shuffled assignment flags reach the config, the checkpoint and the report") {
  CliFixture f;
  REQUIRE(cli({"train", "--config", f.config, "--out", f.out("t"), "--assignment", "shuffled", "--assign-seed",
               "3", "--set", "train.max_steps=2"})
              .code == kExitOk);
  const RunConfig saved = load_run_config(f.dir / "t/config.cfg");
  CHECK(saved.assignment == AssignmentMode::Shuffled);
  CHECK(saved.assign_seed == 3);
  REQUIRE(cli({"eval", "--checkpoint", f.out("t/checkpoint.bin"), "--out", f.out("e")}).code == kExitOk);
  CHECK(testing::read_file(f.dir / "e/report.txt").find("assignment = shuffled") != std::string::npos);

  const PreparedCorpus fixed = prepare_corpus(testing::tiny_config());
  const PreparedCorpus shuffled = prepare_corpus(saved);
  CHECK(shuffled.assignment.context_of != fixed.assignment.context_of);
}

TEST_CASE("eval writes a full, reproducible report") {
  CliFixture f;
  REQUIRE(cli({"train", "--config", f.config, "--out", f.out("t"), "--set", "train.max_steps=3"}).code == 0);
  CliRun a = cli({"eval", "--checkpoint", f.out("t/checkpoint.bin"), "--out", f.out("e1")});
  CliRun b = cli({"eval", "--checkpoint", f.out("t/checkpoint.bin"), "--out", f.out("e2")});
  REQUIRE(a.code == kExitOk);
  REQUIRE(b.code == kExitOk);
  const std::string report = testing::read_file(f.dir / "e1/report.txt");
  CHECK(report == testing::read_file(f.dir / "e2/report.txt"));
  CHECK(std::regex_search(report, std::regex("checkpoint = [0-9a-f]{16}")));

  std::size_t ooo = 0, sparsity_lines = 0;
  std::istringstream in(report);
  std::string line, section;
  while (std::getline(in, line)) {
    if (line.starts_with("[")) section = line;
    else if (section == "[ooo]" && !line.empty()) ++ooo;
    else if (section == "[sparsity]" && !line.empty()) ++sparsity_lines;
  }
  CHECK(ooo == 15);
  CHECK(sparsity_lines == 5);
  CHECK(std::filesystem::exists(f.dir / "e1/ooo_bars.bmp"));
  CHECK(std::filesystem::exists(f.dir / "e1/scatter_SSLTT2.bmp"));
  CHECK(std::filesystem::exists(f.dir / "e1/projection_VLA2.csv"));
  CHECK(a.out == b.out);
}

TEST_CASE("report re-plots an existing evaluation") {
  CliFixture f;
  REQUIRE(cli({"train", "--config", f.config, "--out", f.out("t"), "--set", "train.max_steps=2"}).code == 0);
  CliRun e = cli({"eval", "--checkpoint", f.out("t/checkpoint.bin"), "--out", f.out("e")});
  REQUIRE(e.code == kExitOk);
  std::filesystem::remove(f.dir / "e/ooo_bars.bmp");
  CliRun r = cli({"report", "--out", f.out("e")});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out == e.out);
  CHECK(std::filesystem::exists(f.dir / "e/ooo_bars.bmp"));
  CHECK(cli({"report", "--out", f.out("nothing")}).code == kExitIntegrity);
}

TEST_CASE("sweep runs one model per p_c and tabulates context accuracy") {
  CliFixture f;
  CliRun r = cli({"sweep", "--config", f.config, "--out", f.out("sw"), "--pc-list", "0.1,0.5,1.0"});
  REQUIRE(r.code == kExitOk);
  for (const char* d : {"pc_0.1", "pc_0.5", "pc_1"}) CHECK(std::filesystem::exists(f.dir / "sw" / d / "report.txt"));
  const std::string table = testing::read_file(f.dir / "sw/sweep.csv");
  CHECK(count_lines(table) == 4);
  CHECK(table.starts_with("p_c,Representations,SSLTT1,SSLTT2,VLA1,VLA2\n0.1,"));
  CHECK(std::filesystem::exists(f.dir / "sw/sweep_context_ooo.bmp"));
  CHECK(std::filesystem::exists(f.dir / "sw/config.cfg"));
}

TEST_CASE("a failing sweep entry is recorded and the sweep continues") {
  CliFixture f;
  CliRun r = cli({"sweep", "--config", f.config, "--out", f.out("sw"), "--pc-list", "1.5,0.1"});
  CHECK(r.code == kExitConfig);
  const std::string table = testing::read_file(f.dir / "sw/sweep.csv");
  CHECK(table.find("1.5,failed,failed,failed,failed,failed") != std::string::npos);
  CHECK(std::filesystem::exists(f.dir / "sw/pc_0.1/report.txt"));
  CHECK(r.err.find("p_c=1.5 failed") != std::string::npos);
}

TEST_CASE("exit codes distinguish config, integrity and numerical failures") {
  CliFixture f;
  testing::write_file(f.dir / "bad.cfg", "train.nonsense = 3\n");
  CHECK(cli({"train", "--config", (f.dir / "bad.cfg").string(), "--out", f.out("a")}).code == kExitConfig);
  CHECK(cli({"train", "--config", f.out("missing.cfg"), "--out", f.out("b")}).code == kExitConfig);
  CHECK(cli({"train", "--loss", "simclr", "--out", f.out("c")}).code == kExitConfig);
  CHECK(cli({"seqgen", "--config", f.config, "--corpus", f.out("no_corpus"), "--out", f.out("d")}).code ==
        kExitIntegrity);
  CHECK(cli({"eval", "--checkpoint", f.out("no.bin"), "--out", f.out("e")}).code == kExitIntegrity);
  CHECK(cli({}).code == kExitConfig);

  // A checkpoint with a non-finite weight makes the first resumed step fail.
  REQUIRE(cli({"train", "--config", f.config, "--out", f.out("t"), "--set", "train.max_steps=1"}).code == 0);
  Checkpoint ck = load_checkpoint(f.dir / "t/checkpoint.bin");
  for (auto& [name, m] : ck.arrays)
    if (name.starts_with("f.") && !name.ends_with(".adam_m") && !name.ends_with(".adam_v")) {
      m(0, 0) = std::nan("");
      break;
    }
  save_checkpoint(f.dir / "nan.bin", ck);
  CliRun nan_run = cli({"train", "--resume", f.out("nan.bin"), "--out", f.out("t"), "--set", "train.max_steps=3"});
  CHECK(nan_run.code == kExitNumerical);
  CHECK(std::filesystem::exists(f.dir / "t/checkpoint_last_good.bin"));
}

TEST_CASE("resume continues a run in place") {
  CliFixture f;
  REQUIRE(cli({"train", "--config", f.config, "--out", f.out("t"), "--set", "train.max_steps=2"}).code == 0);
  CliRun r = cli({"train", "--resume", f.out("t/checkpoint.bin"), "--out", f.out("t"), "--set", "train.max_steps=4"});
  REQUIRE(r.code == kExitOk);
  CHECK(load_checkpoint(f.dir / "t/checkpoint.bin").step == 4);
  CHECK(count_lines(testing::read_file(f.dir / "t/train_log.csv")) == 5);

  REQUIRE(cli({"train", "--config", f.config, "--out", f.out("u"), "--set", "train.max_steps=4"}).code == 0);
  CHECK(load_checkpoint(f.dir / "t/checkpoint.bin").arrays == load_checkpoint(f.dir / "u/checkpoint.bin").arrays);

  CliRun mismatch = cli({"train", "--resume", f.out("t/checkpoint.bin"), "--out", f.out("t"), "--set",
                         "train.batch_size=6"});
  CHECK(mismatch.code == kExitConfig);
  CHECK(mismatch.err.find("batch_size") != std::string::npos);
}

TEST_CASE("the installed binary reports usage and errors through its exit status") {
  const std::string bin = SLOWSEM_CLI_PATH;
  const int help = std::system((bin + " --help > /dev/null").c_str());
  CHECK(WEXITSTATUS(help) == 0);
  const int bad = std::system((bin + " train --config /nonexistent/x.cfg --out /tmp/slowsem_unused 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(bad) == kExitConfig);
}
