#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(DNA_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), int(buf.size()), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "dna_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    std::ofstream(d / "tiny.ini") << "[run]\nvariant = DNA\nseed = 3\noutput = run\n"
                                     "[net]\nheight = 64\nwidth = 64\ntiny_divisor = 16\n"
                                     "side_channels = 8,8,8,8,8\ntop_channels_1 = 16\ntop_channels_2 = 8\n"
                                     "dna_side_channels = 4\ndna_mid_channels = 8\n"
                                     "[optim]\nmax_iter = 4\n"
                                     "[data]\ntrain_count = 3\ntest_count = 2\n"
                                     "[scene]\nheight = 64\nwidth = 64\n";
    return d;
  }();
  return dir;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("verify-theory passes and writes its plot CSV") {
  const fs::path csv = workdir() / "roc.csv";
  const Run r = run("verify-theory --plot-csv " + q(csv));
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("all suites passed") != std::string::npos);
  CHECK(slurp(csv).rfind("curve,fpr,tpr\n", 0) == 0);
}

TEST_CASE("flops prints the 3.50 ratio for equal channels") {
  const Run r = run("flops --config " + q(workdir() / "tiny.ini"));
  CHECK(r.code == 0);
  CHECK(r.out.find("ratio 3.50") != std::string::npos);
  CHECK(r.out.find("dna.asym1.row") != std::string::npos);
}

TEST_CASE("synth, train, predict and eval chain together") {
  const fs::path d = workdir();
  REQUIRE(run("synth --config " + q(d / "tiny.ini") + " --out " + q(d / "data")).code == 0);
  CHECK(fs::exists(d / "data" / "spec.ini"));

  const Run t = run("train --config " + q(d / "tiny.ini") + " --out " + q(d / "run"));
  REQUIRE(t.code == 0);
  CHECK(fs::exists(d / "run" / "checkpoint.bin"));
  CHECK(slurp(d / "run" / "config.ini") == slurp(d / "tiny.ini"));
  CHECK(slurp(d / "run" / "loss.csv").find('\n') != std::string::npos);

  const Run p = run("predict --config " + q(d / "tiny.ini") + " --checkpoint " + q(d / "run" / "checkpoint.bin") +
                    " --manifest " + q(d / "data" / "test.txt") + " --out " + q(d / "pred"));
  REQUIRE(p.code == 0);
  const Run e = run("eval --manifest " + q(d / "pred" / "predictions.txt") + " --out " + q(d / "report.csv") +
                    " --plot-csv " + q(d / "curve.csv"));
  CHECK(e.code == 0);
  CHECK(slurp(d / "report.csv").rfind("max_fbeta,mae,wfbeta,auc,images\n", 0) == 0);
  CHECK(slurp(d / "curve.csv").rfind("threshold,precision,recall,fbeta\n", 0) == 0);

  // Training again with the same config reproduces the checkpoint.
  REQUIRE(run("train --config " + q(d / "tiny.ini") + " --out " + q(d / "run2")).code == 0);
  CHECK(slurp(d / "run" / "checkpoint.bin") == slurp(d / "run2" / "checkpoint.bin"));
  CHECK(slurp(d / "run" / "loss.csv") == slurp(d / "run2" / "loss.csv"));

  // A checkpoint from another variant is a config error.
  REQUIRE(run("train --config " + q(d / "tiny.ini") + " --out " + q(d / "run3") + " --variant ENC_DEC").code == 0);
  CHECK(run("predict --config " + q(d / "tiny.ini") + " --checkpoint " + q(d / "run3" / "checkpoint.bin") +
            " --manifest " + q(d / "data" / "test.txt") + " --out " + q(d / "pred3"))
            .code == 2);
}

TEST_CASE("ablate writes one row per variant") {
  const fs::path d = workdir();
  const Run r = run("ablate --config " + q(d / "tiny.ini") + " --out " + q(d / "abl") + " --variants DNA,ENC_DEC_LIN");
  REQUIRE(r.code == 0);
  const std::string csv = slurp(d / "abl" / "ablation.csv");
  CHECK(csv.rfind("variant,max_fbeta,mae,wfbeta,params,seconds\n", 0) == 0);
  CHECK(csv.find("\nDNA,") != std::string::npos);
  CHECK(csv.find("\nENC_DEC_LIN,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("error classes map to distinct exit codes") {
  const fs::path d = workdir();
  std::ofstream(d / "bad.ini") << "[run]\nvariant = NOPE\n";
  CHECK(run("train --config " + q(d / "bad.ini")).code == 2);
  CHECK(run("train --config " + q(d / "missing.ini")).code == 2);
  CHECK(run("eval --manifest " + q(d / "missing.txt")).code == 3);
  std::ofstream(d / "broken.txt") << "a.pgm\n";
  CHECK(run("eval --manifest " + q(d / "broken.txt")).code == 3);
  CHECK(run("no-such-command").code == 2);
}
