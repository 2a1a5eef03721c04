#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "arrn/io.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace arrn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "arrn_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run run(const std::string& args) {
  const auto out = workdir() / "stdout.txt";
  const std::string cmd = "cd '" + workdir().string() + "' && '" ARRN_CLI_PATH "' " + args + " > '" + out.string() +
                          "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Field `k` of a CSV line.
std::string field(const std::string& line, std::size_t k) {
  std::stringstream in(line);
  std::string f;
  for (std::size_t i = 0; i <= k; ++i) std::getline(in, f, ',');
  return f;
}

constexpr const char* kSmallData = "--per-class 16 --test-per-class 16";

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help").code == 0);
  auto r = run("train --help");
  CHECK(r.code == 0);
  for (const char* flag : {"--levels", "--features", "--kernel", "--epochs", "--dropout", "--seed", "--out"}) {
    CHECK(r.out.find(flag) != std::string::npos);
  }
  CHECK(run("").code == 64);
  CHECK(run("verify-adaptation --bogus").code == 64);
  CHECK(run("verify-adaptation --kernel box").code == 64);
}

TEST_CASE("decompose then reconstruct round trip") {
  std::mt19937_64 rng(3);
  save_arsg(workdir() / "s.arsg", oracle::white_noise(rng, GridSpec::line(64), 1), Dtype::F64);
  REQUIRE(run("decompose --input s.arsg --levels 64,32,16 --out pyr").code == 0);
  for (const char* f : {"diff_1.arsg", "diff_2.arsg", "low.arsg", "manifest.json"}) CHECK(fs::exists(workdir() / "pyr" / f));
  for (int level : {0, 1, 2}) {
    auto r = run("reconstruct --dir pyr --level " + std::to_string(level) + " --reference s.arsg --tol 1e-10");
    CHECK(r.code == 0);
    const auto pos = r.out.find("max_abs_error ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(r.out.substr(pos + 14)) <= 1e-10);
  }
  CHECK(run("reconstruct --dir pyr --level 1 --out low1.arsg").code == 0);
  CHECK(load_arsg(workdir() / "low1.arsg").grid() == GridSpec::line(32));
  CHECK(run("reconstruct --dir pyr --level 5").code == 64);
  CHECK(run("reconstruct --dir nowhere --level 1").code == 2);
}

TEST_CASE("constant input gives zero difference bands") {
  save_arsg(workdir() / "c.arsg", DiscreteSignal(GridSpec::line(64), 1, std::vector<double>(64, 1.75)), Dtype::F64);
  REQUIRE(run("decompose --input c.arsg --levels 64,32,16 --kernel gaussian --out pc").code == 0);
  for (const char* f : {"diff_1.arsg", "diff_2.arsg"}) {
    auto d = load_arsg(workdir() / "pc" / f);
    CHECK(oracle::max_abs(d.values()) <= 1e-12);
  }
}

TEST_CASE("decompose error exit codes") {
  {
    std::ofstream bad(workdir() / "bad.arsg", std::ios::binary);
    bad << "NOPE1\n" << std::string(24, '\0');
  }
  auto r = run("decompose --input bad.arsg --levels 64,32,16 --out pb");
  CHECK(r.code == 2);
  CHECK(r.out.find("magic") != std::string::npos);
  save_arsg(workdir() / "s48.arsg", DiscreteSignal(GridSpec::line(48), 1), Dtype::F64);
  CHECK(run("decompose --input s48.arsg --levels 64,32,16 --out pb").code == 3);
}

TEST_CASE("verify-adaptation examples") {
  auto ok = run("verify-adaptation --levels 64,32,16 --kernel perfect --dtype f64 --tol 1e-9 --trials 20");
  CHECK(ok.code == 0);
  auto bad = run("verify-adaptation --levels 64,32,16 --kernel gaussian --dtype f64 --tol 1e-9 --trials 3");
  CHECK(bad.code == 1);
  CHECK(lines(bad.out).size() >= 3);
  CHECK(run("verify-adaptation --levels 64 --trials 1").code == 64);
  CHECK(run("verify-adaptation --levels 8x8,4x4,2x2 --dtype f32 --tol 1e-4 --trials 3").code == 0);
}

TEST_CASE("train, eval and bench") {
  const std::string common = std::string(kSmallData) + " --epochs 2 --batch 16 --seed 5";
  REQUIRE(run("train " + common + " --out a.arnn --loss-csv loss.csv").code == 0);
  REQUIRE(run("train " + common + " --out b.arnn").code == 0);
  CHECK(slurp(workdir() / "a.arnn") == slurp(workdir() / "b.arnn"));
  auto loss = lines(slurp(workdir() / "loss.csv"));
  REQUIRE(loss.size() == 3);
  CHECK(loss[0] == "epoch,lr,loss");

  REQUIRE(run("eval --checkpoint a.arnn " + std::string(kSmallData) + " --out sweep.csv --svg sweep.svg").code == 0);
  auto rows = lines(slurp(workdir() / "sweep.csv"));
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "resolution,mode,kernel,dropout,accuracy,macs,wall_ms");
  CHECK(field(rows[1], 0) == "64");
  CHECK(field(rows[4], 0) == "64");
  CHECK(field(rows[1], 1) == "full");
  CHECK(field(rows[4], 1) == "adapted");
  CHECK(field(rows[1], 4) == field(rows[4], 4));
  CHECK(slurp(workdir() / "sweep.svg").find("<svg") != std::string::npos);
  REQUIRE(run("eval --checkpoint a.arnn " + std::string(kSmallData) + " --out sweep2.csv").code == 0);
  CHECK(slurp(workdir() / "sweep.csv") == slurp(workdir() / "sweep2.csv"));

  auto bench = run("bench --checkpoint a.arnn --no-timing");
  REQUIRE(bench.code == 0);
  auto b = lines(bench.out);
  REQUIRE(b.size() == 7);
  const auto coarse_adapted = std::stoull(field(b[6], 3));
  for (std::size_t i = 1; i < b.size(); ++i) CHECK(std::stoull(field(b[i], 3)) >= coarse_adapted);
  CHECK(std::stoull(field(b[5], 3)) > coarse_adapted);

  CHECK(run("eval --checkpoint s.arsg").code == 2);
  CHECK(run("eval --checkpoint a.arnn --resolutions 128 " + std::string(kSmallData)).code == 3);
}

TEST_CASE("a diverging run exits with the numeric failure code") {
  auto r = run(std::string("train ") + kSmallData + " --epochs 4 --batch 8 --lr 1e30 --min-lr 1e30 --weight-decay 0 --out x.arnn");
  CHECK(r.code == 4);
  CHECK_FALSE(fs::exists(workdir() / "x.arnn"));
}

TEST_CASE("ablate writes the table and the ratios") {
  auto r = run("ablate --per-class 8 --test-per-class 8 --epochs 1 --batch 16 --table t.csv --ratios r.csv");
  REQUIRE(r.code == 0);
  CHECK(lines(slurp(workdir() / "t.csv")).size() == 13);
  CHECK(lines(slurp(workdir() / "r.csv")).size() == 22);
}
