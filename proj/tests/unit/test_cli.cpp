#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "app.hpp"
#include "config.hpp"

using namespace fiberlay::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int quiet_run(std::vector<std::string> args) {
  std::ostringstream sink;
  auto* out = std::cout.rdbuf(sink.rdbuf());
  auto* err = std::cerr.rdbuf(sink.rdbuf());
  args.insert(args.begin(), "fiberlay");
  const int rc = run(args);
  std::cout.rdbuf(out);
  std::cerr.rdbuf(err);
  return rc;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fiberlay_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config sections, comments and overrides") {
  std::istringstream in(
      "seed = 7  # trailing\n"
      "[potential]\nname = quadratic\nscale = 1.50\n"
      "[sde]\ndt=0.001\n");
  auto c = Config::parse(in);
  CHECK(c.count("seed", 0) == 7);
  CHECK(c.str("potential.name") == "quadratic");
  CHECK(c.num("potential.scale") == 1.5);
  CHECK(c.num("sde.dt") == 1e-3);
  c.set_assignment("sde.dt=2e-3");
  CHECK(c.num("sde.dt") == 2e-3);
  CHECK(c.num("sde.sigma", 1.0) == 1.0);
  CHECK(c.effective().at("sde.sigma") == "1");
}

TEST_CASE("canonical form ignores number spelling and key order") {
  std::istringstream a("[sde]\ndt = 0.0010\nsigma = 1\n");
  std::istringstream b("[sde]\nsigma = 1.0\ndt = 1e-3\n");
  const auto ca = Config::parse(a), cb = Config::parse(b);
  CHECK(ca.canonical() == cb.canonical());
  CHECK(ca.hash("x") == cb.hash("x"));
  CHECK(ca.hash("x") != ca.hash("y"));
  CHECK(ca.hash().size() == 64);
}

TEST_CASE("malformed config is a config error") {
  std::istringstream bad("[sde\n");
  CHECK_THROWS(Config::parse(bad));
  Config c;
  CHECK_THROWS(c.set_assignment("novalue"));
  c.set("sde.dt", "fast");
  CHECK_THROWS(c.num("sde.dt"));
}

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("missing potential name exits 2 and names the field") {
  const auto out = scratch("missing");
  std::ostringstream err;
  auto* old = std::cerr.rdbuf(err.rdbuf());
  const int rc = run({"fiberlay", "simulate", "--out", out.string()});
  std::cerr.rdbuf(old);
  CHECK(rc == kExitConfig);
  CHECK(err.str().find("potential.name") != std::string::npos);
}

TEST_CASE("unknown subcommand and flags exit 2") {
  CHECK(quiet_run({"nonsense"}) == kExitConfig);
  CHECK(quiet_run({"simulate", "--bogus"}) == kExitConfig);
}

TEST_CASE("precondition failure exits 3") {
  const auto out = scratch("pre");
  CHECK(quiet_run({"passage", "--out", out.string(), "--set", "potential.name=smoothed_norm",
                   "--set", "passage.R=1.1", "--set", "passage.n=10"}) == kExitPrecondition);
}

TEST_CASE("simulate twice gives identical bytes") {
  const auto a = scratch("sim_a"), b = scratch("sim_b");
  const std::vector<std::string> common{"--set", "potential.name=zero", "--set", "sde.t_max=1",
                                        "--set", "seed=42"};
  auto args_a = common, args_b = common;
  args_a.insert(args_a.begin(), {"simulate", "--out", a.string()});
  args_b.insert(args_b.begin(), {"simulate", "--out", b.string()});
  REQUIRE(quiet_run(args_a) == 0);
  REQUIRE(quiet_run(args_b) == 0);
  const auto ta = slurp(a / "trajectory.csv");
  CHECK(ta.rfind("t,xi1,xi2,alpha\n", 0) == 0);
  CHECK(ta == slurp(b / "trajectory.csv"));
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  const auto summary = slurp(a / "summary.json");
  CHECK(summary.find("\"config_hash\"") != std::string::npos);
  CHECK(summary.find("\"wall_time_s\"") != std::string::npos);
}

TEST_CASE("config file and flag override") {
  const auto dir = scratch("cfgfile");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "run.cfg");
    f << "seed = 3\n[potential]\nname = zero\n[sde]\nt_max = 5\n";
  }
  REQUIRE(quiet_run({"simulate", "--config", (dir / "run.cfg").string(), "--set", "sde.t_max=0.5",
                     "--out", (dir / "out").string()}) == 0);
  const auto summary = slurp(dir / "out" / "summary.json");
  CHECK(summary.find("\"sde.t_max\": \"0.5\"") != std::string::npos);
}

TEST_CASE("eigen with c = 0 on (0, pi) reports one half") {
  const auto out = scratch("eigen");
  REQUIRE(quiet_run({"eigen", "--out", out.string(), "--set", "eigen.c=0", "--set", "eigen.a=0",
                     "--set", "eigen.b=3.141592653589793"}) == 0);
  std::ifstream in(out / "summary.json");
  const auto text = slurp(out / "summary.json");
  const auto at = text.find("\"lambda_fd\": ");
  REQUIRE(at != std::string::npos);
  const double v = std::stod(text.substr(at + 13));
  CHECK(v == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("assert mode turns a failed check into exit 4") {
  const auto out = scratch("assert");
  CHECK(quiet_run({"reach", "--assert", "--out", out.string(), "--set", "reach.eps=1e-12"}) ==
        kExitAssert);
  CHECK(quiet_run({"reach", "--assert", "--out", out.string()}) == 0);
}
