#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

#ifndef PREGATE_CLI
#error "PREGATE_CLI must point at the pregate executable"
#endif

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PREGATE_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::filesystem::path scratch() {
  auto d = std::filesystem::temp_directory_path() / "pregate_cli_test";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("stats on the deployment counts") {
  const auto r = run("stats --k1 427 --n1 2319 --k2 486 --n2 1422 --format json");
  REQUIRE(r.status == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["delta_pp"].get<double>() == doctest::Approx(15.77).epsilon(0.001));
  const auto csv = run("stats --k1 427 --n1 2319 --k2 486 --n2 1422 --format csv");
  CHECK(csv.status == 0);
  CHECK(csv.out.find("after,486,1422,34.2,31.8,36.7") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(run("stats --k1 9 --n1 5 --k2 1 --n2 5").status == 2);
  CHECK(run("stats --k1 1 --n1 5 --k2 1 --n2 5 --format xml").status == 2);
  CHECK(run("no-such-command").status == 2);
  CHECK(run("replay --events /nonexistent/events.jsonl --model /nonexistent/m.json").status == 3);
  CHECK(run("compare --before-counts 10,11,0 --after-counts 10,0,3").status == 2);
  CHECK(run("compare --before-counts 2319,0,427 --after-counts 2190,768,486").status == 0);
}

TEST_CASE("synth, train, replay and compare end to end") {
  const auto d = scratch();
  const auto ev = (d / "events.jsonl").string();
  const auto recs = (d / "records.jsonl").string();
  const auto model = (d / "model.json").string();
  const auto rep0 = (d / "before.json").string();
  const auto rep1 = (d / "after.json").string();
  REQUIRE(run("synth --records 600 --seed 4 --out " + ev).status == 0);
  REQUIRE(run("dataset --events " + ev + " --out " + recs).status == 0);
  REQUIRE(run("train --records " + recs + " --out " + model + " --seed 4").status == 0);
  const auto ev_eval = run("evaluate --model " + model + " --records " + recs + " --format json");
  REQUIRE(ev_eval.status == 0);
  CHECK(nlohmann::json::parse(ev_eval.out).contains("roc_auc"));
  REQUIRE(run("replay --events " + ev + " --model " + model + " --tau 0 --out " + rep0).status == 0);
  REQUIRE(run("replay --events " + ev + " --model " + model + " --out " + rep1).status == 0);
  const auto cmp = run("compare --before " + rep0 + " --after " + rep1 + " --format json");
  REQUIRE(cmp.status == 0);
  CHECK(nlohmann::json::parse(cmp.out).contains("statistics"));
  CHECK(run("replay --events " + ev + " --model " + model + " --tau 1.5").status == 2);
  std::ofstream(d / "broken.json") << "{ nope";
  CHECK(run("replay --events " + ev + " --model " + (d / "broken.json").string()).status == 2);
  std::filesystem::remove_all(d);
}

}  // TEST_SUITE
