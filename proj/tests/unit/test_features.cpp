#include <cmath>
#include <random>

#include "doctest.h"
#include "pregate/error.hpp"
#include "pregate/features.hpp"
#include "support.hpp"

using namespace pregate;
using namespace testing_support;

TEST_SUITE("features") {

TEST_CASE("ratio formulas") {
  CHECK(typing_efficiency(300, 60) == doctest::Approx(5.0));
  CHECK(typing_efficiency(0, 0) == 0.0);
  CHECK(typing_efficiency(1, 0) == doctest::Approx(1e6));
  CHECK(pause_frequency(6, 60) == doctest::Approx(0.1));
  CHECK(pause_frequency(0, 60) == 0.0);
  CHECK(pause_frequency(3, 0) == doctest::Approx(3e6));
  CHECK(acceptance_ratio(0, 0) == 0.0);
  CHECK(acceptance_ratio(426, 1892) == doctest::Approx(426.0 / 2318.0).epsilon(1e-9));
  CHECK(acceptance_ratio(426, 1892) == doctest::Approx(0.1838).epsilon(1e-3));
  CHECK(acceptance_ratio(5, 5) == doctest::Approx(0.5));
  CHECK(edit_density(10, 100) == doctest::Approx(0.1));
  CHECK(edit_density(0, 500) == 0.0);
  CHECK(edit_density(7, 0) == doctest::Approx(7e6));
}

TEST_CASE("canonical order has 21 unique names") {
  const auto names = canonical_feature_names();
  CHECK(names.size() == 21);
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(feature_index(names[i]) == i);
  CHECK_THROWS_AS(feature_index("keystroke_text"), Error);
}

TEST_CASE("fresh session is stale with zero window fields") {
  SessionState s("a");
  const auto fv = build_feature_vector(s, 0.4, 1'000);
  CHECK(fv.context_stale);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[i] == "task_complexity") CHECK(fv.values[i] == 0.4);
    else CHECK(fv.values[i] == 0.0);
  }
}

TEST_CASE("one closed window is joined verbatim") {
  SessionState s("a");
  ingest_event(s, typing("a", 1'000, 300, 30'000));
  ingest_event(s, make_event("a", 2'000, EventKind::Pause));
  EventPayload nav;
  nav.open_files = 4;
  nav.file_lines = 200;
  ingest_event(s, make_event("a", 3'000, EventKind::FileNav, nav));
  EventPayload edit;
  edit.lines_added = 20;
  ingest_event(s, make_event("a", 4'000, EventKind::EditApplied, edit));
  EventPayload diag;
  diag.warnings = 3;
  diag.errors = 2;
  diag.breakpoints = 1;
  ingest_event(s, make_event("a", 5'000, EventKind::Diagnostic, diag));
  EventPayload cmd;
  for (auto c : {Command::Undo, Command::QuickFix, Command::TerminalToggle, Command::Copy, Command::Paste}) {
    cmd.command = c;
    ingest_event(s, make_event("a", 6'000, EventKind::CommandUse, cmd));
  }
  ingest_event(s, typing("a", 70'000, 5, 1'000));  // closes [0, 60s)
  const auto fv = build_feature_vector(s, 0.2, 70'000);
  CHECK_FALSE(fv.context_stale);
  CHECK(fv["typing_speed"] == doctest::Approx(10.0));
  CHECK(fv["typing_efficiency"] == doctest::Approx(10.0));
  CHECK(fv["pause_count"] == 1.0);
  CHECK(fv["pause_frequency"] == doctest::Approx(1.0 / 30.0));
  CHECK(fv["lines_added"] == 20.0);
  CHECK(fv["file_size"] == 200.0);
  CHECK(fv["edit_density"] == doctest::Approx(0.1));
  CHECK(fv["open_files"] == 4.0);
  CHECK(fv["undo_count"] == 1.0);
  CHECK(fv["quick_fix_count"] == 1.0);
  CHECK(fv["terminal_toggles"] == 1.0);
  CHECK(fv["palette_actions"] == 2.0);
  CHECK(fv["warnings"] == 3.0);
  CHECK(fv["errors"] == 2.0);
  CHECK(fv["breakpoints"] == 1.0);
  CHECK(fv["total_chars_typed"] == 305.0);
  CHECK(fv["total_typing_duration"] == doctest::Approx(31.0));
}

TEST_CASE("a window from three minutes ago is stale") {
  SessionState s("a");
  ingest_event(s, typing("a", 1'000, 50, 10'000));
  const auto fv = build_feature_vector(s, 0.0, 240'000);
  CHECK(fv.context_stale);
  CHECK(fv["typing_efficiency"] == 0.0);
  CHECK(fv["total_chars_typed"] == 50.0);  // session scope survives
}

TEST_CASE("an open window that has already ended counts as closed") {
  SessionState s("a");
  ingest_event(s, typing("a", 1'000, 60, 6'000));
  const auto fv = build_feature_vector(s, 0.0, 65'000);
  CHECK_FALSE(fv.context_stale);
  CHECK(fv["typing_efficiency"] == doctest::Approx(10.0));
}

TEST_CASE("feature vectors are finite, non-negative and deterministic") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    SessionState s("p");
    TimestampMs t = 0;
    for (int i = 0; i < 80; ++i) {
      t += std::uniform_int_distribution<TimestampMs>(0, 9'000)(rng);
      ingest_event(s, random_event(rng, "p", t));
      const auto a = build_feature_vector(s, 0.5, t);
      const auto b = build_feature_vector(s, 0.5, t);
      CHECK(a == b);
      for (double v : a.values) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
      }
      CHECK(a["acceptance_ratio"] < 1.0);
    }
  }
}

TEST_CASE("acceptance_ratio strictly increases with accepts at fixed rejects") {
  for (int rej = 1; rej < 20; ++rej) {
    for (int acc = 0; acc < 50; ++acc) CHECK(acceptance_ratio(acc + 1, rej) > acceptance_ratio(acc, rej));
  }
}

TEST_CASE("ratios are insensitive to tiny epsilon perturbations") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> num(0, 1000), den(1, 1000);
  for (int i = 0; i < 1000; ++i) {
    const double a = num(rng), b = den(rng);
    const double eps = kRatioEpsilon + 1e-10;
    CHECK(typing_efficiency(a, b, eps) == doctest::Approx(typing_efficiency(a, b)).epsilon(1e-6));
    CHECK(pause_frequency(a, b, eps) == doctest::Approx(pause_frequency(a, b)).epsilon(1e-6));
    CHECK(acceptance_ratio(a, b, eps) == doctest::Approx(acceptance_ratio(a, b)).epsilon(1e-6));
    CHECK(edit_density(a, b, eps) == doctest::Approx(edit_density(a, b)).epsilon(1e-6));
  }
}

}  // TEST_SUITE
