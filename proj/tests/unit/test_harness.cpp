#include <map>
#include <sstream>

#include "doctest.h"
#include "pregate/dataset.hpp"
#include "pregate/error.hpp"
#include "pregate/harness.hpp"

using namespace pregate;

namespace {

struct Fixture {
  SynthConfig config;
  SynthOutput data;
  std::vector<SuggestionRecord> records;
  AcceptanceModel model;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    out.config = SynthConfig::defaults();
    out.config.target_records = 2000;
    out.config.seed = 11;
    out.data = synth_sessions(out.config);
    out.records = build_records(out.data.events);
    const auto d = to_labeled(out.records);
    out.model = train_logistic(d, canonical_feature_names(), class_weights(d.y), {}).model;
    return out;
  }();
  return f;
}

std::string events_text(const SynthOutput& o) {
  std::ostringstream os;
  write_events_jsonl(os, o.events);
  return os.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("synthetic sessions are byte-identical for a fixed seed") {
  auto c = SynthConfig::defaults();
  c.n_sessions = 12;
  c.seed = 5;
  const auto a = synth_sessions(c);
  const auto b = synth_sessions(c);
  CHECK(events_text(a) == events_text(b));
  CHECK(a.intercept == b.intercept);
  c.seed = 6;
  CHECK(events_text(synth_sessions(c)) != events_text(a));
}

TEST_CASE("config validation and JSON round trip") {
  auto c = SynthConfig::defaults();
  CHECK_NOTHROW(c.validate());
  const auto back = synth_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  c.transition[0] = {0.7, 0.7};
  CHECK_THROWS_AS(c.validate(), Error);
  c = SynthConfig::defaults();
  c.base_rate = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("Flow requests show higher typing efficiency than Exploratory") {
  const auto& f = fixture();
  std::map<std::pair<std::string, std::int64_t>, LatentState> state;
  for (const auto& g : f.data.truth) state[{g.session_id, g.suggestion_id}] = g.state;
  double sum[2] = {0, 0}, n[2] = {0, 0};
  for (const auto& r : f.records) {
    const auto k = static_cast<int>(state.at({r.session_id, r.suggestion_id}));
    sum[k] += r.x["typing_efficiency"];
    n[k] += 1;
  }
  REQUIRE(n[0] > 50);
  REQUIRE(n[1] > 50);
  CHECK(sum[0] / n[0] > sum[1] / n[1]);
}

TEST_CASE("empirical acceptance rate tracks the configured base rate") {
  auto c = SynthConfig::defaults();
  c.target_records = 5000;
  c.seed = 21;
  const auto out = synth_sessions(c);
  double acc = 0;
  for (const auto& g : out.truth) acc += g.accepted;
  const double rate = acc / static_cast<double>(out.truth.size());
  CHECK(out.truth.size() >= 5000);
  CHECK(std::abs(rate - c.base_rate) <= 0.02);
  const auto recs = build_records(out.events);
  CHECK(recs.size() == out.truth.size());
}

TEST_CASE("report counting conventions") {
  const auto& f = fixture();
  const auto none = replay(f.data.events, f.model, 0.0);
  CHECK(none.suppressed == 0);
  CHECK(none.issued == none.total_requests);
  const auto all = replay(f.data.events, f.model, 1.0);
  CHECK(all.issued == 0);
  CHECK_FALSE(all.acceptance_rate().has_value());
  CHECK(to_json(all)["acceptance_rate"].is_null());
  for (double tau : {0.05, 0.2, 0.4, 0.6}) {
    const auto r = replay(f.data.events, f.model, tau);
    CHECK(r.total_requests == r.suppressed + r.issued);
    CHECK(r.accepted_of_issued <= r.issued);
    CHECK(r.total_requests == static_cast<std::int64_t>(f.data.truth.size()));
    CHECK(static_cast<std::int64_t>(r.timeline.size()) == r.total_requests);
  }
}

TEST_CASE("parallel replay equals the serial reference") {
  const auto& f = fixture();
  for (double tau : {0.1, 0.3}) {
    const auto a = replay(f.data.events, f.model, tau);
    const auto b = replay_serial(f.data.events, f.model, tau);
    CHECK(to_json(a, true) == to_json(b, true));
  }
}

TEST_CASE("replayed probabilities match the offline model on the same records") {
  const auto& f = fixture();
  const auto r = replay_serial(f.data.events, f.model, 0.2);
  std::map<std::pair<std::string, std::int64_t>, double> offline;
  for (const auto& rec : f.records) offline[{rec.session_id, rec.suggestion_id}] = f.model.predict_proba(rec.x.values);
  for (const auto& e : r.timeline) CHECK(e.p_accept == offline.at({e.session_id, e.suggestion_id}));
}

TEST_CASE("a threshold near one third suppression raises acceptance of issued suggestions") {
  const auto& f = fixture();
  const double baseline = *replay(f.data.events, f.model, 0.0).acceptance_rate();
  bool found = false;
  for (int k = 1; k < 100 && !found; ++k) {
    const auto r = replay(f.data.events, f.model, k / 100.0);
    if (r.suppression_rate() >= 0.30 && r.suppression_rate() <= 0.40) {
      found = true;
      CHECK(*r.acceptance_rate() > baseline);
    }
  }
  CHECK(found);
}

TEST_CASE("compare on the deployment counts") {
  const auto before = SimulationReport::from_counts(2319, 0, 427);
  const auto after = SimulationReport::from_counts(2190, 768, 486);
  const auto b = compare(before, after);
  CHECK(b.suppression_after == doctest::Approx(768.0 / 2190.0));
  CHECK(b.stats.delta_pp == doctest::Approx(15.77).epsilon(0.001));
  CHECK(b.stats.table.n2 == 1422);
  std::ostringstream os;
  write_csv(os, b);
  CHECK(os.str().find("after,486,1422,34.2,31.8,36.7") != std::string::npos);
  CHECK_THROWS_AS(SimulationReport::from_counts(10, 11, 0), Error);
}

TEST_CASE("compare symmetry and degenerate reports") {
  const auto& f = fixture();
  const auto r = replay(f.data.events, f.model, 0.2);
  const auto same = compare(r, r);
  CHECK(same.stats.delta_pp == 0.0);
  CHECK(same.stats.fisher.value() == doctest::Approx(1.0));
  CHECK(same.stats.z.p.value() == doctest::Approx(1.0));
  const auto base = replay(f.data.events, f.model, 0.0);
  const auto fwd = compare(base, r);
  const auto rev = compare(r, base);
  CHECK(fwd.stats.delta_pp == doctest::Approx(-rev.stats.delta_pp));
  CHECK(fwd.stats.fisher.log_p == doctest::Approx(rev.stats.fisher.log_p));
  const auto empty = replay(f.data.events, f.model, 1.0);
  try {
    compare(base, empty);
    FAIL("expected DegenerateReport");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateReport);
  }
}

TEST_CASE("report JSON round trip and CSV quoting") {
  const auto& f = fixture();
  const auto r = replay(f.data.events, f.model, 0.2);
  const auto back = simulation_report_from_json(to_json(r, true));
  CHECK(to_json(back, true) == to_json(r, true));
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("two\nlines") == "\"two\nlines\"");

  SimulationReport odd;
  TimelineEntry e;
  e.session_id = "x,\"y\"";
  e.suggestion_id = 3;
  odd.timeline.push_back(e);
  std::ostringstream os;
  write_timeline_csv(os, odd);
  CHECK(os.str().rfind("timestamp,session_id,suggestion_id,p_accept,decision,reason\n", 0) == 0);
  CHECK(os.str().find("\"x,\"\"y\"\"\"") != std::string::npos);
}

}  // TEST_SUITE
