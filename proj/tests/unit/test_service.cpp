#include <map>
#include <sstream>
#include <thread>

#include "../common/line_client.hpp"
#include "doctest.h"
#include "pregate/dataset.hpp"
#include "pregate/error.hpp"
#include "pregate/service.hpp"
#include "support.hpp"

using namespace pregate;
using nlohmann::json;

namespace {

AcceptanceModel simple_model() {
  std::vector<double> w(kFeatureCount, 0.0);
  w[feature_index("typing_efficiency")] = -0.2;
  w[feature_index("pause_count")] = 0.4;
  w[feature_index("acceptance_ratio")] = 1.5;
  return AcceptanceModel(canonical_feature_names(), Standardizer::identity(kFeatureCount), LogisticParams{w, -1.0});
}

json event_msg(const TelemetryEvent& e) { return json{{"type", "event"}, {"event", event_to_json(e)}}; }

}  // namespace

TEST_SUITE("service") {

TEST_CASE("construction validates tau") {
  CHECK_THROWS_AS(GateEngine(simple_model(), 1.5), Error);
  CHECK_THROWS_AS(GateEngine(simple_model(), -0.1), Error);
}

TEST_CASE("ping, unknown types and malformed lines") {
  GateEngine g(simple_model(), 0.3);
  CHECK(json::parse(g.handle_line(R"({"type":"ping"})"))["ok"] == true);
  const auto bad = json::parse(g.handle_line("{not json"));
  CHECK(bad["ok"] == false);
  CHECK(bad["code"] == "InvalidFormat");
  CHECK(json::parse(g.handle_line(R"({"type":"warp"})"))["ok"] == false);
  CHECK(json::parse(g.handle_line(R"([1,2])"))["ok"] == false);
  CHECK(json::parse(g.handle_line(R"({"type":"decide"})"))["ok"] == false);
  CHECK(json::parse(g.handle_line(R"({"type":"ping"})"))["ok"] == true);
  CHECK(g.stats().malformed_lines == 1);
}

TEST_CASE("decide on a fresh session is context-stale and uses zero momentum") {
  GateEngine g(simple_model(), 0.3);
  const auto r = g.handle(json{{"type", "decide"}, {"session_id", "new"}, {"task_complexity", 0.4}});
  REQUIRE(r["ok"] == true);
  CHECK(r["context_stale"] == true);
  CHECK(r["p_accept"].get<double>() == doctest::Approx(1.0 / (1.0 + std::exp(1.0))));
  CHECK(r["decision"] == "suppress");
  CHECK(r["suggestion_id"].get<std::int64_t>() < 0);
  CHECK(g.handle(json{{"type", "decide"}, {"session_id", "x"}, {"task_complexity", 1.5}})["ok"] == false);
  const auto code = g.handle(json{{"type", "decide"}, {"session_id", "y"}, {"code", "int f(int a){ if(a) return 1; return 0; }"}, {"language", "c"}});
  CHECK(code["ok"] == true);
}

TEST_CASE("events change the decision for the same session") {
  using namespace testing_support;
  GateEngine g(simple_model(), 0.3);
  const auto before = g.handle(json{{"type", "decide"}, {"session_id", "a"}, {"timestamp", 1000}});
  for (int i = 0; i < 6; ++i) g.handle(event_msg(make_event("a", 2'000 + i * 3'000, EventKind::Pause)));
  g.handle(event_msg(typing("a", 61'000, 5, 1'000)));
  const auto after = g.handle(json{{"type", "decide"}, {"session_id", "a"}, {"timestamp", 61'500}});
  CHECK(after["context_stale"] == false);
  CHECK(after["p_accept"].get<double>() > before["p_accept"].get<double>());
}

TEST_CASE("outcomes feed momentum and the accepted-of-issued counter") {
  GateEngine g(simple_model(), 0.0);
  const auto d = g.handle(json{{"type", "decide"}, {"session_id", "m"}, {"timestamp", 100}, {"suggestion_id", 7}});
  CHECK(d["decision"] == "trigger");
  g.handle(json{{"type", "outcome"}, {"session_id", "m"}, {"accepted", true}, {"suggestion_id", 7}});
  auto st = g.stats();
  CHECK(st.total_requests == 1);
  CHECK(st.accepted_of_issued == 1);
  const auto e = g.handle(json{{"type", "decide"}, {"session_id", "m"}, {"timestamp", 200}});
  CHECK(e["p_accept"].get<double>() > d["p_accept"].get<double>());
  g.handle(json{{"type", "outcome"}, {"session_id", "m"}, {"accepted", false}});
  CHECK(g.stats().accepted_of_issued == 1);
  const auto s = g.handle(json{{"type", "stats"}});
  CHECK(s["total_requests"] == 2);
  CHECK(s["sessions"] == 1);
}

TEST_CASE("streamed telemetry gives the same decisions as offline replay") {
  auto c = SynthConfig::defaults();
  c.n_sessions = 10;
  c.seed = 3;
  const auto data = synth_sessions(c);
  const auto model = simple_model();
  const auto expected = replay_serial(data.events, model, 0.3);
  std::map<std::pair<std::string, std::int64_t>, std::pair<double, std::string>> by_id;
  for (const auto& e : expected.timeline) by_id[{e.session_id, e.suggestion_id}] = {e.p_accept, std::string(to_string(e.decision))};

  // Synthetic sessions sit a day apart, so sweeps would evict them mid-stream.
  GateEngine g(model, 0.3, ServiceConfig{3'600'000, 0});
  // Interleave sessions round-robin to exercise isolation.
  std::map<std::string, std::vector<const TelemetryEvent*>> per;
  for (const auto& e : data.events) per[e.session_id].push_back(&e);
  std::size_t pos = 0, matched = 0;
  bool any = true;
  while (any) {
    any = false;
    for (auto& [sid, evs] : per) {
      if (pos >= evs.size()) continue;
      any = true;
      const auto r = g.handle(event_msg(*evs[pos]));
      REQUIRE(r["ok"] == true);
      if (evs[pos]->kind == EventKind::SuggestionRequested) {
        const auto& want = by_id.at({sid, evs[pos]->payload.suggestion_id});
        CHECK(r["p_accept"].get<double>() == want.first);
        CHECK(r["decision"].get<std::string>() == want.second);
        ++matched;
      }
    }
    ++pos;
  }
  CHECK(matched == expected.timeline.size());
  const auto st = g.stats();
  CHECK(st.total_requests == expected.total_requests);
  CHECK(st.suppressed == expected.suppressed);
  CHECK(st.accepted_of_issued == expected.accepted_of_issued);
}

TEST_CASE("idle sessions are evicted on the logical clock") {
  using namespace testing_support;
  GateEngine g(simple_model(), 0.3, ServiceConfig{1'000, 0});
  g.handle(event_msg(make_event("a", 0, EventKind::Pause)));
  g.handle(event_msg(make_event("b", 5'000, EventKind::Pause)));
  CHECK(g.session_count() == 2);
  CHECK(g.evict_idle() == 1);
  CHECK(g.session_count() == 1);
  CHECK(g.evict_idle() == 0);
}

TEST_CASE("stdio stream mode") {
  GateEngine g(simple_model(), 0.3);
  std::istringstream in("{\"type\":\"ping\"}\n\n  \ngarbage\n{\"type\":\"stats\"}\n");
  std::ostringstream out;
  serve_stream(g, in, out);
  std::istringstream lines(out.str());
  std::vector<json> replies;
  for (std::string l; std::getline(lines, l);) replies.push_back(json::parse(l));
  REQUIRE(replies.size() == 3);
  CHECK(replies[0]["ok"] == true);
  CHECK(replies[1]["ok"] == false);
  CHECK(replies[2]["malformed_lines"] == 1);
}

TEST_CASE("TCP server on an ephemeral port") {
  GateEngine g(simple_model(), 0.3);
  SocketServer server(g, "127.0.0.1:0");
  const auto addr = server.bound_address();
  CHECK(addr.rfind("127.0.0.1:", 0) == 0);
  CHECK(addr != "127.0.0.1:0");
  std::thread th([&] { server.run(); });
  {
    testing_support::LineClient a(addr), b(addr);
    CHECK(json::parse(a.request(R"({"type":"ping"})"))["ok"] == true);
    CHECK(json::parse(b.request("nonsense"))["ok"] == false);
    CHECK(json::parse(b.request(R"({"type":"ping"})"))["ok"] == true);
    const auto d = json::parse(a.request(R"({"type":"decide","session_id":"tcp","task_complexity":0.2})"));
    CHECK(d["context_stale"] == true);
  }
  server.stop();
  th.join();
  CHECK(g.stats().total_requests == 1);
  CHECK_THROWS_AS(SocketServer(g, "no-port-here"), Error);
}

}  // TEST_SUITE
