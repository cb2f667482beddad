#include "pregate/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <queue>
#include <random>
#include <unordered_map>

#include "pregate/error.hpp"
#include "pregate/features.hpp"
#include "pregate/kernels.hpp"

namespace pregate {

std::string_view to_string(LatentState s) { return s == LatentState::Flow ? "Flow" : "Exploratory"; }

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  auto& f = c.flow;
  f.typing_bursts = 8.0;
  f.chars_per_burst = 45.0;
  f.chars_per_second = 8.0;
  f.pauses = 1.5;
  f.undo = 0.3;
  f.quick_fix = 0.1;
  f.terminal = 0.1;
  f.palette = 0.3;
  f.navigation = 0.3;
  f.lines_added = 6.0;
  f.diagnostics = 0.2;
  f.errors_mean = 0.3;
  f.warnings_mean = 1.0;
  f.requests = 2.5;
  f.complexity_mean = 0.35;

  auto& e = c.exploratory;
  e.typing_bursts = 4.0;
  e.chars_per_burst = 25.0;
  e.chars_per_second = 3.5;
  e.pauses = 5.0;
  e.undo = 0.8;
  e.quick_fix = 0.6;
  e.terminal = 0.5;
  e.palette = 1.2;
  e.navigation = 1.5;
  e.lines_added = 2.0;
  e.diagnostics = 0.5;
  e.errors_mean = 1.5;
  e.warnings_mean = 2.5;
  e.requests = 1.8;
  e.complexity_mean = 0.55;

  c.truth = {
      {"acceptance_ratio", 1.0, 0.2, 0.15},  {"typing_efficiency", -0.9, 5.0, 2.0},
      {"pause_count", 0.5, 3.0, 2.0},        {"quick_fix_count", 0.4, 0.3, 0.5},
      {"errors", 0.3, 1.0, 1.0},             {"task_complexity", 0.5, 0.45, 0.15},
      {"palette_actions", 0.25, 0.7, 0.8},
  };
  return c;
}

SynthConfig SynthConfig::xor_variant() {
  SynthConfig c = defaults();
  // Replace the linear signal on the pair with a pure interaction.
  std::erase_if(c.truth, [](const TruthTerm& t) {
    return t.feature == "typing_efficiency" || t.feature == "task_complexity";
  });
  c.xor_strength = 2.5;
  c.xor_a = {"typing_efficiency", 1.0, 5.0, 2.0};
  c.xor_b = {"task_complexity", 1.0, 0.45, 0.15};
  return c;
}

void SynthConfig::validate() const {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (n_sessions == 0 && target_records == 0) bad("n_sessions must be positive");
  if (!(mean_session_minutes >= 1.0)) bad("mean_session_minutes must be >= 1");
  for (const auto& row : transition) {
    for (double p : row) {
      if (!(p >= 0.0 && p <= 1.0)) bad("transition probabilities must lie in [0,1]");
    }
    if (std::abs(row[0] + row[1] - 1.0) > 1e-9) bad("transition rows must sum to 1");
  }
  if (!(base_rate > 0.0 && base_rate < 1.0)) bad("base_rate must lie in (0,1)");
  for (const auto* p : {&flow, &exploratory}) {
    const double vals[] = {p->typing_bursts, p->chars_per_burst, p->pauses, p->undo, p->quick_fix,
                           p->terminal, p->palette, p->navigation, p->lines_added, p->diagnostics,
                           p->errors_mean, p->warnings_mean, p->requests};
    for (double v : vals) {
      if (!(v >= 0.0) || !std::isfinite(v)) bad("state profile rates must be finite and non-negative");
    }
    if (!(p->chars_per_second > 0.0)) bad("chars_per_second must be positive");
    if (!(p->complexity_mean > 0.0 && p->complexity_mean < 1.0)) bad("complexity_mean must lie in (0,1)");
  }
  auto check_term = [&](const TruthTerm& t) {
    feature_index(t.feature);
    if (!(t.scale > 0.0)) bad("truth term scale must be positive");
  };
  for (const auto& t : truth) check_term(t);
  if (xor_strength != 0.0) {
    check_term(xor_a);
    check_term(xor_b);
  }
}

namespace {

nlohmann::json profile_json(const StateProfile& p) {
  return {{"typing_bursts", p.typing_bursts}, {"chars_per_burst", p.chars_per_burst},
          {"chars_per_second", p.chars_per_second}, {"pauses", p.pauses}, {"undo", p.undo},
          {"quick_fix", p.quick_fix}, {"terminal", p.terminal}, {"palette", p.palette},
          {"navigation", p.navigation}, {"lines_added", p.lines_added}, {"diagnostics", p.diagnostics},
          {"errors_mean", p.errors_mean}, {"warnings_mean", p.warnings_mean}, {"requests", p.requests},
          {"complexity_mean", p.complexity_mean}};
}

StateProfile profile_from_json(const nlohmann::json& j, StateProfile p) {
  p.typing_bursts = j.value("typing_bursts", p.typing_bursts);
  p.chars_per_burst = j.value("chars_per_burst", p.chars_per_burst);
  p.chars_per_second = j.value("chars_per_second", p.chars_per_second);
  p.pauses = j.value("pauses", p.pauses);
  p.undo = j.value("undo", p.undo);
  p.quick_fix = j.value("quick_fix", p.quick_fix);
  p.terminal = j.value("terminal", p.terminal);
  p.palette = j.value("palette", p.palette);
  p.navigation = j.value("navigation", p.navigation);
  p.lines_added = j.value("lines_added", p.lines_added);
  p.diagnostics = j.value("diagnostics", p.diagnostics);
  p.errors_mean = j.value("errors_mean", p.errors_mean);
  p.warnings_mean = j.value("warnings_mean", p.warnings_mean);
  p.requests = j.value("requests", p.requests);
  p.complexity_mean = j.value("complexity_mean", p.complexity_mean);
  return p;
}

nlohmann::json term_json(const TruthTerm& t) {
  return {{"feature", t.feature}, {"weight", t.weight}, {"center", t.center}, {"scale", t.scale}};
}

TruthTerm term_from_json(const nlohmann::json& j) {
  return {j.at("feature").get<std::string>(), j.value("weight", 0.0), j.value("center", 0.0),
          j.value("scale", 1.0)};
}

}  // namespace

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json truth = nlohmann::json::array();
  for (const auto& t : c.truth) truth.push_back(term_json(t));
  return {{"n_sessions", c.n_sessions},
          {"mean_session_minutes", c.mean_session_minutes},
          {"transition", {{c.transition[0][0], c.transition[0][1]}, {c.transition[1][0], c.transition[1][1]}}},
          {"flow", profile_json(c.flow)},
          {"exploratory", profile_json(c.exploratory)},
          {"base_rate", c.base_rate},
          {"truth", truth},
          {"xor_strength", c.xor_strength},
          {"xor_a", term_json(c.xor_a)},
          {"xor_b", term_json(c.xor_b)},
          {"target_records", c.target_records},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  try {
    SynthConfig c = j.value("xor_strength", 0.0) != 0.0 && !j.contains("xor_a") ? SynthConfig::xor_variant()
                                                                                 : SynthConfig::defaults();
    c.n_sessions = j.value("n_sessions", c.n_sessions);
    c.mean_session_minutes = j.value("mean_session_minutes", c.mean_session_minutes);
    if (j.contains("transition")) {
      const auto& t = j.at("transition");
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t b = 0; b < 2; ++b) c.transition[a][b] = t.at(a).at(b).get<double>();
      }
    }
    if (j.contains("flow")) c.flow = profile_from_json(j.at("flow"), c.flow);
    if (j.contains("exploratory")) c.exploratory = profile_from_json(j.at("exploratory"), c.exploratory);
    c.base_rate = j.value("base_rate", c.base_rate);
    if (j.contains("truth")) {
      c.truth.clear();
      for (const auto& t : j.at("truth")) c.truth.push_back(term_from_json(t));
    }
    c.xor_strength = j.value("xor_strength", c.xor_strength);
    if (j.contains("xor_a")) c.xor_a = term_from_json(j.at("xor_a"));
    if (j.contains("xor_b")) c.xor_b = term_from_json(j.at("xor_b"));
    c.target_records = j.value("target_records", c.target_records);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

nlohmann::json to_json(const GroundTruth& g) {
  return {{"session_id", g.session_id}, {"suggestion_id", g.suggestion_id}, {"timestamp", g.timestamp},
          {"state", to_string(g.state)},    {"p_true", g.p_true},               {"accepted", g.accepted}};
}

double truth_logit(const SynthConfig& c, const FeatureVector& x) {
  double z = 0.0;
  for (const auto& t : c.truth) z += t.weight * (x[t.feature] - t.center) / t.scale;
  if (c.xor_strength != 0.0) {
    const double a = x[c.xor_a.feature] - c.xor_a.center;
    const double b = x[c.xor_b.feature] - c.xor_b.center;
    z += c.xor_strength * ((a > 0) == (b > 0) ? 1.0 : -1.0);
  }
  return z;
}

namespace {

constexpr TimestampMs kEpochBase = 1'700'000'040'000;  // minute aligned
constexpr TimestampMs kMinRequestGapMs = 5'000;
constexpr TimestampMs kShowDelayMs = 150;

struct ScheduledEvent {
  TelemetryEvent event;
  std::uint64_t seq = 0;
  LatentState state = LatentState::Flow;
};

struct SessionPlan {
  std::string session_id;
  std::vector<ScheduledEvent> behavior;  // sorted by (timestamp, seq)
  std::uint64_t accept_seed = 0;
};

template <class Rng>
std::int64_t poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<std::int64_t>(mean)(rng);
}

template <class Rng>
double beta(Rng& rng, double mean, double concentration) {
  std::gamma_distribution<double> ga(mean * concentration, 1.0);
  std::gamma_distribution<double> gb((1.0 - mean) * concentration, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0 ? x / (x + y) : mean;
}

std::vector<SessionPlan> plan_sessions(const SynthConfig& c) {
  std::vector<SessionPlan> plans;
  std::size_t requests = 0;
  std::int64_t next_suggestion = 1;
  const bool by_target = c.target_records > 0;

  for (std::size_t s = 0; by_target ? requests < c.target_records : s < c.n_sessions; ++s) {
    std::mt19937_64 rng(kernels::derive_seed(c.seed, s, 0));
    SessionPlan plan;
    char sid[32];
    std::snprintf(sid, sizeof sid, "s%05zu", s);
    plan.session_id = sid;
    plan.accept_seed = kernels::derive_seed(c.seed, s, 1);

    const TimestampMs t0 = kEpochBase + static_cast<TimestampMs>(s) * 86'400'000;
    const auto minutes = std::max<std::int64_t>(3, poisson(rng, c.mean_session_minutes));
    std::uint64_t seq = 0;
    auto emit = [&](TimestampMs t, EventKind kind, EventPayload p, LatentState st) {
      plan.behavior.push_back({TelemetryEvent{plan.session_id, t, kind, p}, seq++, st});
    };

    const double stationary_flow = c.transition[1][0] / (c.transition[0][1] + c.transition[1][0] + 1e-12);
    LatentState state = std::bernoulli_distribution(stationary_flow)(rng) ? LatentState::Flow : LatentState::Exploratory;
    std::int64_t open_files = 1 + poisson(rng, 3.0);
    auto file_lines = static_cast<std::int64_t>(std::lround(std::exp(std::normal_distribution<double>(5.0, 0.6)(rng))));

    {
      EventPayload p;
      p.open_files = open_files;
      p.file_lines = file_lines;
      emit(t0, EventKind::FileNav, p, state);
      EventPayload d;
      emit(t0, EventKind::Diagnostic, d, state);
    }

    TimestampMs last_request = t0 - kMinRequestGapMs;
    for (std::int64_t m = 0; m < minutes; ++m) {
      if (m > 0) {
        const auto from = static_cast<std::size_t>(state);
        state = std::bernoulli_distribution(c.transition[from][0])(rng) ? LatentState::Flow : LatentState::Exploratory;
      }
      const StateProfile& prof = state == LatentState::Flow ? c.flow : c.exploratory;
      const TimestampMs start = t0 + m * kWindowMs;
      std::uniform_int_distribution<TimestampMs> when(start, start + kWindowMs - 1);

      std::vector<ScheduledEvent> minute;
      auto add = [&](EventKind kind, EventPayload p) {
        minute.push_back({TelemetryEvent{plan.session_id, when(rng), kind, p}, 0, state});
      };

      for (auto k = poisson(rng, prof.typing_bursts); k > 0; --k) {
        EventPayload p;
        p.chars_typed = 1 + poisson(rng, prof.chars_per_burst);
        const double secs = static_cast<double>(p.chars_typed) / prof.chars_per_second *
                            std::uniform_real_distribution<double>(0.8, 1.2)(rng);
        p.duration_ms = static_cast<std::int64_t>(std::lround(secs * 1000.0));
        add(EventKind::TypingBurst, p);
      }
      for (auto k = poisson(rng, prof.pauses); k > 0; --k) {
        EventPayload p;
        p.duration_ms = 2'000 + static_cast<std::int64_t>(std::exponential_distribution<double>(1.0 / 4000.0)(rng));
        add(EventKind::Pause, p);
      }
      const std::pair<double, Command> commands[] = {{prof.undo, Command::Undo},
                                                     {prof.quick_fix, Command::QuickFix},
                                                     {prof.terminal, Command::TerminalToggle},
                                                     {prof.palette * 0.5, Command::PaletteAction},
                                                     {prof.palette * 0.25, Command::Copy},
                                                     {prof.palette * 0.25, Command::Paste}};
      for (const auto& [rate, cmd] : commands) {
        for (auto k = poisson(rng, rate); k > 0; --k) {
          EventPayload p;
          p.command = cmd;
          add(EventKind::CommandUse, p);
        }
      }
      for (auto k = poisson(rng, prof.navigation); k > 0; --k) {
        open_files = std::max<std::int64_t>(1, open_files + std::uniform_int_distribution<int>(-1, 1)(rng));
        file_lines = static_cast<std::int64_t>(std::lround(std::exp(std::normal_distribution<double>(5.0, 0.6)(rng))));
        EventPayload p;
        p.open_files = open_files;
        p.file_lines = file_lines;
        add(EventKind::FileNav, p);
      }
      if (const auto lines = poisson(rng, prof.lines_added); lines > 0) {
        EventPayload p;
        p.lines_added = lines;
        add(EventKind::EditApplied, p);
      }
      for (auto k = poisson(rng, prof.diagnostics); k > 0; --k) {
        EventPayload p;
        p.warnings = poisson(rng, prof.warnings_mean);
        p.errors = poisson(rng, prof.errors_mean);
        p.breakpoints = poisson(rng, 0.3 * prof.errors_mean);
        add(EventKind::Diagnostic, p);
      }
      // No requests in the final minute so every suggestion reaches a label.
      if (m + 1 < minutes) {
        std::vector<TimestampMs> times;
        for (auto k = poisson(rng, prof.requests); k > 0; --k) times.push_back(when(rng));
        std::sort(times.begin(), times.end());
        for (TimestampMs t : times) {
          const double complexity = beta(rng, prof.complexity_mean, 10.0);
          if (t - last_request < kMinRequestGapMs) continue;
          if (by_target && requests >= c.target_records) break;
          EventPayload p;
          p.suggestion_id = next_suggestion++;
          p.prompt_length = 200 + poisson(rng, 800.0);
          p.task_complexity = complexity;
          minute.push_back({TelemetryEvent{plan.session_id, t, EventKind::SuggestionRequested, p}, 0, state});
          last_request = t;
          ++requests;
        }
      }
      std::stable_sort(minute.begin(), minute.end(), [](const ScheduledEvent& a, const ScheduledEvent& b) {
        return a.event.timestamp < b.event.timestamp;
      });
      for (auto& ev : minute) {
        ev.seq = seq++;
        plan.behavior.push_back(std::move(ev));
      }
    }
    EventPayload close;
    close.duration_ms = 2'000;
    emit(t0 + minutes * kWindowMs, EventKind::Pause, close, state);
    plans.push_back(std::move(plan));
  }
  return plans;
}

struct Later {
  bool operator()(const ScheduledEvent& a, const ScheduledEvent& b) const {
    return a.event.timestamp != b.event.timestamp ? a.event.timestamp > b.event.timestamp : a.seq > b.seq;
  }
};

// Runs one session with a given intercept. When `out` is null only the
// probability sum is accumulated.
void simulate_session(const SynthConfig& c, const SessionPlan& plan, double intercept, SynthOutput* out,
                      double& p_sum, std::size_t& p_count) {
  std::mt19937_64 rng(plan.accept_seed);
  std::priority_queue<ScheduledEvent, std::vector<ScheduledEvent>, Later> queue(plan.behavior.begin(),
                                                                                 plan.behavior.end());
  std::uint64_t seq = plan.behavior.size();
  SessionState state(plan.session_id);
  while (!queue.empty()) {
    ScheduledEvent ev = queue.top();
    queue.pop();
    ingest_event(state, ev.event);
    if (ev.event.kind == EventKind::SuggestionRequested) {
      const TimestampMs t = ev.event.timestamp;
      const auto x = build_feature_vector(state, ev.event.payload.task_complexity, t);
      const double p = kernels::sigmoid(intercept + truth_logit(c, x));
      // Fixed number of draws per request keeps the stream aligned across intercepts.
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      const auto latency = std::uniform_int_distribution<TimestampMs>(500, 4'000)(rng);
      const auto chars = poisson(rng, 80.0);
      const bool accepted = u < p;
      p_sum += p;
      ++p_count;

      EventPayload shown;
      shown.suggestion_id = ev.event.payload.suggestion_id;
      shown.suggestion_chars = chars;
      queue.push({TelemetryEvent{plan.session_id, t + kShowDelayMs, EventKind::SuggestionShown, shown}, seq++, ev.state});
      if (accepted) {
        EventPayload acc;
        acc.suggestion_id = ev.event.payload.suggestion_id;
        queue.push({TelemetryEvent{plan.session_id, t + kShowDelayMs + latency, EventKind::SuggestionAccepted, acc},
                    seq++, ev.state});
      }
      if (out != nullptr) {
        out->truth.push_back({plan.session_id, ev.event.payload.suggestion_id, t, ev.state, p, accepted});
      }
    }
    if (out != nullptr) out->events.push_back(std::move(ev.event));
  }
}

double mean_probability(const SynthConfig& c, const std::vector<SessionPlan>& plans, double intercept) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& plan : plans) simulate_session(c, plan, intercept, nullptr, sum, count);
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

SynthOutput synth_sessions(const SynthConfig& config) {
  config.validate();
  const auto plans = plan_sessions(config);

  double lo = -20.0;
  double hi = 20.0;
  for (int iter = 0; iter < 40; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (mean_probability(config, plans, mid) < config.base_rate ? lo : hi) = mid;
  }

  SynthOutput out;
  out.intercept = 0.5 * (lo + hi);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& plan : plans) simulate_session(config, plan, out.intercept, &out, sum, count);
  return out;
}

// ---------------------------------------------------------------------------

double SimulationReport::suppression_rate() const {
  return total_requests > 0 ? static_cast<double>(suppressed) / static_cast<double>(total_requests) : 0.0;
}

std::optional<double> SimulationReport::acceptance_rate() const {
  if (issued <= 0) return std::nullopt;
  return static_cast<double>(accepted_of_issued) / static_cast<double>(issued);
}

SimulationReport SimulationReport::from_counts(std::int64_t total_requests, std::int64_t suppressed,
                                               std::int64_t accepted_of_issued) {
  if (total_requests < 0 || suppressed < 0 || suppressed > total_requests || accepted_of_issued < 0 ||
      accepted_of_issued > total_requests - suppressed) {
    throw Error(ErrorCode::InvalidCounts, "inconsistent report counts");
  }
  SimulationReport r;
  r.total_requests = total_requests;
  r.suppressed = suppressed;
  r.issued = total_requests - suppressed;
  r.accepted_of_issued = accepted_of_issued;
  return r;
}

nlohmann::json to_json(const SimulationReport& r, bool include_timeline) {
  nlohmann::json j{{"total_requests", r.total_requests},
                   {"suppressed", r.suppressed},
                   {"issued", r.issued},
                   {"accepted_of_issued", r.accepted_of_issued},
                   {"suppression_rate", r.suppression_rate()},
                   {"malformed_lines", r.malformed_lines},
                   {"rejected_events", r.rejected_events}};
  const auto rate = r.acceptance_rate();
  j["acceptance_rate"] = rate ? nlohmann::json(*rate) : nlohmann::json(nullptr);
  j["acceptance_rate_defined"] = rate.has_value();
  if (include_timeline) {
    nlohmann::json tl = nlohmann::json::array();
    for (const auto& e : r.timeline) {
      tl.push_back({{"session_id", e.session_id},
                    {"timestamp", e.timestamp},
                    {"suggestion_id", e.suggestion_id},
                    {"p_accept", e.p_accept},
                    {"decision", to_string(e.decision)},
                    {"reason", to_string(e.reason)},
                    {"context_stale", e.context_stale},
                    {"accepted", e.accepted}});
    }
    j["timeline"] = std::move(tl);
  }
  return j;
}

SimulationReport simulation_report_from_json(const nlohmann::json& j) {
  try {
    SimulationReport r;
    r.total_requests = j.at("total_requests").get<std::int64_t>();
    r.suppressed = j.at("suppressed").get<std::int64_t>();
    r.issued = j.value("issued", r.total_requests - r.suppressed);
    r.accepted_of_issued = j.at("accepted_of_issued").get<std::int64_t>();
    r.malformed_lines = j.value("malformed_lines", std::int64_t{0});
    r.rejected_events = j.value("rejected_events", std::int64_t{0});
    for (const auto& e : j.value("timeline", nlohmann::json::array())) {
      TimelineEntry t;
      t.session_id = e.at("session_id").get<std::string>();
      t.timestamp = e.at("timestamp").get<TimestampMs>();
      t.suggestion_id = e.at("suggestion_id").get<std::int64_t>();
      t.p_accept = e.at("p_accept").is_null() ? std::numeric_limits<double>::quiet_NaN() : e.at("p_accept").get<double>();
      t.decision = e.at("decision").get<std::string>() == "suppress" ? Decision::Suppress : Decision::Trigger;
      const auto reason = e.at("reason").get<std::string>();
      t.reason = reason == "above_threshold"   ? DecisionReason::AboveThreshold
                 : reason == "below_threshold" ? DecisionReason::BelowThreshold
                                               : DecisionReason::FailOpen;
      t.context_stale = e.value("context_stale", false);
      t.accepted = e.value("accepted", false);
      r.timeline.push_back(std::move(t));
    }
    if (r.issued != r.total_requests - r.suppressed || r.accepted_of_issued > r.issued || r.suppressed < 0 ||
        r.accepted_of_issued < 0) {
      throw Error(ErrorCode::InvalidFormat, "report counts violate issued = total - suppressed");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidFormat, std::string("report: ") + e.what());
  }
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_timeline_csv(std::ostream& out, const SimulationReport& r) {
  out << "timestamp,session_id,suggestion_id,p_accept,decision,reason\n";
  char buf[64];
  for (const auto& e : r.timeline) {
    std::snprintf(buf, sizeof buf, "%.17g", e.p_accept);
    out << e.timestamp << ',' << csv_field(e.session_id) << ',' << e.suggestion_id << ',' << buf << ','
        << to_string(e.decision) << ',' << to_string(e.reason) << '\n';
  }
}

namespace {

struct SessionReplay {
  std::int64_t requests = 0;
  std::int64_t suppressed = 0;
  std::int64_t accepted_of_issued = 0;
  std::int64_t rejected_events = 0;
  std::vector<TimelineEntry> timeline;
};

SessionReplay replay_session(std::vector<const TelemetryEvent*>& stream, const AcceptanceModel& model, double tau) {
  std::stable_sort(stream.begin(), stream.end(),
                   [](const TelemetryEvent* a, const TelemetryEvent* b) { return a->timestamp < b->timestamp; });
  SessionReplay out;
  if (stream.empty()) return out;
  SessionState state(stream.front()->session_id);
  std::unordered_map<std::int64_t, std::size_t> issued;
  for (const TelemetryEvent* e : stream) {
    std::vector<Resolution> resolved;
    try {
      resolved = ingest_event(state, *e);
    } catch (const Error&) {
      ++out.rejected_events;
      continue;
    }
    for (const auto& res : resolved) {
      if (res.label != Label::Accepted) continue;
      auto it = issued.find(res.suggestion_id);
      if (it == issued.end()) continue;
      out.timeline[it->second].accepted = true;
      ++out.accepted_of_issued;
    }
    if (e->kind != EventKind::SuggestionRequested) continue;
    const TimestampMs t = *state.last_activity;
    const auto x = build_feature_vector(state, e->payload.task_complexity, t);
    const auto d = should_trigger(model, x, tau);
    ++out.requests;
    if (d.decision == Decision::Suppress) ++out.suppressed;
    else issued[e->payload.suggestion_id] = out.timeline.size();
    out.timeline.push_back({state.session_id, t, e->payload.suggestion_id, d.p_accept, d.decision, d.reason,
                            x.context_stale, false});
  }
  return out;
}

std::vector<std::vector<const TelemetryEvent*>> group_sessions(std::span<const TelemetryEvent> events) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<const TelemetryEvent*>> groups;
  for (const auto& e : events) {
    auto [it, inserted] = slot.try_emplace(e.session_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(&e);
  }
  return groups;
}

SimulationReport merge(std::vector<SessionReplay>& parts) {
  SimulationReport r;
  for (auto& p : parts) {
    r.total_requests += p.requests;
    r.suppressed += p.suppressed;
    r.accepted_of_issued += p.accepted_of_issued;
    r.rejected_events += p.rejected_events;
    r.timeline.insert(r.timeline.end(), std::make_move_iterator(p.timeline.begin()),
                      std::make_move_iterator(p.timeline.end()));
  }
  r.issued = r.total_requests - r.suppressed;
  return r;
}

}  // namespace

SimulationReport replay(std::span<const TelemetryEvent> events, const AcceptanceModel& model, double tau) {
  auto groups = group_sessions(events);
  std::vector<SessionReplay> parts(groups.size());
  const auto n = static_cast<std::ptrdiff_t>(groups.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    parts[ui] = replay_session(groups[ui], model, tau);
  }
  return merge(parts);
}

SimulationReport replay_serial(std::span<const TelemetryEvent> events, const AcceptanceModel& model, double tau) {
  auto groups = group_sessions(events);
  std::vector<SessionReplay> parts;
  parts.reserve(groups.size());
  for (auto& g : groups) parts.push_back(replay_session(g, model, tau));
  return merge(parts);
}

// ---------------------------------------------------------------------------

ComparisonBundle compare(const SimulationReport& before, const SimulationReport& after) {
  if (before.issued <= 0 || after.issued <= 0) {
    throw Error(ErrorCode::DegenerateReport, "both reports must have issued suggestions");
  }
  ComparisonBundle b;
  b.before = before;
  b.after = after;
  b.before.timeline.clear();
  b.after.timeline.clear();
  b.suppression_before = before.suppression_rate();
  b.suppression_after = after.suppression_rate();
  const TwoByTwo t{before.accepted_of_issued, before.issued, after.accepted_of_issued, after.issued};
  try {
    b.stats = compare_proportions(t);
  } catch (const Error& e) {
    throw Error(ErrorCode::DegenerateReport, e.what());
  }
  return b;
}

nlohmann::json to_json(const ComparisonBundle& b) {
  return {{"before", to_json(b.before)},
          {"after", to_json(b.after)},
          {"suppression_before", b.suppression_before},
          {"suppression_after", b.suppression_after},
          {"statistics", to_json(b.stats)}};
}

void write_csv(std::ostream& out, const ComparisonBundle& b) {
  char buf[256];
  out << "metric,before,after\n";
  std::snprintf(buf, sizeof buf,
                "total_requests,%lld,%lld\nllm_calls_issued,%lld,%lld\nsuppressed,%lld,%lld\n"
                "suppression_rate_pct,%.1f,%.1f\nacceptance_rate_pct,%.1f,%.1f\n",
                static_cast<long long>(b.before.total_requests), static_cast<long long>(b.after.total_requests),
                static_cast<long long>(b.before.issued), static_cast<long long>(b.after.issued),
                static_cast<long long>(b.before.suppressed), static_cast<long long>(b.after.suppressed),
                100 * b.suppression_before, 100 * b.suppression_after, 100 * b.stats.rate_before,
                100 * b.stats.rate_after);
  out << buf << '\n';
  write_csv(out, b.stats);
}

}  // namespace pregate
