#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pregate/gate.hpp"
#include "pregate/model.hpp"
#include "pregate/stats.hpp"
#include "pregate/telemetry.hpp"

namespace pregate {

// ---------------------------------------------------------------------------
// Synthetic sessions

enum class LatentState { Flow = 0, Exploratory = 1 };
std::string_view to_string(LatentState s);

// Per-minute Poisson means (and a few shape parameters) for one latent state.
struct StateProfile {
  double typing_bursts = 6.0;
  double chars_per_burst = 40.0;
  double chars_per_second = 6.0;
  double pauses = 3.0;
  double undo = 0.5;
  double quick_fix = 0.2;
  double terminal = 0.2;
  double palette = 0.5;
  double navigation = 0.5;
  double lines_added = 4.0;
  double diagnostics = 0.3;     // Diagnostic snapshots per minute
  double errors_mean = 0.5;     // mean error count in a snapshot
  double warnings_mean = 1.5;
  double requests = 2.0;        // SuggestionRequested per minute
  double complexity_mean = 0.4; // task complexity ~ Beta with this mean
};

// One term of the ground-truth logit: weight * (x[feature] - center) / scale.
struct TruthTerm {
  std::string feature;
  double weight = 0.0;
  double center = 0.0;
  double scale = 1.0;
};

struct SynthConfig {
  std::size_t n_sessions = 100;
  double mean_session_minutes = 25.0;
  // transition[from][to] applied at every minute boundary; rows sum to 1.
  std::array<std::array<double, 2>, 2> transition{{{0.85, 0.15}, {0.25, 0.75}}};
  StateProfile flow;
  StateProfile exploratory;
  double base_rate = 0.184;  // target mean acceptance probability; intercept is calibrated to it
  std::vector<TruthTerm> truth;
  // Optional interaction: xor_strength * sign(za) * sign(zb) on two truth-style terms.
  double xor_strength = 0.0;
  TruthTerm xor_a;
  TruthTerm xor_b;
  std::size_t target_records = 0;  // > 0: stop issuing requests once reached (adds sessions if needed)
  std::uint64_t seed = 7;

  static SynthConfig defaults();
  static SynthConfig xor_variant();
  void validate() const;  // throws Error{InvalidConfig}
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct GroundTruth {
  std::string session_id;
  std::int64_t suggestion_id = 0;
  TimestampMs timestamp = 0;
  LatentState state = LatentState::Flow;
  double p_true = 0.0;
  bool accepted = false;
};

nlohmann::json to_json(const GroundTruth& g);

struct SynthOutput {
  std::vector<TelemetryEvent> events;  // per-session, timestamp ordered
  std::vector<GroundTruth> truth;      // one per SuggestionRequested
  double intercept = 0.0;              // calibrated ground-truth intercept
};

// Ground-truth logit for a feature vector (excluding the intercept).
double truth_logit(const SynthConfig& c, const FeatureVector& x);

SynthOutput synth_sessions(const SynthConfig& config);

// ---------------------------------------------------------------------------
// Replay

struct TimelineEntry {
  std::string session_id;
  TimestampMs timestamp = 0;
  std::int64_t suggestion_id = 0;
  double p_accept = 0.0;
  Decision decision = Decision::Trigger;
  DecisionReason reason = DecisionReason::FailOpen;
  bool context_stale = false;
  bool accepted = false;  // recorded outcome; only meaningful when issued
};

struct SimulationReport {
  std::int64_t total_requests = 0;
  std::int64_t suppressed = 0;
  std::int64_t issued = 0;
  std::int64_t accepted_of_issued = 0;
  std::int64_t malformed_lines = 0;
  std::int64_t rejected_events = 0;
  std::vector<TimelineEntry> timeline;

  double suppression_rate() const;
  // nullopt when nothing was issued.
  std::optional<double> acceptance_rate() const;

  static SimulationReport from_counts(std::int64_t total_requests, std::int64_t suppressed,
                                      std::int64_t accepted_of_issued);
};

nlohmann::json to_json(const SimulationReport& r, bool include_timeline = false);
SimulationReport simulation_report_from_json(const nlohmann::json& j);
// timestamp,session_id,suggestion_id,p_accept,decision,reason
void write_timeline_csv(std::ostream& out, const SimulationReport& r);

// Sessions replay concurrently; the merge keeps first-appearance session order.
SimulationReport replay(std::span<const TelemetryEvent> events, const AcceptanceModel& model, double tau);
// Single-threaded reference for replay().
SimulationReport replay_serial(std::span<const TelemetryEvent> events, const AcceptanceModel& model, double tau);

// ---------------------------------------------------------------------------
// Before/after comparison

struct ComparisonBundle {
  SimulationReport before;
  SimulationReport after;
  double suppression_before = 0.0;
  double suppression_after = 0.0;
  ProportionComparison stats;
};

// Throws Error{DegenerateReport} when either report issued nothing.
ComparisonBundle compare(const SimulationReport& before, const SimulationReport& after);

nlohmann::json to_json(const ComparisonBundle& b);
void write_csv(std::ostream& out, const ComparisonBundle& b);

// RFC 4180 field quoting.
std::string csv_field(std::string_view s);

}  // namespace pregate
