#pragma once

// Content-agnostic editor telemetry: event taxonomy, one-minute windowing,
// per-session counters and the accept/reject labeling rules.

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace pregate {

using TimestampMs = std::int64_t;

inline constexpr TimestampMs kWindowMs = 60'000;
inline constexpr TimestampMs kPassiveRejectMs = 30'000;

enum class EventKind {
  TypingBurst,
  Pause,
  FileNav,
  CommandUse,
  Diagnostic,
  SuggestionShown,
  SuggestionAccepted,
  SuggestionRequested,
  EditApplied,
};

enum class Command { Undo, QuickFix, TerminalToggle, PaletteAction, Copy, Paste };

std::string_view to_string(EventKind kind);
std::string_view to_string(Command command);
std::optional<EventKind> parse_event_kind(std::string_view name);
std::optional<Command> parse_command(std::string_view name);

// Only counts and durations; never text. Fields irrelevant to an event's kind
// stay zero.
struct EventPayload {
  std::int64_t chars_typed = 0;       // TypingBurst
  std::int64_t duration_ms = 0;       // TypingBurst, Pause
  Command command = Command::Undo;    // CommandUse
  std::int64_t warnings = 0;          // Diagnostic (snapshot)
  std::int64_t errors = 0;            // Diagnostic (snapshot)
  std::int64_t breakpoints = 0;       // Diagnostic (snapshot)
  std::int64_t lines_added = 0;       // EditApplied
  std::int64_t open_files = 0;        // FileNav (snapshot)
  std::int64_t file_lines = 0;        // FileNav (snapshot)
  std::int64_t suggestion_id = 0;     // Suggestion*
  std::int64_t prompt_length = 0;     // SuggestionRequested
  std::int64_t suggestion_chars = 0;  // SuggestionShown
  double task_complexity = 0.0;       // SuggestionRequested, in [0,1]

  bool operator==(const EventPayload&) const = default;
};

struct TelemetryEvent {
  std::string session_id;
  TimestampMs timestamp = 0;
  EventKind kind = EventKind::Pause;
  EventPayload payload;

  bool operator==(const TelemetryEvent&) const = default;
};

// Throws Error{InvalidFormat} for missing fields, negative counts or unknown kinds.
TelemetryEvent event_from_json(const nlohmann::json& j);
nlohmann::json event_to_json(const TelemetryEvent& e);

struct JsonlReadResult {
  std::vector<TelemetryEvent> events;
  std::size_t malformed_lines = 0;
};

// Malformed lines are skipped and counted; blank lines are ignored.
JsonlReadResult read_events_jsonl(std::istream& in);
void write_events_jsonl(std::ostream& out, std::span<const TelemetryEvent> events);

struct BehaviorWindow {
  std::string session_id;
  TimestampMs window_start = 0;
  int duration_s = 60;
  std::int64_t chars_typed = 0;
  double typing_time_s = 0.0;  // clamped to the window length
  std::int64_t pause_count = 0;
  std::int64_t nav_events = 0;
  std::int64_t undo_count = 0;
  std::int64_t quick_fix_count = 0;
  std::int64_t terminal_toggles = 0;
  std::int64_t palette_actions = 0;
  std::int64_t warnings = 0;
  std::int64_t errors = 0;
  std::int64_t breakpoints = 0;
  std::int64_t lines_added = 0;
  std::int64_t file_lines = 0;
  std::int64_t open_files = 0;

  TimestampMs window_end() const { return window_start + kWindowMs; }
  bool operator==(const BehaviorWindow&) const = default;
};

enum class Label { Accepted, RejectedExplicit, RejectedPassive };
std::string_view to_string(Label label);

inline bool is_accepted(Label l) { return l == Label::Accepted; }

struct TelemetryConfig {
  TimestampMs out_of_order_tolerance_ms = 5'000;
  std::size_t window_history = 5;
  // Threshold the collector uses when emitting Pause events; recorded here
  // so that synthetic generators and collectors agree.
  TimestampMs pause_threshold_ms = 2'000;
};

struct PendingSuggestion {
  std::int64_t suggestion_id = 0;
  TimestampMs shown_at = 0;

  bool operator==(const PendingSuggestion&) const = default;
};

struct SessionState {
  std::string session_id;
  TelemetryConfig config;

  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::int64_t suggestions_seen = 0;
  double total_typing_s = 0.0;
  std::int64_t total_chars = 0;
  std::optional<TimestampMs> last_activity;

  std::optional<BehaviorWindow> open_window;
  std::deque<BehaviorWindow> closed_windows;  // oldest first, at most config.window_history
  std::vector<PendingSuggestion> pending;

  explicit SessionState(std::string id = {}, TelemetryConfig cfg = {})
      : session_id(std::move(id)), config(cfg) {}
};

struct Resolution {
  std::int64_t suggestion_id = 0;
  Label label = Label::RejectedPassive;
  TimestampMs shown_at = 0;
  TimestampMs resolved_at = 0;
};

// Folds one event into the session. Events up to the configured tolerance
// behind last_activity are accepted and attributed to the current window;
// anything older throws Error{RejectOutOfOrder}. Returns the suggestions
// whose label became final as a consequence of this event.
std::vector<Resolution> ingest_event(SessionState& state, const TelemetryEvent& e);

// Expires pending suggestions as passive rejections at time `now` and closes the
// open window if `now` lies beyond it. Does not touch last_activity.
std::vector<Resolution> advance_to(SessionState& state, TimestampMs now);

// Offline labeling of one shown suggestion. nullopt means Pending: the stream
// ended before a decision and before the passive-rejection timeout.
std::optional<Label> label_suggestion(const TelemetryEvent& shown,
                                      std::span<const TelemetryEvent> later_events);

}  // namespace pregate
