#include "pregate/telemetry.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <ostream>
#include <utility>

#include "pregate/error.hpp"

namespace pregate {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 9> kKindNames{{
    {EventKind::TypingBurst, "TypingBurst"},
    {EventKind::Pause, "Pause"},
    {EventKind::FileNav, "FileNav"},
    {EventKind::CommandUse, "CommandUse"},
    {EventKind::Diagnostic, "Diagnostic"},
    {EventKind::SuggestionShown, "SuggestionShown"},
    {EventKind::SuggestionAccepted, "SuggestionAccepted"},
    {EventKind::SuggestionRequested, "SuggestionRequested"},
    {EventKind::EditApplied, "EditApplied"},
}};

constexpr std::array<std::pair<Command, std::string_view>, 6> kCommandNames{{
    {Command::Undo, "Undo"},
    {Command::QuickFix, "QuickFix"},
    {Command::TerminalToggle, "TerminalToggle"},
    {Command::PaletteAction, "PaletteAction"},
    {Command::Copy, "Copy"},
    {Command::Paste, "Paste"},
}};

TimestampMs floor_to_window(TimestampMs t) {
  TimestampMs q = t / kWindowMs;
  if (t % kWindowMs != 0 && t < 0) --q;
  return q * kWindowMs;
}

std::int64_t read_count(const nlohmann::json& payload, const char* key) {
  auto it = payload.find(key);
  if (it == payload.end()) return 0;
  if (!it->is_number_integer() && !it->is_number_unsigned()) {
    throw Error(ErrorCode::InvalidFormat, std::string("field '") + key + "' must be an integer");
  }
  auto v = it->get<std::int64_t>();
  if (v < 0) throw Error(ErrorCode::InvalidFormat, std::string("field '") + key + "' is negative");
  return v;
}

BehaviorWindow make_window(const SessionState& state, TimestampMs start) {
  BehaviorWindow w;
  w.session_id = state.session_id;
  w.window_start = start;
  // Snapshot gauges describe editor state, not activity, so they carry over.
  const BehaviorWindow* prev = state.open_window ? &*state.open_window
                               : state.closed_windows.empty() ? nullptr
                                                              : &state.closed_windows.back();
  if (prev != nullptr) {
    w.warnings = prev->warnings;
    w.errors = prev->errors;
    w.breakpoints = prev->breakpoints;
    w.open_files = prev->open_files;
    w.file_lines = prev->file_lines;
  }
  return w;
}

void close_open_window(SessionState& state) {
  if (!state.open_window) return;
  state.closed_windows.push_back(std::move(*state.open_window));
  state.open_window.reset();
  while (state.closed_windows.size() > std::max<std::size_t>(1, state.config.window_history)) {
    state.closed_windows.pop_front();
  }
}

void expire_pending(SessionState& state, TimestampMs now, std::vector<Resolution>& out) {
  auto keep = std::stable_partition(state.pending.begin(), state.pending.end(),
                                    [now](const PendingSuggestion& p) {
                                      return now - p.shown_at < kPassiveRejectMs;
                                    });
  for (auto it = keep; it != state.pending.end(); ++it) {
    out.push_back({it->suggestion_id, Label::RejectedPassive, it->shown_at, now});
    ++state.rejected;
  }
  state.pending.erase(keep, state.pending.end());
}

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "Unknown";
}

std::string_view to_string(Command command) {
  for (const auto& [c, name] : kCommandNames) {
    if (c == command) return name;
  }
  return "Unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::optional<Command> parse_command(std::string_view name) {
  for (const auto& [c, n] : kCommandNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Accepted: return "Accepted";
    case Label::RejectedExplicit: return "RejectedExplicit";
    case Label::RejectedPassive: return "RejectedPassive";
  }
  return "Unknown";
}

TelemetryEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidFormat, "event must be a JSON object");
  auto sid = j.find("session_id");
  auto ts = j.find("timestamp");
  auto kind = j.find("kind");
  if (sid == j.end() || !sid->is_string()) throw Error(ErrorCode::InvalidFormat, "missing session_id");
  if (ts == j.end() || !ts->is_number_integer()) throw Error(ErrorCode::InvalidFormat, "missing timestamp");
  if (kind == j.end() || !kind->is_string()) throw Error(ErrorCode::InvalidFormat, "missing kind");

  TelemetryEvent e;
  e.session_id = sid->get<std::string>();
  e.timestamp = ts->get<TimestampMs>();
  auto parsed = parse_event_kind(kind->get<std::string>());
  if (!parsed) throw Error(ErrorCode::InvalidFormat, "unknown kind '" + kind->get<std::string>() + "'");
  e.kind = *parsed;

  static const nlohmann::json kEmpty = nlohmann::json::object();
  auto pit = j.find("payload");
  const nlohmann::json& p = pit == j.end() ? kEmpty : *pit;
  if (!p.is_object()) throw Error(ErrorCode::InvalidFormat, "payload must be an object");

  auto& out = e.payload;
  switch (e.kind) {
    case EventKind::TypingBurst:
      out.chars_typed = read_count(p, "chars_typed");
      out.duration_ms = read_count(p, "duration_ms");
      break;
    case EventKind::Pause:
      out.duration_ms = read_count(p, "duration_ms");
      break;
    case EventKind::FileNav:
      out.open_files = read_count(p, "open_files");
      out.file_lines = read_count(p, "file_lines");
      break;
    case EventKind::CommandUse: {
      auto c = p.find("command");
      if (c == p.end() || !c->is_string()) throw Error(ErrorCode::InvalidFormat, "CommandUse needs command");
      auto cmd = parse_command(c->get<std::string>());
      if (!cmd) throw Error(ErrorCode::InvalidFormat, "unknown command '" + c->get<std::string>() + "'");
      out.command = *cmd;
      break;
    }
    case EventKind::Diagnostic:
      out.warnings = read_count(p, "warnings");
      out.errors = read_count(p, "errors");
      out.breakpoints = read_count(p, "breakpoints");
      break;
    case EventKind::EditApplied:
      out.lines_added = read_count(p, "lines_added");
      break;
    case EventKind::SuggestionRequested: {
      out.suggestion_id = read_count(p, "suggestion_id");
      out.prompt_length = read_count(p, "prompt_length");
      auto tc = p.find("task_complexity");
      if (tc != p.end()) {
        if (!tc->is_number()) throw Error(ErrorCode::InvalidFormat, "task_complexity must be a number");
        out.task_complexity = tc->get<double>();
        if (!(out.task_complexity >= 0.0 && out.task_complexity <= 1.0)) {
          throw Error(ErrorCode::InvalidFormat, "task_complexity outside [0,1]");
        }
      }
      break;
    }
    case EventKind::SuggestionShown:
      out.suggestion_id = read_count(p, "suggestion_id");
      out.suggestion_chars = read_count(p, "suggestion_chars");
      break;
    case EventKind::SuggestionAccepted:
      out.suggestion_id = read_count(p, "suggestion_id");
      break;
  }
  return e;
}

nlohmann::json event_to_json(const TelemetryEvent& e) {
  nlohmann::json p = nlohmann::json::object();
  const auto& in = e.payload;
  switch (e.kind) {
    case EventKind::TypingBurst:
      p["chars_typed"] = in.chars_typed;
      p["duration_ms"] = in.duration_ms;
      break;
    case EventKind::Pause:
      p["duration_ms"] = in.duration_ms;
      break;
    case EventKind::FileNav:
      p["open_files"] = in.open_files;
      p["file_lines"] = in.file_lines;
      break;
    case EventKind::CommandUse:
      p["command"] = to_string(in.command);
      break;
    case EventKind::Diagnostic:
      p["warnings"] = in.warnings;
      p["errors"] = in.errors;
      p["breakpoints"] = in.breakpoints;
      break;
    case EventKind::EditApplied:
      p["lines_added"] = in.lines_added;
      break;
    case EventKind::SuggestionRequested:
      p["suggestion_id"] = in.suggestion_id;
      p["prompt_length"] = in.prompt_length;
      p["task_complexity"] = in.task_complexity;
      break;
    case EventKind::SuggestionShown:
      p["suggestion_id"] = in.suggestion_id;
      p["suggestion_chars"] = in.suggestion_chars;
      break;
    case EventKind::SuggestionAccepted:
      p["suggestion_id"] = in.suggestion_id;
      break;
  }
  return {{"session_id", e.session_id},
          {"timestamp", e.timestamp},
          {"kind", to_string(e.kind)},
          {"payload", std::move(p)}};
}

JsonlReadResult read_events_jsonl(std::istream& in) {
  JsonlReadResult result;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      result.events.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception&) {
      ++result.malformed_lines;
    } catch (const Error&) {
      ++result.malformed_lines;
    }
  }
  return result;
}

void write_events_jsonl(std::ostream& out, std::span<const TelemetryEvent> events) {
  for (const auto& e : events) out << event_to_json(e).dump() << '\n';
}

std::vector<Resolution> advance_to(SessionState& state, TimestampMs now) {
  std::vector<Resolution> out;
  expire_pending(state, now, out);
  if (state.open_window && now >= state.open_window->window_end()) close_open_window(state);
  return out;
}

std::vector<Resolution> ingest_event(SessionState& state, const TelemetryEvent& e) {
  if (e.session_id != state.session_id) {
    throw Error(ErrorCode::InvalidFormat,
                "event for session '" + e.session_id + "' routed to '" + state.session_id + "'");
  }
  TimestampMs t = e.timestamp;
  if (state.last_activity) {
    if (t < *state.last_activity - state.config.out_of_order_tolerance_ms) {
      throw Error(ErrorCode::RejectOutOfOrder,
                  "event at " + std::to_string(t) + " precedes last activity " +
                      std::to_string(*state.last_activity));
    }
    t = std::max(t, *state.last_activity);
  }

  std::vector<Resolution> out;
  expire_pending(state, t, out);

  const TimestampMs bucket = floor_to_window(t);
  if (state.open_window && state.open_window->window_start != bucket) close_open_window(state);
  if (!state.open_window) state.open_window = make_window(state, bucket);
  BehaviorWindow& w = *state.open_window;
  const auto& p = e.payload;

  switch (e.kind) {
    case EventKind::TypingBurst: {
      w.chars_typed += p.chars_typed;
      const double secs = static_cast<double>(p.duration_ms) / 1000.0;
      w.typing_time_s = std::min(60.0, w.typing_time_s + secs);
      state.total_chars += p.chars_typed;
      state.total_typing_s += secs;
      break;
    }
    case EventKind::Pause:
      ++w.pause_count;
      break;
    case EventKind::FileNav:
      ++w.nav_events;
      w.open_files = p.open_files;
      w.file_lines = p.file_lines;
      break;
    case EventKind::CommandUse:
      switch (p.command) {
        case Command::Undo: ++w.undo_count; break;
        case Command::QuickFix: ++w.quick_fix_count; break;
        case Command::TerminalToggle: ++w.terminal_toggles; break;
        case Command::PaletteAction:
        case Command::Copy:
        case Command::Paste: ++w.palette_actions; break;
      }
      break;
    case EventKind::Diagnostic:
      w.warnings = p.warnings;
      w.errors = p.errors;
      w.breakpoints = p.breakpoints;
      break;
    case EventKind::EditApplied:
      w.lines_added += p.lines_added;
      break;
    case EventKind::SuggestionShown:
      ++state.suggestions_seen;
      state.pending.push_back({p.suggestion_id, t});
      break;
    case EventKind::SuggestionAccepted: {
      auto it = std::find_if(state.pending.begin(), state.pending.end(),
                             [&](const PendingSuggestion& s) { return s.suggestion_id == p.suggestion_id; });
      if (it != state.pending.end()) {
        out.push_back({it->suggestion_id, Label::Accepted, it->shown_at, t});
        ++state.accepted;
        state.pending.erase(it);
      }
      break;
    }
    case EventKind::SuggestionRequested:
      for (const auto& s : state.pending) {
        out.push_back({s.suggestion_id, Label::RejectedExplicit, s.shown_at, t});
        ++state.rejected;
      }
      state.pending.clear();
      break;
  }
  state.last_activity = t;
  return out;
}

std::optional<Label> label_suggestion(const TelemetryEvent& shown,
                                      std::span<const TelemetryEvent> later_events) {
  const auto id = shown.payload.suggestion_id;
  for (const auto& e : later_events) {
    if (e.timestamp - shown.timestamp >= kPassiveRejectMs) return Label::RejectedPassive;
    if (e.kind == EventKind::SuggestionAccepted && e.payload.suggestion_id == id) return Label::Accepted;
    if (e.kind == EventKind::SuggestionRequested) return Label::RejectedExplicit;
  }
  return std::nullopt;
}

}  // namespace pregate
