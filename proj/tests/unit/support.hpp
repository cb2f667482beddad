#pragma once

#include <random>
#include <string>
#include <vector>

#include "pregate/telemetry.hpp"

namespace testing_support {

using pregate::TelemetryEvent;

inline TelemetryEvent make_event(const std::string& sid, pregate::TimestampMs t, pregate::EventKind kind,
                                 pregate::EventPayload p = {}) {
  return TelemetryEvent{sid, t, kind, p};
}

inline TelemetryEvent typing(const std::string& sid, pregate::TimestampMs t, std::int64_t chars,
                             std::int64_t duration_ms) {
  pregate::EventPayload p;
  p.chars_typed = chars;
  p.duration_ms = duration_ms;
  return make_event(sid, t, pregate::EventKind::TypingBurst, p);
}

inline TelemetryEvent with_id(const std::string& sid, pregate::TimestampMs t, pregate::EventKind kind,
                              std::int64_t id) {
  pregate::EventPayload p;
  p.suggestion_id = id;
  return make_event(sid, t, kind, p);
}

// Random but well-formed event with a kind-appropriate payload.
inline TelemetryEvent random_event(std::mt19937_64& rng, const std::string& sid, pregate::TimestampMs t) {
  using pregate::EventKind;
  std::uniform_int_distribution<int> kind_d(0, 8);
  std::uniform_int_distribution<std::int64_t> small(0, 50);
  pregate::EventPayload p;
  const auto kind = static_cast<EventKind>(kind_d(rng));
  switch (kind) {
    case EventKind::TypingBurst:
      p.chars_typed = small(rng);
      p.duration_ms = small(rng) * 400;
      break;
    case EventKind::Pause: p.duration_ms = 2000 + small(rng) * 100; break;
    case EventKind::FileNav:
      p.open_files = small(rng);
      p.file_lines = small(rng) * 20;
      break;
    case EventKind::CommandUse: p.command = static_cast<pregate::Command>(std::uniform_int_distribution<int>(0, 5)(rng)); break;
    case EventKind::Diagnostic:
      p.warnings = small(rng);
      p.errors = small(rng);
      p.breakpoints = small(rng) % 4;
      break;
    case EventKind::EditApplied: p.lines_added = small(rng); break;
    case EventKind::SuggestionRequested:
      p.suggestion_id = small(rng);
      p.prompt_length = small(rng) * 10;
      p.task_complexity = std::uniform_real_distribution<double>(0, 1)(rng);
      break;
    case EventKind::SuggestionShown:
      p.suggestion_id = small(rng);
      p.suggestion_chars = small(rng);
      break;
    case EventKind::SuggestionAccepted: p.suggestion_id = small(rng); break;
  }
  return make_event(sid, t, kind, p);
}

}  // namespace testing_support
