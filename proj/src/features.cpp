#include "pregate/features.hpp"

#include "pregate/error.hpp"

namespace pregate {

std::vector<std::string> canonical_feature_names() {
  return {kFeatureNames.begin(), kFeatureNames.end()};
}

std::size_t feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureNames.size(); ++i) {
    if (kFeatureNames[i] == name) return i;
  }
  throw Error(ErrorCode::FeatureMismatch, "unknown feature '" + std::string(name) + "'");
}

double typing_efficiency(double chars_typed, double typing_time_s, double eps) {
  return chars_typed / (typing_time_s + eps);
}

double pause_frequency(double pauses, double typing_time_s, double eps) {
  return pauses / (typing_time_s + eps);
}

double acceptance_ratio(double accepted, double rejected, double eps) {
  return accepted / (accepted + rejected + eps);
}

double edit_density(double lines_added, double file_lines, double eps) {
  return lines_added / (file_lines + eps);
}

namespace {

const BehaviorWindow* joinable_window(const SessionState& state, TimestampMs at) {
  const BehaviorWindow* candidate = nullptr;
  if (state.open_window && state.open_window->window_end() <= at) {
    candidate = &*state.open_window;
  } else if (!state.closed_windows.empty()) {
    candidate = &state.closed_windows.back();
  }
  if (candidate == nullptr) return nullptr;
  const TimestampMs age = at - candidate->window_start;
  if (age < 0 || age > kStalenessHorizonMs) return nullptr;
  return candidate;
}

}  // namespace

FeatureVector build_feature_vector(const SessionState& state, double task_complexity, TimestampMs at) {
  FeatureVector fv;
  fv.values.assign(kFeatureCount, 0.0);
  auto set = [&](std::string_view name, double v) { fv.values[feature_index(name)] = v; };

  if (const BehaviorWindow* w = joinable_window(state, at)) {
    const auto chars = static_cast<double>(w->chars_typed);
    const auto pauses = static_cast<double>(w->pause_count);
    set("typing_speed", typing_efficiency(chars, w->typing_time_s));
    set("pause_count", pauses);
    set("typing_efficiency", typing_efficiency(chars, w->typing_time_s));
    set("pause_frequency", pause_frequency(pauses, w->typing_time_s));
    set("lines_added", static_cast<double>(w->lines_added));
    set("file_size", static_cast<double>(w->file_lines));
    set("edit_density", edit_density(static_cast<double>(w->lines_added), static_cast<double>(w->file_lines)));
    set("open_files", static_cast<double>(w->open_files));
    set("undo_count", static_cast<double>(w->undo_count));
    set("quick_fix_count", static_cast<double>(w->quick_fix_count));
    set("terminal_toggles", static_cast<double>(w->terminal_toggles));
    set("palette_actions", static_cast<double>(w->palette_actions));
    set("warnings", static_cast<double>(w->warnings));
    set("errors", static_cast<double>(w->errors));
    set("breakpoints", static_cast<double>(w->breakpoints));
  } else {
    fv.context_stale = true;
  }

  const auto acc = static_cast<double>(state.accepted);
  const auto rej = static_cast<double>(state.rejected);
  set("total_chars_typed", static_cast<double>(state.total_chars));
  set("task_complexity", task_complexity);
  set("session_accepted", acc);
  set("session_rejected", rej);
  set("acceptance_ratio", acceptance_ratio(acc, rej));
  set("total_typing_duration", state.total_typing_s);
  return fv;
}

}  // namespace pregate
