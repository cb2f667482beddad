#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pregate/telemetry.hpp"

namespace pregate {

inline constexpr double kRatioEpsilon = 1e-6;
inline constexpr TimestampMs kStalenessHorizonMs = 120'000;

// Canonical model input order. Stored verbatim in every model file.
inline constexpr std::array<std::string_view, 21> kFeatureNames{
    "typing_speed",     "total_chars_typed", "pause_count",     "typing_efficiency",
    "pause_frequency",  "lines_added",       "file_size",       "edit_density",
    "open_files",       "undo_count",        "quick_fix_count", "terminal_toggles",
    "palette_actions",  "warnings",          "errors",          "breakpoints",
    "task_complexity",  "session_accepted",  "session_rejected", "acceptance_ratio",
    "total_typing_duration",
};

inline constexpr std::size_t kFeatureCount = kFeatureNames.size();

std::vector<std::string> canonical_feature_names();

// Index of a canonical feature; throws Error{FeatureMismatch} for unknown names.
std::size_t feature_index(std::string_view name);

struct FeatureVector {
  std::vector<double> values;  // kFeatureCount entries in kFeatureNames order
  bool context_stale = false;

  double operator[](std::string_view name) const { return values[feature_index(name)]; }
  bool operator==(const FeatureVector&) const = default;
};

double typing_efficiency(double chars_typed, double typing_time_s, double eps = kRatioEpsilon);
double pause_frequency(double pauses, double typing_time_s, double eps = kRatioEpsilon);
double acceptance_ratio(double accepted, double rejected, double eps = kRatioEpsilon);
double edit_density(double lines_added, double file_lines, double eps = kRatioEpsilon);

// Window fields come from the most recent closed window starting within
// kStalenessHorizonMs of `at`. An open window that already ended by `at` counts
// as closed. Without a fresh window those fields are zero and context_stale is set.
FeatureVector build_feature_vector(const SessionState& state, double task_complexity, TimestampMs at);

}  // namespace pregate
