#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pregate/features.hpp"
#include "pregate/telemetry.hpp"

namespace pregate {

struct SuggestionRecord {
  FeatureVector x;
  int y = 0;  // 1 accepted, 0 rejected
  TimestampMs timestamp = 0;
  std::string session_id;
  std::int64_t suggestion_id = 0;
  std::int64_t prompt_length = 0;
  std::int64_t suggestion_chars = 0;
  std::int64_t decision_latency_ms = 0;

  bool operator==(const SuggestionRecord&) const = default;
};

nlohmann::json record_to_json(const SuggestionRecord& r);
// Throws Error{InvalidFormat}; x must have kFeatureCount entries.
SuggestionRecord record_from_json(const nlohmann::json& j);

std::vector<SuggestionRecord> read_records_jsonl(std::istream& in);
void write_records_jsonl(std::ostream& out, std::span<const SuggestionRecord> records);

struct RecordBuildStats {
  std::size_t requests = 0;
  std::size_t labeled = 0;
  std::size_t pending = 0;        // stream ended before the label was final
  std::size_t never_shown = 0;    // requested but no SuggestionShown followed
  std::size_t rejected_events = 0;
};

// Streams each session's events through telemetry and features. A record is
// emitted for every SuggestionRequested whose shown suggestion reached a final
// label; its features are the snapshot taken at request time.
std::vector<SuggestionRecord> build_records(std::span<const TelemetryEvent> events,
                                            RecordBuildStats* stats = nullptr);

// Dense row-major design matrix with 0/1 labels.
struct LabeledData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<int> y;

  std::span<const double> row(std::size_t i) const { return {x.data() + i * cols, cols}; }
  std::size_t positives() const;
};

LabeledData to_labeled(std::span<const SuggestionRecord> records);
LabeledData subset(const LabeledData& data, std::span<const std::size_t> indices);

struct SplitFractions {
  double train = 0.64;
  double validation = 0.16;
  double test = 0.20;
};

enum class SplitMode { ByRecord, BySession };

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  SplitFractions fractions;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::ByRecord;
};

// Largest-remainder apportionment of `total` across weights.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& weights);

// Stratified by label. Split sizes are floor-then-largest-remainder of n; each
// split's positive count is the same apportionment applied to the positives, so
// every split's positive count is within one record of size * global_rate.
// Throws Error{TooFewRecords} when a class cannot appear in every split.
Split stratified_split(std::span<const int> labels, SplitFractions fractions, std::uint64_t seed);

// Whole sessions go to one split; sessions are dealt in shuffled order until
// each split reaches its target size. Stratification is not enforced.
Split session_split(std::span<const SuggestionRecord> records, SplitFractions fractions, std::uint64_t seed);

nlohmann::json split_to_json(const Split& s);
Split split_from_json(const nlohmann::json& j);

struct ClassWeights {
  double negative = 1.0;  // w0
  double positive = 1.0;  // w1

  double for_label(int y) const { return y == 1 ? positive : negative; }
};

// w_y = n / (2 n_y). Throws Error{SingleClass} if a class is absent.
ClassWeights class_weights(std::span<const int> labels);

}  // namespace pregate
