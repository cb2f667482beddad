#pragma once

#include <span>
#include <string_view>

#include "pregate/dataset.hpp"
#include "pregate/features.hpp"
#include "pregate/model.hpp"

namespace pregate {

enum class Decision { Trigger, Suppress };
enum class DecisionReason { AboveThreshold, BelowThreshold, FailOpen };

std::string_view to_string(Decision d);
std::string_view to_string(DecisionReason r);

struct GateDecision {
  Decision decision = Decision::Trigger;
  double p_accept = 0.0;  // NaN when reason is FailOpen and no score was produced
  double tau = 0.0;
  DecisionReason reason = DecisionReason::FailOpen;
};

struct ThresholdSelection {
  double tau = 0.01;
  double recall = 0.0;      // accepted-class recall at tau
  bool floor_met = false;   // false: no grid point reached the floor, tau fell back to 0.01
};

// Grid 0.01..0.50 step 0.01; largest tau whose accepted-class recall (score >
// tau) is at least recall_floor. Throws Error{NoPositives}.
ThresholdSelection select_threshold(std::span<const double> scores, std::span<const int> labels,
                                    double recall_floor = 0.95);
ThresholdSelection select_threshold(const AcceptanceModel& model, const LabeledData& validation,
                                    double recall_floor = 0.95);

// Trigger iff p > tau (tau in [0,1]). Never throws: any failure while scoring
// yields Trigger with reason FailOpen.
GateDecision should_trigger(const AcceptanceModel& model, std::span<const double> x, double tau) noexcept;
inline GateDecision should_trigger(const AcceptanceModel& model, const FeatureVector& x, double tau) noexcept {
  return should_trigger(model, std::span<const double>(x.values), tau);
}

// Pure comparison used by should_trigger once a score exists.
GateDecision decide_from_score(double p_accept, double tau) noexcept;

}  // namespace pregate
