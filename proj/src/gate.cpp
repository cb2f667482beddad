#include "pregate/gate.hpp"

#include <cmath>
#include <limits>

#include "pregate/error.hpp"

namespace pregate {

std::string_view to_string(Decision d) { return d == Decision::Trigger ? "trigger" : "suppress"; }

std::string_view to_string(DecisionReason r) {
  switch (r) {
    case DecisionReason::AboveThreshold: return "above_threshold";
    case DecisionReason::BelowThreshold: return "below_threshold";
    case DecisionReason::FailOpen: return "fail_open";
  }
  return "fail_open";
}

ThresholdSelection select_threshold(std::span<const double> scores, std::span<const int> labels,
                                    double recall_floor) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
  std::size_t positives = 0;
  for (int y : labels) positives += (y == 1);
  if (positives == 0) throw Error(ErrorCode::NoPositives, "validation set has no accepted records");

  auto recall_at = [&](double tau) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) hit += (labels[i] == 1 && scores[i] > tau);
    return static_cast<double>(hit) / static_cast<double>(positives);
  };

  // Recall is non-increasing in tau, so the first qualifying point from the top is the answer.
  for (int k = 50; k >= 1; --k) {
    const double tau = k / 100.0;
    const double r = recall_at(tau);
    if (r >= recall_floor) return {tau, r, true};
  }
  return {0.01, recall_at(0.01), false};
}

ThresholdSelection select_threshold(const AcceptanceModel& model, const LabeledData& validation,
                                    double recall_floor) {
  const auto scores = model.predict_proba(validation);
  return select_threshold(scores, validation.y, recall_floor);
}

GateDecision decide_from_score(double p_accept, double tau) noexcept {
  if (!std::isfinite(p_accept) || !std::isfinite(tau)) {
    return {Decision::Trigger, p_accept, tau, DecisionReason::FailOpen};
  }
  if (p_accept > tau) return {Decision::Trigger, p_accept, tau, DecisionReason::AboveThreshold};
  return {Decision::Suppress, p_accept, tau, DecisionReason::BelowThreshold};
}

GateDecision should_trigger(const AcceptanceModel& model, std::span<const double> x, double tau) noexcept {
  try {
    return decide_from_score(model.predict_proba(x), tau);
  } catch (...) {
    return {Decision::Trigger, std::numeric_limits<double>::quiet_NaN(), tau, DecisionReason::FailOpen};
  }
}

}  // namespace pregate
