#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pregate/dataset.hpp"
#include "pregate/model.hpp"

namespace pregate {

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

struct ClassRates {
  double precision = 0.0;
  double recall = 0.0;
};

struct ConfusionReport {
  Confusion confusion;
  ClassRates accepted;  // positive class
  ClassRates rejected;  // negative class
};

// Rank statistic with ties credited 1/2. Throws Error{SingleClass}.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
// Average precision; tied scores form one threshold step. Throws Error{NoPositives}.
double pr_auc(std::span<const double> scores, std::span<const int> labels);
double balanced_accuracy(const Confusion& c);
// Zero when the denominator vanishes.
double mcc(const Confusion& c);
double cohen_kappa(const Confusion& c);
double brier(std::span<const double> scores, std::span<const int> labels);

// Predicted positive when score > tau.
ConfusionReport confusion_at(std::span<const double> scores, std::span<const int> labels, double tau);

struct MetricReport {
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double balanced_accuracy = 0.0;
  double mcc = 0.0;
  double kappa = 0.0;
  double brier = 0.0;
  double tau = 0.0;
  ConfusionReport at_tau;
  // Standard deviation over bootstrap resamples of the evaluation set.
  std::size_t bootstrap_resamples = 0;
  double roc_auc_bootstrap_sd = 0.0;
  double pr_auc_bootstrap_sd = 0.0;
};

MetricReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double tau,
                             std::size_t bootstrap_resamples = 1000, std::uint64_t seed = 0);

nlohmann::json to_json(const MetricReport& r);
// Two columns: metric,value.
void write_csv(std::ostream& out, const MetricReport& r);

enum class ImportanceMetric { RocAuc, PrAuc, NegLogLoss };

struct FeatureImportance {
  std::string feature;
  double mean_drop = 0.0;
  double sd_drop = 0.0;
};

// Ranked by mean drop, descending; ties keep feature order.
std::vector<FeatureImportance> permutation_importance(const AcceptanceModel& model, const LabeledData& data,
                                                      ImportanceMetric metric, std::size_t repeats,
                                                      std::uint64_t seed);

nlohmann::json to_json(const std::vector<FeatureImportance>& ranking);

}  // namespace pregate
