#include "pregate/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "pregate/error.hpp"

namespace pregate {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

double sample_sd(std::span<const double> xs) {
  std::vector<double> v;
  for (double x : xs) {
    if (std::isfinite(x)) v.push_back(x);
  }
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const auto idx = order_by_score(scores, false);
  double n_pos = 0.0;
  double n_neg = 0.0;
  double credit = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double p = 0.0;
    double q = 0.0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? p : q) += 1.0;
      ++j;
    }
    credit += p * n_neg + 0.5 * p * q;
    n_pos += p;
    n_neg += q;
    i = j;
  }
  if (n_pos == 0.0 || n_neg == 0.0) throw Error(ErrorCode::SingleClass, "ROC-AUC needs both classes");
  return credit / (n_pos * n_neg);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0.0) throw Error(ErrorCode::NoPositives, "average precision needs a positive");
  const auto idx = order_by_score(scores, true);
  double tp = 0.0;
  double fp = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double p = 0.0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? p : fp) += 1.0;
      ++j;
    }
    tp += p;
    if (p > 0.0) ap += (p / n_pos) * (tp / (tp + fp));
    i = j;
  }
  return ap;
}

double balanced_accuracy(const Confusion& c) {
  const double pos = static_cast<double>(c.tp + c.fn);
  const double neg = static_cast<double>(c.tn + c.fp);
  const double tpr = pos > 0 ? static_cast<double>(c.tp) / pos : 0.0;
  const double tnr = neg > 0 ? static_cast<double>(c.tn) / neg : 0.0;
  if (pos == 0 || neg == 0) return pos > 0 ? tpr : tnr;
  return 0.5 * (tpr + tnr);
}

double mcc(const Confusion& c) {
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn);
  const double fn = static_cast<double>(c.fn);
  const double denom = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / denom;
}

double cohen_kappa(const Confusion& c) {
  const double n = static_cast<double>(c.total());
  if (n == 0.0) return 0.0;
  const double po = static_cast<double>(c.tp + c.tn) / n;
  const double pe = (static_cast<double>(c.tp + c.fp) * static_cast<double>(c.tp + c.fn) +
                     static_cast<double>(c.tn + c.fn) * static_cast<double>(c.tn + c.fp)) /
                    (n * n);
  if (pe == 1.0) return 0.0;
  return (po - pe) / (1.0 - pe);
}

double brier(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  if (scores.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = scores[i] - labels[i];
    s += d * d;
  }
  return s / static_cast<double>(scores.size());
}

ConfusionReport confusion_at(std::span<const double> scores, std::span<const int> labels, double tau) {
  check_lengths(scores, labels);
  ConfusionReport r;
  auto& c = r.confusion;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > tau;
    if (labels[i] == 1) (predicted ? c.tp : c.fn) += 1;
    else (predicted ? c.fp : c.tn) += 1;
  }
  auto ratio = [](std::int64_t a, std::int64_t b) { return b > 0 ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  r.accepted = {ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn)};
  r.rejected = {ratio(c.tn, c.tn + c.fn), ratio(c.tn, c.tn + c.fp)};
  return r;
}

MetricReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double tau,
                             std::size_t bootstrap_resamples, std::uint64_t seed) {
  MetricReport r;
  r.roc_auc = roc_auc(scores, labels);
  r.pr_auc = pr_auc(scores, labels);
  r.at_tau = confusion_at(scores, labels, tau);
  r.balanced_accuracy = balanced_accuracy(r.at_tau.confusion);
  r.mcc = mcc(r.at_tau.confusion);
  r.kappa = cohen_kappa(r.at_tau.confusion);
  r.brier = brier(scores, labels);
  r.tau = tau;
  r.bootstrap_resamples = bootstrap_resamples;
  if (bootstrap_resamples > 0) {
    const auto roc = kernels::parallel::bootstrap(scores, labels, &roc_auc, bootstrap_resamples, seed);
    const auto pr = kernels::parallel::bootstrap(scores, labels, &pr_auc, bootstrap_resamples, seed);
    r.roc_auc_bootstrap_sd = sample_sd(roc);
    r.pr_auc_bootstrap_sd = sample_sd(pr);
  }
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  const auto& c = r.at_tau.confusion;
  return {{"roc_auc", r.roc_auc},
          {"pr_auc", r.pr_auc},
          {"balanced_accuracy", r.balanced_accuracy},
          {"mcc", r.mcc},
          {"kappa", r.kappa},
          {"brier", r.brier},
          {"tau", r.tau},
          {"confusion", {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}},
          {"accepted", {{"precision", r.at_tau.accepted.precision}, {"recall", r.at_tau.accepted.recall}}},
          {"rejected", {{"precision", r.at_tau.rejected.precision}, {"recall", r.at_tau.rejected.recall}}},
          {"bootstrap", {{"resamples", r.bootstrap_resamples},
                         {"roc_auc_sd", r.roc_auc_bootstrap_sd},
                         {"pr_auc_sd", r.pr_auc_bootstrap_sd}}}};
}

void write_csv(std::ostream& out, const MetricReport& r) {
  const auto& c = r.at_tau.confusion;
  out << "metric,value\n";
  auto row = [&](const char* name, auto v) { out << name << ',' << v << '\n'; };
  const auto old = out.precision(10);
  row("roc_auc", r.roc_auc);
  row("roc_auc_bootstrap_sd", r.roc_auc_bootstrap_sd);
  row("pr_auc", r.pr_auc);
  row("pr_auc_bootstrap_sd", r.pr_auc_bootstrap_sd);
  row("balanced_accuracy", r.balanced_accuracy);
  row("mcc", r.mcc);
  row("kappa", r.kappa);
  row("brier", r.brier);
  row("tau", r.tau);
  row("tp", c.tp);
  row("fp", c.fp);
  row("tn", c.tn);
  row("fn", c.fn);
  row("accepted_precision", r.at_tau.accepted.precision);
  row("accepted_recall", r.at_tau.accepted.recall);
  row("rejected_precision", r.at_tau.rejected.precision);
  row("rejected_recall", r.at_tau.rejected.recall);
  out.precision(old);
}

std::vector<FeatureImportance> permutation_importance(const AcceptanceModel& model, const LabeledData& data,
                                                      ImportanceMetric metric, std::size_t repeats,
                                                      std::uint64_t seed) {
  if (data.rows < 50) throw Error(ErrorCode::TooFewRecords, "permutation importance needs at least 50 records");
  if (repeats == 0) throw Error(ErrorCode::InvalidConfig, "repeats must be positive");
  kernels::Scorer scorer;
  switch (metric) {
    case ImportanceMetric::RocAuc: scorer = &roc_auc; break;
    case ImportanceMetric::PrAuc: scorer = &pr_auc; break;
    case ImportanceMetric::NegLogLoss:
      scorer = [](std::span<const double> s, std::span<const int> y) {
        return -weighted_bce_mean(s, y, ClassWeights{});
      };
      break;
  }
  const kernels::PredictBatch predict = [&model](const kernels::MatrixView& x, std::span<double> out) {
    const auto p = model.predict_proba(x);
    std::copy(p.begin(), p.end(), out.begin());
  };
  const auto result = kernels::parallel::permutation_drops(kernels::MatrixView{data.x, data.rows, data.cols},
                                                           data.y, predict, scorer, repeats, seed);
  std::vector<FeatureImportance> ranking;
  for (std::size_t f = 0; f < data.cols; ++f) {
    ranking.push_back({model.feature_names()[f], result.mean_drop[f], sample_sd(result.drops[f])});
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const auto& a, const auto& b) { return a.mean_drop > b.mean_drop; });
  return ranking;
}

nlohmann::json to_json(const std::vector<FeatureImportance>& ranking) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& f : ranking) out.push_back({{"feature", f.feature}, {"mean_drop", f.mean_drop}, {"sd_drop", f.sd_drop}});
  return out;
}

}  // namespace pregate
